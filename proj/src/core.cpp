#include "jgf/core.hpp"

namespace jgf {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyResult: return "EmptyResult";
    case ErrorKind::RangeTooShort: return "RangeTooShort";
    case ErrorKind::CondMissing: return "CondMissing";
    case ErrorKind::CondUnexpected: return "CondUnexpected";
    case ErrorKind::EmptyCloud: return "EmptyCloud";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::DegenerateEnsemble: return "DegenerateEnsemble";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptySource: return "EmptySource";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::GroupSizeMismatch: return "GroupSizeMismatch";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Format: return "FormatError";
  }
  return "Unknown";
}

}  // namespace jgf
