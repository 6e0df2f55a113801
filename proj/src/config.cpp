#include "jgf/config.hpp"

#include "jgf/io.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace jgf {

SystemKind parse_system(const std::string& name) {
  if (name == "lorenz63" || name == "lorenz") return SystemKind::Lorenz63;
  if (name == "ks") return SystemKind::Ks;
  fail(ErrorKind::Config, "unknown system '" + name + "'");
}

const char* to_string(SystemKind s) noexcept { return s == SystemKind::Lorenz63 ? "lorenz63" : "ks"; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    fail(ErrorKind::Config, key + ": expected a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  // accept integral values written in scientific notation (e.g. 1e5)
  const double x = to_double(key, v);
  if (x != std::floor(x) || std::abs(x) > 9.0e15)
    fail(ErrorKind::Config, key + ": expected an integer, got '" + v + "'");
  return static_cast<long long>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(ErrorKind::Config, key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorKind::Config, key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double v) { return format_double(v); }
std::string fmt(Index v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define JGF_DOUBLE(NAME, FIELD)                                                                   \
  Key {                                                                                           \
    NAME, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_double(k, v); }, \
        [](const RunConfig& c) { return fmt(c.FIELD); }                                           \
  }
#define JGF_INDEX(NAME, FIELD)                                                                    \
  Key {                                                                                           \
    NAME, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_integer(k, v); }, \
        [](const RunConfig& c) { return fmt(static_cast<Index>(c.FIELD)); }                       \
  }
#define JGF_BOOL(NAME, FIELD)                                                                     \
  Key {                                                                                           \
    NAME, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_bool(k, v); }, \
        [](const RunConfig& c) { return fmt(c.FIELD); }                                           \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"run.system", [](RunConfig& c, const std::string&, const std::string& v) { c.system = parse_system(v); },
       [](const RunConfig& c) { return std::string(to_string(c.system)); }},
      {"run.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
       [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string(); }},
      {"run.output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
       [](const RunConfig& c) { return c.output_dir.string(); }},
      JGF_INDEX("run.threads", threads),

      JGF_DOUBLE("dynamics.dt", dt),
      JGF_INDEX("dynamics.steps", steps),
      JGF_DOUBLE("dynamics.transient", transient),
      JGF_INDEX("dynamics.substeps", substeps),
      JGF_DOUBLE("lorenz.sigma", lorenz.sigma),
      JGF_DOUBLE("lorenz.rho", lorenz.rho),
      JGF_DOUBLE("lorenz.beta", lorenz.beta),
      {"lorenz.ic",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto items = split_list(v);
         if (items.size() != 3) fail(ErrorKind::Config, k + ": expected three comma-separated values");
         for (int i = 0; i < 3; ++i) c.lorenz_ic(i) = to_double(k, items[i]);
       },
       [](const RunConfig& c) {
         return fmt(c.lorenz_ic(0)) + "," + fmt(c.lorenz_ic(1)) + "," + fmt(c.lorenz_ic(2));
       }},
      JGF_DOUBLE("ks.x_min", ks_grid.x_min),
      JGF_DOUBLE("ks.x_max", ks_grid.x_max),
      JGF_INDEX("ks.n_points", ks_grid.n_points),

      JGF_INDEX("windows.count", window_count),
      JGF_DOUBLE("windows.train_start", train_start),
      JGF_DOUBLE("windows.train_end", train_end),
      {"windows.sampling",
       [](RunConfig& c, const std::string&, const std::string& v) { c.sampling = parse_sampling(v); },
       [](const RunConfig& c) { return std::string(to_string(c.sampling)); }},

      {"model.kind", [](RunConfig& c, const std::string&, const std::string& v) { c.model.kind = parse_model_kind(v); },
       [](const RunConfig& c) { return std::string(to_string(c.model.kind)); }},
      JGF_INDEX("model.n", model.n),
      JGF_INDEX("model.latent_dim", model.latent_dim),
      {"model.hidden",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.hidden_dims.clear();
         for (const auto& item : split_list(v)) c.model.hidden_dims.push_back(to_integer(k, item));
       },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.model.hidden_dims.size(); ++i)
           s += (i ? "," : "") + std::to_string(c.model.hidden_dims[i]);
         return s;
       }},
      JGF_DOUBLE("model.kl_weight", model.kl_weight),

      JGF_INDEX("train.epochs", train.epochs),
      JGF_INDEX("train.batch_size", train.batch_size),
      JGF_DOUBLE("train.lr", train.lr),
      JGF_DOUBLE("train.lr_decay_gamma", train.lr_decay_gamma),
      JGF_BOOL("train.normalize", train.normalize),

      {"forecast.mode", [](RunConfig& c, const std::string&, const std::string& v) { c.mode = parse_forecast_mode(v); },
       [](const RunConfig& c) { return std::string(to_string(c.mode)); }},
      JGF_INDEX("forecast.n_samples", sieve.n_samples),
      JGF_INDEX("forecast.k", sieve.k),
      JGF_BOOL("forecast.resample", sieve.resample),
      JGF_INDEX("forecast.refresh_every", sieve.refresh_every),
      JGF_BOOL("forecast.use_index", sieve.use_index),
      JGF_INDEX("forecast.horizon", horizon),
      JGF_INDEX("forecast.n_ics", n_ics),
      JGF_DOUBLE("forecast.test_start", test_start),
      JGF_DOUBLE("forecast.test_end", test_end),
      JGF_BOOL("forecast.oracle", oracle),
      JGF_DOUBLE("forecast.oracle_tail_noise", oracle_tail_noise),
      JGF_DOUBLE("forecast.oracle_head_noise", oracle_head_noise),
      JGF_INDEX("forecast.long_horizon", long_horizon),
      JGF_INDEX("forecast.long_refresh_every", long_refresh_every),
      JGF_BOOL("forecast.ensemble_csv", ensemble_csv),
      JGF_INDEX("forecast.latent_iters", latent.max_iters),
      JGF_DOUBLE("forecast.latent_step", latent.step_size),
      JGF_DOUBLE("forecast.latent_tol", latent.tol),

      JGF_DOUBLE("uq.epsilon", uq.sinkhorn.epsilon),
      JGF_DOUBLE("uq.epsilon_scale", uq.sinkhorn.epsilon_scale),
      JGF_INDEX("uq.sinkhorn_iters", uq.sinkhorn.max_iters),
      JGF_DOUBLE("uq.sinkhorn_tol", uq.sinkhorn.convergence_tol),
      JGF_DOUBLE("uq.sinkhorn_overrelaxation", uq.sinkhorn.overrelaxation),
      {"uq.weighting", [](RunConfig& c, const std::string&, const std::string& v) { c.uq.weighting = parse_weighting(v); },
       [](const RunConfig& c) { return std::string(to_string(c.uq.weighting)); }},
      JGF_DOUBLE("uq.inverse_distance_delta", uq.inverse_distance_delta),
      JGF_INDEX("uq.max_runs", uq_max_runs),
      JGF_BOOL("uq.allow_conditional", uq_allow_conditional),

      JGF_INDEX("eval.bins", bins),
      JGF_DOUBLE("eval.tail_fraction", tail_fraction),
      {"eval.cv_scheme", [](RunConfig& c, const std::string&, const std::string& v) { c.cv_scheme = parse_cv_scheme(v); },
       [](const RunConfig& c) { return std::string(to_string(c.cv_scheme)); }},
      JGF_INDEX("eval.group_size", group_size),
      JGF_INDEX("eval.clim_pairs", clim_pairs),
      JGF_INDEX("eval.lead_check", lead_check),
  };
  return table;
}

#undef JGF_DOUBLE
#undef JGF_INDEX
#undef JGF_BOOL

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string k = trim(key);
  const std::string v = trim(value);
  for (const auto& entry : keys()) {
    if (k == entry.name) {
      entry.set(*this, k, v);
      return;
    }
  }
  fail(ErrorKind::Config, "unknown configuration key '" + k + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& entry : keys()) out.emplace_back(entry.name, entry.get(*this));
  return out;
}

std::uint64_t RunConfig::root_seed() const {
  if (!seed) fail(ErrorKind::Config, "run.seed is not set (use --seed or a preset)");
  return *seed;
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::Config, msg);
  };
  check(seed.has_value(), "run.seed is mandatory (use --seed, a preset, or run.seed in the config)");
  check(threads >= 1, "run.threads must be >= 1");
  check(dt > 0.0, "dynamics.dt must be positive");
  check(steps >= 1, "dynamics.steps must be >= 1");
  check(transient >= 0.0, "dynamics.transient must be >= 0");
  check(substeps >= 1, "dynamics.substeps must be >= 1");
  if (system == SystemKind::Lorenz63) {
    lorenz.validate();
  } else {
    ks_grid.validate();
  }

  ModelConfig mc = model;
  mc.d = dim();
  mc.validate();
  TrainConfig tc = train;
  tc.validate();

  const double span = static_cast<double>(steps) * dt - transient;
  check(span > 0.0, "dynamics.transient leaves no trajectory");
  check(train_start >= 0.0 && train_end > train_start, "windows.train_start must be < windows.train_end");
  check(train_end <= span + 1e-9, "training range ends after the simulated span (" + format_double(span) + ")");
  check(window_count >= 0, "windows.count must be >= 0");
  check(sampling == Sampling::AllContiguous || window_count > 0, "uniform sampling needs windows.count > 0");
  const double window_span = static_cast<double>(mc.window_length()) * dt;
  check(train_end - train_start >= window_span, "training range is shorter than one window");

  check(sieve.n_samples >= 1, "forecast.n_samples must be >= 1");
  check(sieve.k >= 1 && sieve.k <= sieve.n_samples, "forecast.k must lie in [1, forecast.n_samples]");
  check(sieve.refresh_every >= 0 && long_refresh_every >= 0, "refresh intervals must be >= 0");
  check(horizon >= 0 && long_horizon >= 0, "forecast horizons must be >= 0");
  check(n_ics >= 0, "forecast.n_ics must be >= 0");
  latent.validate();
  check(test_start >= train_end, "forecast.test_start must not precede windows.train_end (train/test overlap)");
  check(test_end > test_start && test_end <= span + 1e-9, "forecast test range must lie inside the simulated span");
  const double segment = static_cast<double>(mc.history_length() + horizon) * dt;
  check(static_cast<double>(n_ics) * segment <= test_end - test_start,
        "test range cannot hold " + std::to_string(n_ics) + " non-overlapping forecast segments");
  check(static_cast<double>(long_horizon) * dt <= span - train_end,
        "forecast.long_horizon runs past the end of the simulated span");
  if (oracle) {
    check(mc.history_length() <= 1 || mode == ForecastMode::Sieve, "oracle mode supports sieving only");
    check(oracle_tail_noise >= 0.0 && oracle_head_noise >= 0.0, "oracle noise levels must be >= 0");
  }
  if (mode != ForecastMode::Sieve)
    check(!mc.conditional(), "latent forecasting needs model.kind = uncond-joint");

  uq.sinkhorn.validate();
  check(uq.inverse_distance_delta > 0.0, "uq.inverse_distance_delta must be positive");
  check(uq_max_runs >= 0, "uq.max_runs must be >= 0");

  check(bins >= 2, "eval.bins must be >= 2");
  check(tail_fraction >= 0.0 && tail_fraction <= 0.5, "eval.tail_fraction must lie in [0, 0.5]");
  check(group_size >= 1, "eval.group_size must be >= 1");
  check(clim_pairs >= 1, "eval.clim_pairs must be >= 1");
  check(lead_check >= 1, "eval.lead_check must be >= 1");
}

std::vector<std::string> preset_names() {
  return {"lorenz-desk", "lorenz-paper", "ks-desk", "ks-full", "lorenz-smoke", "ks-smoke"};
}

void apply_preset(RunConfig& cfg, const std::string& name) {
  std::vector<std::pair<std::string, std::string>> kv;
  if (name == "lorenz-desk") {
    kv = {{"run.system", "lorenz63"},     {"run.seed", "20240601"},      {"dynamics.dt", "0.025"},
          {"dynamics.steps", "200000"},   {"dynamics.transient", "25"},  {"windows.count", "100000"},
          {"windows.train_start", "0"},   {"windows.train_end", "2500"}, {"model.kind", "uncond-joint"},
          {"model.n", "2"},               {"model.latent_dim", "4"},     {"model.hidden", "256,256"},
          {"model.kl_weight", "0.01"},    {"train.epochs", "100"},       {"train.batch_size", "500"},
          {"train.lr", "1e-3"},           {"train.lr_decay_gamma", "0.97"}, {"forecast.n_samples", "10000"},
          {"forecast.k", "64"},           {"forecast.horizon", "400"},   {"forecast.n_ics", "100"},
          {"forecast.test_start", "2500"}, {"forecast.test_end", "4975"}, {"forecast.long_horizon", "20000"},
          {"forecast.long_refresh_every", "50"}, {"uq.max_runs", "100"}};
  } else if (name == "lorenz-paper") {
    kv = {{"run.system", "lorenz63"},      {"run.seed", "20240601"},       {"dynamics.dt", "0.025"},
          {"dynamics.steps", "4001000"},   {"dynamics.transient", "25"},   {"windows.count", "1000000"},
          {"windows.train_start", "0"},    {"windows.train_end", "25000"}, {"model.kind", "uncond-joint"},
          {"model.n", "2"},                {"model.latent_dim", "4"},      {"model.hidden", "256,256"},
          {"model.kl_weight", "1"},        {"train.epochs", "500"},        {"train.batch_size", "500"},
          {"train.lr", "1e-4"},            {"train.lr_decay_gamma", "0.999"}, {"forecast.n_samples", "50000"},
          {"forecast.k", "64"},            {"forecast.horizon", "400"},    {"forecast.n_ics", "500"},
          {"forecast.test_start", "25000"}, {"forecast.test_end", "100000"}, {"forecast.long_horizon", "60000"},
          {"uq.max_runs", "500"}};
  } else if (name == "ks-desk") {
    // 64-node grid: a reduced, non-paper-scale variant of the 199-node system
    kv = {{"run.system", "ks"},           {"run.seed", "20240601"},      {"ks.n_points", "64"},
          {"dynamics.dt", "0.1"},         {"dynamics.substeps", "10"},   {"dynamics.steps", "61000"},
          {"dynamics.transient", "100"},  {"windows.count", "24990"},    {"windows.sampling", "all-contiguous"},
          {"windows.train_start", "0"},   {"windows.train_end", "2500"}, {"model.kind", "uncond-joint"},
          {"model.n", "2"},               {"model.latent_dim", "16"},    {"model.hidden", "256,256"},
          {"model.kl_weight", "0.01"},    {"train.epochs", "40"},        {"train.batch_size", "500"},
          {"train.lr", "1e-3"},           {"train.lr_decay_gamma", "0.97"}, {"forecast.n_samples", "10000"},
          {"forecast.k", "64"},           {"forecast.horizon", "100"},   {"forecast.n_ics", "20"},
          {"forecast.test_start", "2500"}, {"forecast.test_end", "6000"}, {"forecast.long_horizon", "2000"},
          {"forecast.long_refresh_every", "50"}, {"uq.max_runs", "20"}};
  } else if (name == "ks-full") {
    // explicit AB2 on the 199-node grid needs dt/500 internally to stay stable
    kv = {{"run.system", "ks"},             {"run.seed", "20240601"},       {"ks.n_points", "199"},
          {"dynamics.dt", "0.1"},           {"dynamics.substeps", "500"},   {"dynamics.steps", "1062500"},
          {"dynamics.transient", "100"},    {"windows.count", "999999"},    {"windows.sampling", "all-contiguous"},
          {"windows.train_start", "0"},     {"windows.train_end", "100000"}, {"model.kind", "uncond-joint"},
          {"model.n", "2"},                 {"model.latent_dim", "32"},     {"model.hidden", "256,256"},
          {"model.kl_weight", "1"},         {"train.epochs", "500"},        {"train.batch_size", "500"},
          {"train.lr", "1e-4"},             {"train.lr_decay_gamma", "0.999"}, {"forecast.n_samples", "50000"},
          {"forecast.k", "64"},             {"forecast.horizon", "100"},    {"forecast.n_ics", "500"},
          {"forecast.test_start", "100000"}, {"forecast.test_end", "106150"}, {"uq.max_runs", "500"}};
  } else if (name == "lorenz-smoke") {
    kv = {{"run.system", "lorenz63"},   {"run.seed", "7"},             {"dynamics.dt", "0.025"},
          {"dynamics.steps", "4000"},   {"dynamics.transient", "5"},   {"windows.count", "1000"},
          {"windows.train_start", "0"}, {"windows.train_end", "50"},   {"model.kind", "uncond-joint"},
          {"model.n", "2"},             {"model.latent_dim", "2"},     {"model.hidden", "16"},
          {"model.kl_weight", "0.1"},   {"train.epochs", "3"},         {"train.batch_size", "100"},
          {"train.lr", "1e-3"},         {"forecast.n_samples", "400"}, {"forecast.k", "8"},
          {"forecast.horizon", "20"},   {"forecast.n_ics", "4"},       {"forecast.test_start", "50"},
          {"forecast.test_end", "95"},  {"forecast.long_horizon", "200"}, {"forecast.long_refresh_every", "50"},
          {"eval.bins", "20"},          {"eval.clim_pairs", "1000"}};
  } else if (name == "ks-smoke") {
    kv = {{"run.system", "ks"},         {"run.seed", "11"},            {"ks.n_points", "64"},
          {"dynamics.dt", "0.1"},       {"dynamics.substeps", "4"},    {"dynamics.steps", "1500"},
          {"dynamics.transient", "20"}, {"windows.count", "500"},      {"windows.sampling", "all-contiguous"},
          {"windows.train_start", "0"}, {"windows.train_end", "60"},   {"model.kind", "uncond-joint"},
          {"model.n", "2"},             {"model.latent_dim", "4"},     {"model.hidden", "16"},
          {"model.kl_weight", "0.1"},   {"train.epochs", "2"},         {"train.batch_size", "100"},
          {"train.lr", "1e-3"},         {"forecast.n_samples", "300"}, {"forecast.k", "8"},
          {"forecast.horizon", "10"},   {"forecast.n_ics", "3"},       {"forecast.test_start", "60"},
          {"forecast.test_end", "130"}, {"forecast.long_horizon", "100"}, {"eval.bins", "20"},
          {"eval.clim_pairs", "1000"}};
  } else {
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    fail(ErrorKind::Config, "unknown preset '" + name + "' (known: " + names + ")");
  }
  for (const auto& [k, v] : kv) cfg.set(k, v);
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config '" + path.string() + "'");
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config, path.string() + ":" + std::to_string(lineno) + ": expected 'section.key = value'");
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) fail(ErrorKind::Config, "override '" + assignment + "' is not key=value");
  cfg.set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

}  // namespace jgf
