// Pipeline stages behind the `jgf` command-line tool. Each stage reads the
// previous stage's files from cfg.output_dir and writes its own next to them.
//
//   simulate      trajectory.jctr, trajectory.meta
//   make-dataset  windows.jcws, windows.meta
//   train         model.jcvm, train_losses.csv, train.meta
//   forecast      forecast/ic_NNNN.jctr, reference/ic_NNNN.jctr,
//                 ensembles/ic_NNNN.jcen, long_{forecast,reference}.jctr,
//                 forecast.meta
//   evaluate      mae.csv, hist_*.csv, eval.meta
//   uq            uq/ic_NNNN.csv, regression.csv, uq.meta
//   report        report/*.csv, report/COLUMNS.txt, report/summary.meta
#pragma once

#include "jgf/config.hpp"

#include <iosfwd>

namespace jgf {

void cmd_simulate(const RunConfig& cfg, std::ostream& log);
void cmd_make_dataset(const RunConfig& cfg, std::ostream& log);
void cmd_train(const RunConfig& cfg, std::ostream& log);
void cmd_forecast(const RunConfig& cfg, std::ostream& log);
void cmd_evaluate(const RunConfig& cfg, std::ostream& log);
void cmd_uq(const RunConfig& cfg, std::ostream& log);
void cmd_report(const RunConfig& cfg, std::ostream& log);

/// Process exit code for an error: 2 configuration, 3 numerical, 4 I/O.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace jgf
