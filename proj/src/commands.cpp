#include "jgf/commands.hpp"

#include "jgf/io.hpp"
#include "jgf/transport.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

namespace fs = std::filesystem;

namespace jgf {

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Io:
    case ErrorKind::Format: return 4;
    default: return 3;
  }
}

namespace {

std::string ic_name(Index i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ic_%04lld", static_cast<long long>(i));
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create directory '" + dir.string() + "': " + ec.message());
}

void require_file(const fs::path& p, const char* producer) {
  if (!fs::exists(p))
    fail(ErrorKind::Io, "missing '" + p.string() + "' (run `" + producer + "` first)");
}

/// Config echo plus stage-specific entries.
KeyValueFile stage_meta(const RunConfig& cfg, const std::string& stage) {
  KeyValueFile kv;
  kv.set("stage", stage);
  for (const auto& [k, v] : cfg.entries()) {
    if (k == "run.output_dir" || k == "run.threads") continue;  // do not affect payloads
    kv.set("config." + k, v);
  }
  return kv;
}

ModelConfig model_config(const RunConfig& cfg) {
  ModelConfig mc = cfg.model;
  mc.d = cfg.dim();
  return mc;
}

/// Runs f(i) for i in [0, n) on `threads` workers; rethrows the lowest-index failure.
template <typename F>
void parallel_for(Index n, Index threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (Index i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  auto worker = [&] {
    for (Index i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (Index t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Index first_row_at_or_after(const Trajectory& traj, double t) {
  const double rel = (t - traj.t0) / traj.dt;
  if (rel <= 0.0) return 0;
  return std::min<Index>(static_cast<Index>(std::ceil(rel - 1e-9)), traj.length());
}

Trajectory slice(const Trajectory& traj, Index first, Index count, const std::string& tag) {
  Trajectory out;
  out.states = traj.states.middleRows(first, count);
  out.dt = traj.dt;
  out.t0 = traj.time_at(first);
  out.system_tag = tag;
  return out;
}

double population_std(const Vector& v) {
  return std::sqrt((v.array() - v.mean()).square().mean());
}

Vector one_step(const RunConfig& cfg, const Vector& x) {
  if (cfg.system == SystemKind::Lorenz63) {
    return lorenz63_step(Eigen::Vector3d(x), cfg.lorenz, cfg.dt);
  }
  return integrate_ks(x, cfg.ks_grid, cfg.dt, 1, cfg.substeps).states.row(1).transpose();
}

struct IcPlan {
  std::vector<Index> history_rows;  // first history row per IC
  Index history_length = 1;
};

/// One forecast segment per equal slot of the test range, at a random offset
/// inside the slot, so segments never overlap.
IcPlan plan_ics(const RunConfig& cfg, const Trajectory& traj, Index history_length) {
  IcPlan plan;
  plan.history_length = history_length;
  const Index lo = first_row_at_or_after(traj, cfg.test_start);
  const Index hi = first_row_at_or_after(traj, cfg.test_end);
  const Index segment = history_length + cfg.horizon;
  if (cfg.n_ics == 0) return plan;
  const Index slot = (hi - lo) / cfg.n_ics;
  if (slot < segment)
    fail(ErrorKind::RangeTooShort, "test range holds " + std::to_string(hi - lo) + " states, need " +
                                       std::to_string(cfg.n_ics) + " segments of " + std::to_string(segment));
  Rng rng = make_rng(cfg.root_seed(), "ics");
  std::uniform_int_distribution<Index> offset(0, slot - segment);
  for (Index i = 0; i < cfg.n_ics; ++i) plan.history_rows.push_back(lo + i * slot + offset(rng));
  return plan;
}

std::vector<double> column_std(const Matrix& m) {
  std::vector<double> out;
  for (Index c = 0; c < m.cols(); ++c) out.push_back(population_std(m.col(c)));
  return out;
}

Trajectory load_simulation(const RunConfig& cfg) {
  const fs::path p = cfg.output_dir / "trajectory.jctr";
  require_file(p, "simulate");
  Trajectory traj = read_trajectory(p);
  if (traj.dim() != cfg.dim())
    fail(ErrorKind::ShapeMismatch, "trajectory has dimension " + std::to_string(traj.dim()) +
                                       ", configuration expects " + std::to_string(cfg.dim()));
  return traj;
}

Matrix rows_in_range(const Trajectory& traj, double t_a, double t_b) {
  const Index lo = first_row_at_or_after(traj, t_a);
  const Index hi = first_row_at_or_after(traj, t_b);
  return traj.states.middleRows(lo, std::max<Index>(hi - lo, 0));
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  ensure_dir(cfg.output_dir);
  Trajectory traj;
  if (cfg.system == SystemKind::Lorenz63) {
    traj = integrate_lorenz63(cfg.lorenz_ic, cfg.lorenz, cfg.dt, cfg.steps);
  } else {
    traj = integrate_ks(ks_initial_condition(cfg.ks_grid), cfg.ks_grid, cfg.dt, cfg.steps, cfg.substeps);
  }
  traj = discard_transient(traj, cfg.transient);
  traj.t0 = 0.0;  // configuration times are measured from the end of the transient
  write_trajectory(cfg.output_dir / "trajectory.jctr", traj);

  KeyValueFile meta = stage_meta(cfg, "simulate");
  meta.set("system", traj.system_tag);
  meta.set("rows", static_cast<long long>(traj.length()));
  meta.set("dim", static_cast<long long>(traj.dim()));
  meta.set("dt", traj.dt);
  meta.set("max_abs", traj.states.cwiseAbs().maxCoeff());
  meta.set("component_std", column_std(traj.states));
  meta.write(cfg.output_dir / "trajectory.meta");
  log << "simulate: " << traj.length() << " states of dimension " << traj.dim() << "\n";
}

void cmd_make_dataset(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Trajectory traj = load_simulation(cfg);
  const ModelConfig mc = model_config(cfg);
  const std::uint64_t seed = derive_seed(cfg.root_seed(), "windows");
  Rng rng(seed);
  const WindowSet ws = build_windows(traj, mc.window_length(), cfg.window_count,
                                     {cfg.train_start, cfg.train_end}, cfg.sampling, rng);
  write_window_set(cfg.output_dir / "windows.jcws", ws);

  KeyValueFile meta = stage_meta(cfg, "make-dataset");
  meta.set("stage_seed", seed);
  meta.set("windows", static_cast<long long>(ws.data.rows()));
  meta.set("window_length", static_cast<long long>(ws.n));
  meta.set("t_start", ws.t_start);
  meta.set("t_end", ws.t_end);
  meta.write(cfg.output_dir / "windows.meta");
  log << "make-dataset: " << ws.data.rows() << " windows of " << ws.n << " states\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path wp = cfg.output_dir / "windows.jcws";
  require_file(wp, "make-dataset");
  const WindowSet ws = read_window_set(wp);
  const ModelConfig mc = model_config(cfg);
  if (ws.d != mc.d || ws.n != mc.window_length())
    fail(ErrorKind::ShapeMismatch, "window set has n=" + std::to_string(ws.n) + ", d=" + std::to_string(ws.d) +
                                       "; model " + to_string(mc.kind) + " needs n=" +
                                       std::to_string(mc.window_length()) + ", d=" + std::to_string(mc.d));
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.root_seed(), "train");
  const VaeModel model = train(ws, mc, tc, [&](Index epoch, double loss, double lr) {
    log << "train: epoch " << epoch + 1 << "/" << tc.epochs << " loss " << format_double(loss) << " lr "
        << format_double(lr) << "\n";
  });
  save_checkpoint(cfg.output_dir / "model.jcvm", model);

  const auto& losses = model.record.epoch_losses;
  Matrix rows(static_cast<Index>(losses.size()), 2);
  for (std::size_t e = 0; e < losses.size(); ++e) {
    rows(static_cast<Index>(e), 0) = static_cast<double>(e + 1);
    rows(static_cast<Index>(e), 1) = losses[e];
  }
  write_csv(cfg.output_dir / "train_losses.csv", {"epoch", "loss"}, rows);

  KeyValueFile meta = stage_meta(cfg, "train");
  meta.set("stage_seed", tc.seed);
  meta.set("parameters", static_cast<long long>(model.params.size()));
  meta.set("epochs_run", static_cast<long long>(losses.size()));
  meta.set("final_loss", losses.empty() ? 0.0 : losses.back());
  meta.set("epoch_losses", losses);
  meta.write(cfg.output_dir / "train.meta");
}

void cmd_forecast(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Trajectory traj = load_simulation(cfg);
  const ModelConfig mc = model_config(cfg);

  std::optional<VaeModel> model;
  std::unique_ptr<JointSampler> sampler;
  std::string kind_label;
  if (cfg.oracle) {
    sampler = std::make_unique<OracleSampler>([&cfg](const Vector& x) { return one_step(cfg, x); },
                                              cfg.oracle_tail_noise, cfg.oracle_head_noise);
    kind_label = "oracle";
  } else {
    const fs::path mp = cfg.output_dir / "model.jcvm";
    require_file(mp, "train");
    model = load_checkpoint(mp);
    const ModelConfig& loaded = model->config;
    if (loaded.d != mc.d || loaded.n != mc.n || loaded.kind != mc.kind)
      fail(ErrorKind::ShapeMismatch, "checkpoint is " + std::string(to_string(loaded.kind)) + " with n=" +
                                         std::to_string(loaded.n) + ", d=" + std::to_string(loaded.d) +
                                         "; configuration asks for " + to_string(mc.kind) + " with n=" +
                                         std::to_string(mc.n) + ", d=" + std::to_string(mc.d));
    sampler = std::make_unique<ModelSampler>(*model);
    kind_label = to_string(loaded.kind);
  }
  const bool joint = cfg.oracle || mc.joint();
  LatentControlConfig lcfg = cfg.latent;
  lcfg.init = cfg.mode == ForecastMode::SieveLatent ? LatentInit::BestSieved : LatentInit::EncodeHistory;

  auto run_one = [&](const History& h, Index horizon, const SieveConfig& sc, Rng& rng) {
    if (cfg.mode == ForecastMode::Sieve) return forecast_sieve(*sampler, h, horizon, sc, rng);
    return forecast_latent(*model, h, horizon, lcfg, sc, rng);
  };

  const IcPlan plan = plan_ics(cfg, traj, sampler->history_length());
  const Index n_ics = static_cast<Index>(plan.history_rows.size());
  for (const char* sub : {"forecast", "reference", "ensembles"}) ensure_dir(cfg.output_dir / sub);

  // compute in blocks of `threads` initial conditions, write in IC order
  const Index block = std::max<Index>(cfg.threads, 1);
  std::vector<double> max_abs(static_cast<std::size_t>(n_ics), 0.0);
  for (Index b0 = 0; b0 < n_ics; b0 += block) {
    const Index nb = std::min(block, n_ics - b0);
    std::vector<ForecastResult> results(static_cast<std::size_t>(nb));
    parallel_for(nb, cfg.threads, [&](Index j) {
      const Index i = b0 + j;
      const Index row = plan.history_rows[static_cast<std::size_t>(i)];
      History h{traj.states.middleRows(row, plan.history_length), traj.dt,
                traj.time_at(row + plan.history_length - 1)};
      Rng rng = make_rng(cfg.root_seed(), "forecast", static_cast<std::uint64_t>(i));
      results[static_cast<std::size_t>(j)] = run_one(h, cfg.horizon, cfg.sieve, rng);
    });
    for (Index j = 0; j < nb; ++j) {
      const Index i = b0 + j;
      ForecastResult& r = results[static_cast<std::size_t>(j)];
      const Index row = plan.history_rows[static_cast<std::size_t>(i)];
      r.forecast.system_tag = "forecast";
      write_trajectory(cfg.output_dir / "forecast" / (ic_name(i) + ".jctr"), r.forecast);
      write_trajectory(cfg.output_dir / "reference" / (ic_name(i) + ".jctr"),
                       slice(traj, row + plan.history_length, cfg.horizon, "reference"));
      if (joint) {
        const EnsembleRun run{r.history, r.ensembles};
        write_ensembles(cfg.output_dir / "ensembles" / (ic_name(i) + ".jcen"), run);
        if (cfg.ensemble_csv) write_ensembles_csv(cfg.output_dir / "ensembles" / (ic_name(i) + ".csv"), run);
      }
      KeyValueFile side;
      side.set("ic", static_cast<long long>(i));
      side.set("stream_seed", derive_seed(cfg.root_seed(), "forecast", static_cast<std::uint64_t>(i)));
      side.set("history_row", static_cast<long long>(row));
      side.set("n_samples", static_cast<long long>(cfg.sieve.n_samples));
      side.set("k", static_cast<long long>(cfg.sieve.k));
      side.set("mode", to_string(r.mode));
      side.set("resample", static_cast<long long>(r.resample ? 1 : 0));
      side.set("cloud_draws", static_cast<long long>(r.cloud_draws));
      side.set("match_distances", r.match_distances);
      side.write(cfg.output_dir / "forecast" / (ic_name(i) + ".meta"));
      if (cfg.horizon > 0) max_abs[static_cast<std::size_t>(i)] = r.forecast.states.cwiseAbs().maxCoeff();
    }
    log << "forecast: " << b0 + nb << "/" << n_ics << " initial conditions\n";
  }

  KeyValueFile meta = stage_meta(cfg, "forecast");
  meta.set("model_kind", kind_label);
  meta.set("joint_ensembles", static_cast<long long>(joint ? 1 : 0));
  meta.set("n_ics", static_cast<long long>(n_ics));
  meta.set("history_length", static_cast<long long>(plan.history_length));
  std::vector<double> rows(plan.history_rows.begin(), plan.history_rows.end());
  meta.set("ic_history_rows", rows);
  meta.set("max_abs_per_ic", max_abs);

  if (cfg.long_horizon > 0) {
    const Index first = first_row_at_or_after(traj, cfg.train_end);
    require(first >= plan.history_length, ErrorKind::RangeTooShort, "not enough states before the long run");
    const Index hrow = first - plan.history_length;
    History h{traj.states.middleRows(hrow, plan.history_length), traj.dt, traj.time_at(first - 1)};
    SieveConfig sc = cfg.sieve;
    sc.refresh_every = cfg.long_refresh_every;
    Rng rng = make_rng(cfg.root_seed(), "forecast-long");
    ForecastResult r = run_one(h, cfg.long_horizon, sc, rng);
    r.forecast.system_tag = "long-forecast";
    write_trajectory(cfg.output_dir / "long_forecast.jctr", r.forecast);
    write_trajectory(cfg.output_dir / "long_reference.jctr", slice(traj, first, cfg.long_horizon, "long-reference"));
    meta.set("long_cloud_draws", static_cast<long long>(r.cloud_draws));
    log << "forecast: long run of " << cfg.long_horizon << " steps\n";
  }
  meta.write(cfg.output_dir / "forecast.meta");
}

namespace {

struct ForecastSet {
  std::vector<Trajectory> forecasts;
  std::vector<Trajectory> references;
  KeyValueFile meta;
};

ForecastSet load_forecasts(const RunConfig& cfg, Index limit = 0) {
  const fs::path mp = cfg.output_dir / "forecast.meta";
  require_file(mp, "forecast");
  ForecastSet set;
  set.meta = KeyValueFile::read(mp);
  Index n = static_cast<Index>(set.meta.get_double("n_ics"));
  if (limit > 0) n = std::min(n, limit);
  for (Index i = 0; i < n; ++i) {
    set.forecasts.push_back(read_trajectory(cfg.output_dir / "forecast" / (ic_name(i) + ".jctr")));
    set.references.push_back(read_trajectory(cfg.output_dir / "reference" / (ic_name(i) + ".jctr")));
  }
  return set;
}

}  // namespace

void cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Trajectory traj = load_simulation(cfg);
  const ForecastSet set = load_forecasts(cfg);
  KeyValueFile meta = stage_meta(cfg, "evaluate");
  const Index d = traj.dim();

  const Matrix train_states = rows_in_range(traj, cfg.train_start, cfg.train_end);
  Rng rng = make_rng(cfg.root_seed(), "climatology");
  const double clim = climatological_mae(train_states, cfg.clim_pairs, rng);
  meta.set("climatological_mae", clim);

  if (!set.forecasts.empty() && cfg.horizon > 0) {
    const MaeReport rep = mae_curve(set.forecasts, set.references);
    const Index H = rep.mean_curve.size();
    std::vector<std::string> header{"step", "lead_time", "mae_mean"};
    for (Index c = 0; c < d; ++c) header.push_back("mae_" + std::to_string(c));
    Matrix rows(H, 3 + d);
    for (Index t = 0; t < H; ++t) {
      rows(t, 0) = static_cast<double>(t + 1);
      rows(t, 1) = static_cast<double>(t + 1) * traj.dt;
      rows(t, 2) = rep.mean_curve(t);
      rows.row(t).tail(d) = rep.per_component.row(t);
    }
    write_csv(cfg.output_dir / "mae.csv", header, rows);
    double max_abs = 0.0;
    for (const auto& f : set.forecasts) max_abs = std::max(max_abs, f.states.cwiseAbs().maxCoeff());
    meta.set("n_ics", static_cast<long long>(rep.n_ics));
    meta.set("forecast_max_abs", max_abs);
    meta.set("mae_first_step", rep.mean_curve(0));
    meta.set("mae_last_step", rep.mean_curve(H - 1));
    if (cfg.lead_check <= H) meta.set("mae_at_lead_check", rep.mean_curve(cfg.lead_check - 1));
    log << "evaluate: MAE step 1 " << format_double(rep.mean_curve(0)) << ", climatology " << format_double(clim)
        << "\n";
  }

  const fs::path lf = cfg.output_dir / "long_forecast.jctr";
  if (fs::exists(lf)) {
    const Trajectory fc = read_trajectory(lf);
    const Trajectory ref = read_trajectory(cfg.output_dir / "long_reference.jctr");
    const bool aggregate = cfg.system == SystemKind::Ks;
    const HistReport hist = histogram_compare({{"full_data", traj.states},
                                               {"train", train_states},
                                               {"reference", ref.states},
                                               {"forecast", fc.states}},
                                              cfg.bins, cfg.tail_fraction, aggregate);
    for (std::size_t p = 0; p < hist.panels.size(); ++p) {
      const HistPanel& panel = hist.panels[p];
      const std::vector<std::string> labels{"full_data", "train", "reference", "forecast"};
      Matrix rows(cfg.bins, 2 + static_cast<Index>(labels.size()));
      rows.col(0) = panel.edges.head(cfg.bins);
      rows.col(1) = panel.edges.tail(cfg.bins);
      for (std::size_t l = 0; l < labels.size(); ++l) rows.col(2 + static_cast<Index>(l)) = panel.densities.at(labels[l]);
      std::vector<std::string> header{"bin_lo", "bin_hi"};
      header.insert(header.end(), labels.begin(), labels.end());
      const std::string name = aggregate ? "all" : "c" + std::to_string(p);
      write_csv(cfg.output_dir / ("hist_" + name + ".csv"), header, rows);
      meta.set("tail_window_" + name,
               std::vector<double>{panel.tails.lower_lo, panel.tails.lower_hi, panel.tails.upper_lo,
                                   panel.tails.upper_hi});
    }
    // distribution distance of the long run, relative to the reference spread
    std::vector<double> ratios;
    for (Index c = 0; c < d; ++c) {
      const double sd = population_std(ref.states.col(c));
      const double w = exact_w2_1d(fc.states.col(c), ref.states.col(c));
      ratios.push_back(sd > 0.0 ? w / sd : std::numeric_limits<double>::infinity());
    }
    meta.set("long_w2_over_std", ratios);
    meta.set("long_w2_over_std_max", *std::max_element(ratios.begin(), ratios.end()));
    if (aggregate) {
      const Vector fa = Eigen::Map<const Vector>(fc.states.data(), fc.states.size());
      const Vector ra = Eigen::Map<const Vector>(ref.states.data(), ref.states.size());
      meta.set("long_w2_over_std_aggregate", exact_w2_1d(fa, ra) / population_std(ra));
    }
    meta.set("long_forecast_max_abs", fc.states.cwiseAbs().maxCoeff());
  }
  meta.write(cfg.output_dir / "eval.meta");
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

void cmd_uq(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path mp = cfg.output_dir / "forecast.meta";
  require_file(mp, "forecast");
  const KeyValueFile fmeta = KeyValueFile::read(mp);
  const std::string kind = fmeta.get("model_kind");
  if (fmeta.get("joint_ensembles") != "1" || kind == to_string(ModelKind::BaselineCond))
    fail(ErrorKind::Config, "forecast run used the " + kind +
                                " model, which produces no joint ensemble; UQ metrics need a joint model");
  if (kind == to_string(ModelKind::CondJoint) && !cfg.uq_allow_conditional)
    fail(ErrorKind::Config, "UQ analysis is restricted to the unconditional joint model; set "
                            "uq.allow_conditional=true to analyse conditional-joint ensembles");

  const ForecastSet set = load_forecasts(cfg, cfg.uq_max_runs);
  const Index n = static_cast<Index>(set.forecasts.size());
  ensure_dir(cfg.output_dir / "uq");

  std::vector<UqSeries> series(static_cast<std::size_t>(n));
  std::vector<Vector> maes(static_cast<std::size_t>(n));
  parallel_for(n, cfg.threads, [&](Index i) {
    const EnsembleRun run = read_ensembles(cfg.output_dir / "ensembles" / (ic_name(i) + ".jcen"));
    series[static_cast<std::size_t>(i)] = compute_uq_series(run.history, run.steps, cfg.uq);
    maes[static_cast<std::size_t>(i)] =
        per_step_mae(set.forecasts[static_cast<std::size_t>(i)], set.references[static_cast<std::size_t>(i)]);
  });

  const Index T = cfg.horizon;
  const bool can_regress = T >= 10;  // split-half needs more than 4 fitting points
  std::vector<std::vector<double>> rho(8);  // 4 in-sample, 4 split-half
  Matrix reg_rows(can_regress ? 2 * n : 0, 11);
  double recon_gap = 0.0, ac_min = 0.0, ac_max = 0.0;
  Index unconverged = 0, zero_var = 0, degenerate = 0;
  for (Index i = 0; i < n; ++i) {
    const UqSeries& uq = series[static_cast<std::size_t>(i)];
    const Trajectory& f = set.forecasts[static_cast<std::size_t>(i)];
    write_uq_csv((cfg.output_dir / "uq" / (ic_name(i) + ".csv")).string(), uq, f.t0, f.dt, true);
    unconverged += uq.sinkhorn_unconverged;
    zero_var += uq.ac_zero_variance_steps;
    if (uq.length() > 0) {
      Vector diff = uq.wd_recon;
      for (Index t = uq.length() - 1; t > 0; --t) diff(t) -= uq.wd_recon(t - 1);
      recon_gap = std::max(recon_gap, (diff - uq.wd_signed).cwiseAbs().maxCoeff());
      ac_min = std::min(ac_min, uq.ac.minCoeff());
      ac_max = std::max(ac_max, uq.ac.maxCoeff());
    }
    if (!can_regress) continue;
    for (int s = 0; s < 2; ++s) {
      const CvScheme scheme = s == 0 ? CvScheme::InSample : CvScheme::SplitHalf;
      const RegressionReport rep = uq_error_regression(uq, maes[static_cast<std::size_t>(i)], scheme);
      degenerate += rep.degenerate;
      const Index r = 2 * i + s;
      reg_rows(r, 0) = static_cast<double>(i);
      reg_rows(r, 1) = static_cast<double>(s);
      reg_rows.row(r).segment(2, 3) = rep.rho_single.transpose();
      reg_rows(r, 5) = rep.rho_multiple;
      reg_rows.row(r).segment(6, 4) = rep.coefficients.transpose();
      reg_rows(r, 10) = static_cast<double>(rep.degenerate);
      for (int m = 0; m < 3; ++m) rho[static_cast<std::size_t>(4 * s + m)].push_back(rep.rho_single(m));
      rho[static_cast<std::size_t>(4 * s + 3)].push_back(rep.rho_multiple);
    }
  }

  // per-step medians across runs of the UQ metrics and the error
  if (n > 0) {
    Matrix rows(T, 5);
    const Trajectory& f0 = set.forecasts.front();
    for (Index t = 0; t < T; ++t) {
      rows(t, 0) = f0.time_at(t) - f0.t0 + f0.dt;
      std::vector<double> v(static_cast<std::size_t>(n));
      for (int m = 0; m < 4; ++m) {
        for (Index i = 0; i < n; ++i) {
          const UqSeries& uq = series[static_cast<std::size_t>(i)];
          const Vector& col = m == 0 ? uq.sigma_mean() : m == 1 ? uq.ac_mean() : m == 2 ? uq.wd_recon
                                                                                     : maes[static_cast<std::size_t>(i)];
          v[static_cast<std::size_t>(i)] = col(t);
        }
        rows(t, 1 + m) = median(v);
      }
    }
    write_csv(cfg.output_dir / "uq_median.csv", {"t", "sigma_mean", "ac_mean", "wd_recon", "mae"}, rows);
  }

  KeyValueFile meta = stage_meta(cfg, "uq");
  meta.set("model_kind", kind);
  meta.set("runs", static_cast<long long>(n));
  meta.set("sinkhorn_unconverged", static_cast<long long>(unconverged));
  meta.set("ac_zero_variance_steps", static_cast<long long>(zero_var));
  meta.set("wd_recon_difference_max_gap", recon_gap);
  meta.set("ac_min", ac_min);
  meta.set("ac_max", ac_max);
  if (can_regress) {
    write_csv(cfg.output_dir / "regression.csv",
              {"ic", "scheme", "rho_sigma", "rho_ac", "rho_wd_recon", "rho_multiple", "b0", "b_sigma", "b_ac",
               "b_wd_recon", "degenerate"},
              reg_rows);
    const char* names[4] = {"sigma", "ac", "wd_recon", "multiple"};
    for (int s = 0; s < 2; ++s)
      for (int m = 0; m < 4; ++m)
        meta.set(std::string("median_rho_") + (s == 0 ? "in_sample_" : "split_half_") + names[m],
                 median(rho[static_cast<std::size_t>(4 * s + m)]));
    meta.set("degenerate_regressions", static_cast<long long>(degenerate));
    if (cfg.group_size > 1 && n % cfg.group_size == 0) {
      const auto groups = ensemble_mean_regression(series, maes, cfg.group_size, cfg.cv_scheme);
      Matrix g(static_cast<Index>(groups.size()), 5);
      for (std::size_t k = 0; k < groups.size(); ++k) {
        g(static_cast<Index>(k), 0) = static_cast<double>(k);
        g.row(static_cast<Index>(k)).segment(1, 3) = groups[k].rho_single.transpose();
        g(static_cast<Index>(k), 4) = groups[k].rho_multiple;
      }
      write_csv(cfg.output_dir / "regression_groups.csv",
                {"group", "rho_sigma", "rho_ac", "rho_wd_recon", "rho_multiple"}, g);
    }
  } else {
    meta.set("regression", "skipped: horizon shorter than 10 steps");
  }
  meta.write(cfg.output_dir / "uq.meta");
  log << "uq: " << n << " runs analysed\n";
}

void cmd_report(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path dir = cfg.output_dir / "report";
  ensure_dir(dir);
  KeyValueFile summary;
  for (const char* stage : {"trajectory", "windows", "train", "forecast", "eval", "uq"}) {
    const fs::path p = cfg.output_dir / (std::string(stage) + ".meta");
    if (!fs::exists(p)) continue;
    const KeyValueFile meta = KeyValueFile::read(p);
    for (const auto& [k, v] : meta.entries()) {
      if (k.rfind("config.", 0) == 0 || k == "stage") continue;
      summary.set(std::string(stage) + "." + k, v);
    }
  }
  for (const auto& [k, v] : cfg.entries())
    if (k != "run.output_dir" && k != "run.threads") summary.set("config." + k, v);

  std::ofstream cols(dir / "COLUMNS.txt");
  if (!cols) fail(ErrorKind::Io, "cannot write '" + (dir / "COLUMNS.txt").string() + "'");
  cols << "summary.meta      key=value; stage results prefixed by stage name, config echo under config.*\n";

  for (const char* name : {"mae.csv", "regression.csv", "regression_groups.csv", "train_losses.csv", "uq_median.csv"}) {
    const fs::path src = cfg.output_dir / name;
    if (fs::exists(src)) fs::copy_file(src, dir / name, fs::copy_options::overwrite_existing);
  }
  cols << "train_losses.csv  epoch, loss (mean ELBO over the epoch's batches)\n";
  cols << "mae.csv           step, lead_time, mae_mean, mae_<c> per component\n";
  cols << "hist_<panel>.csv  bin_lo, bin_hi, relative frequency per source (full_data, train, reference, "
          "forecast); panel c<j> per component or 'all' pooled\n";
  cols << "regression.csv    ic, scheme (0 in-sample, 1 split-half), rho_sigma, rho_ac, rho_wd_recon, "
          "rho_multiple, b0, b_sigma, b_ac, b_wd_recon, degenerate\n";
  cols << "uq_median.csv     t, median over runs of sigma_mean, ac_mean, wd_recon, mae\n";
  for (const auto& entry : fs::directory_iterator(cfg.output_dir)) {
    const std::string fn = entry.path().filename().string();
    if (fn.rfind("hist_", 0) == 0) fs::copy_file(entry.path(), dir / fn, fs::copy_options::overwrite_existing);
  }

  summary.write(dir / "summary.meta");
  log << "report: written to " << dir.string() << "\n";
}

}  // namespace jgf
