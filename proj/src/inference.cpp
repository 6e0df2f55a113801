#include "jgf/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace jgf {

void Ensemble::validate() const {
  require(members.cols() == n_out * d, ErrorKind::ShapeMismatch, "ensemble width must be n_out*d");
  require(distances.size() == members.rows() && weights.size() == members.rows(),
          ErrorKind::ShapeMismatch, "ensemble distances/weights must have k entries");
  require(members.allFinite(), ErrorKind::NonFinite, "ensemble members are not finite");
  for (Index i = 1; i < distances.size(); ++i)
    require(distances(i - 1) <= distances(i), ErrorKind::InvalidArgument,
            "ensemble distances must be ascending");
  require((weights.array() >= 0.0).all() && weights.sum() > 0.0, ErrorKind::InvalidArgument,
          "ensemble weights must be nonnegative and not all zero");
}

Vector History::recent(Index count) const {
  require(count <= length(), ErrorKind::ShapeMismatch,
          "history holds " + std::to_string(length()) + " states, " + std::to_string(count) +
              " requested");
  Vector out(count * dim());
  for (Index r = 0; r < count; ++r)
    out.segment(r * dim(), dim()) = states.row(length() - count + r).transpose();
  return out;
}

void History::advance(const Vector& next) {
  require(next.size() == dim(), ErrorKind::DimensionMismatch, "appended state has wrong size");
  if (length() > 1) states.topRows(length() - 1) = states.bottomRows(length() - 1).eval();
  if (length() >= 1) states.row(length() - 1) = next.transpose();
  t_last += dt;
}

// ---------------------------------------------------------------------------

double tail_sq_distance(const PointCloud& cloud, Index j, const Vector& target) {
  const Index len = cloud.tail_states() * cloud.d;
  double acc = 0.0;
  for (Index i = 0; i < len; ++i) {
    const double diff = (cloud.samples(j, i) - target(i)) / cloud.scale(i % cloud.d);
    acc += diff * diff;
  }
  return acc;
}

namespace {

Vector tail_target(const PointCloud& cloud, const History& history) {
  require(history.dim() == cloud.d, ErrorKind::DimensionMismatch,
          "history dimension does not match the point cloud");
  return history.recent(cloud.tail_states());
}

void check_cloud(const PointCloud& cloud) {
  if (cloud.size() == 0) fail(ErrorKind::EmptyCloud, "point cloud has no samples");
  cloud.validate();
}

Ensemble make_ensemble(const PointCloud& cloud, const std::vector<std::pair<double, Index>>& picks) {
  Ensemble e;
  const Index k = static_cast<Index>(picks.size());
  e.n_out = cloud.n_out;
  e.d = cloud.d;
  e.members.resize(k, cloud.samples.cols());
  e.distances.resize(k);
  e.weights = Vector::Ones(k);
  e.indices.resize(picks.size());
  for (Index i = 0; i < k; ++i) {
    const auto [sq, j] = picks[static_cast<std::size_t>(i)];
    e.members.row(i) = cloud.samples.row(j);
    e.distances(i) = std::sqrt(sq);
    e.indices[static_cast<std::size_t>(i)] = j;
  }
  return e;
}

void check_k(const PointCloud& cloud, Index k) {
  require(k >= 1, ErrorKind::InvalidArgument, "k must be >= 1");
  if (k > cloud.size())
    fail(ErrorKind::KTooLarge, "k=" + std::to_string(k) + " exceeds cloud size " +
                                   std::to_string(cloud.size()));
}

}  // namespace

Match match_best(const PointCloud& cloud, const History& history) {
  check_cloud(cloud);
  const Vector target = tail_target(cloud, history);
  Match best{0, std::numeric_limits<double>::infinity()};
  for (Index j = 0; j < cloud.size(); ++j) {
    const double sq = tail_sq_distance(cloud, j, target);
    if (sq < best.distance) best = {j, sq};
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

Ensemble top_k_match(const PointCloud& cloud, const History& history, Index k) {
  check_cloud(cloud);
  check_k(cloud, k);
  const Vector target = tail_target(cloud, history);
  std::vector<std::pair<double, Index>> all(static_cast<std::size_t>(cloud.size()));
  for (Index j = 0; j < cloud.size(); ++j) all[static_cast<std::size_t>(j)] = {tail_sq_distance(cloud, j, target), j};
  std::partial_sort(all.begin(), all.begin() + k, all.end());
  all.resize(static_cast<std::size_t>(k));
  return make_ensemble(cloud, all);
}

SortedProjectionIndex::SortedProjectionIndex(const PointCloud& cloud) : cloud_(&cloud) {
  check_cloud(cloud);
  order_.resize(static_cast<std::size_t>(cloud.size()));
  std::iota(order_.begin(), order_.end(), Index{0});
  if (cloud.tail_states() > 0) {
    std::stable_sort(order_.begin(), order_.end(),
                     [&](Index a, Index b) { return cloud.samples(a, 0) < cloud.samples(b, 0); });
  }
  keys_.resize(order_.size());
  for (std::size_t i = 0; i < order_.size(); ++i)
    keys_[i] = cloud.tail_states() > 0 ? cloud.samples(order_[i], 0) : 0.0;
}

Ensemble SortedProjectionIndex::top_k(const History& history, Index k) const {
  const PointCloud& cloud = *cloud_;
  check_k(cloud, k);
  if (cloud.tail_states() == 0) {
    std::vector<std::pair<double, Index>> first(static_cast<std::size_t>(k));
    for (Index j = 0; j < k; ++j) first[static_cast<std::size_t>(j)] = {0.0, j};
    return make_ensemble(cloud, first);
  }
  const Vector target = tail_target(cloud, history);
  const double t0 = target(0);
  const double s0 = cloud.scale(0);

  // max-heap on (sq distance, index): top is the worst retained candidate
  std::priority_queue<std::pair<double, Index>> heap;
  auto offer = [&](Index j) {
    const std::pair<double, Index> cand{tail_sq_distance(cloud, j, target), j};
    if (static_cast<Index>(heap.size()) < k) {
      heap.push(cand);
    } else if (cand < heap.top()) {
      heap.pop();
      heap.push(cand);
    }
  };
  // first-coordinate term of the distance; it never exceeds the full sum
  auto lead_term = [&](std::size_t pos) {
    const double diff = (keys_[pos] - t0) / s0;
    return diff * diff;
  };
  auto full = [&] { return static_cast<Index>(heap.size()) == k; };

  const auto n = static_cast<std::ptrdiff_t>(keys_.size());
  std::ptrdiff_t hi = std::lower_bound(keys_.begin(), keys_.end(), t0) - keys_.begin();
  std::ptrdiff_t lo = hi - 1;
  bool up = hi < n, down = lo >= 0;
  while (up || down) {
    if (up) {
      if (full() && lead_term(static_cast<std::size_t>(hi)) > heap.top().first) {
        up = false;
      } else {
        offer(order_[static_cast<std::size_t>(hi)]);
        up = ++hi < n;
      }
    }
    if (down) {
      if (full() && lead_term(static_cast<std::size_t>(lo)) > heap.top().first) {
        down = false;
      } else {
        offer(order_[static_cast<std::size_t>(lo)]);
        down = --lo >= 0;
      }
    }
  }
  std::vector<std::pair<double, Index>> picks;
  picks.reserve(heap.size());
  while (!heap.empty()) {
    picks.push_back(heap.top());
    heap.pop();
  }
  std::reverse(picks.begin(), picks.end());
  return make_ensemble(cloud, picks);
}

// ---------------------------------------------------------------------------

PointCloud ModelSampler::draw(Index n_samples, const History& history, Rng& rng) const {
  const ModelConfig& c = model_->config;
  std::optional<Vector> cond;
  if (c.conditional()) cond = history.recent(c.cond_states());
  return sample_joint(*model_, n_samples, cond, rng);
}

PointCloud OracleSampler::draw(Index n_samples, const History& history, Rng& rng) const {
  require(history.length() >= 1, ErrorKind::ShapeMismatch, "oracle needs one observed state");
  const Index d = history.dim();
  const Vector last = history.states.row(history.length() - 1).transpose();
  std::normal_distribution<double> normal(0.0, 1.0);
  PointCloud cloud;
  cloud.n_out = 2;
  cloud.d = d;
  cloud.origin = PointCloud::Origin::Oracle;
  cloud.scale = Vector::Ones(d);
  cloud.samples.resize(n_samples, 2 * d);
  for (Index j = 0; j < n_samples; ++j) {
    Vector tail = last;
    if (tail_noise_ > 0.0)
      for (Index c = 0; c < d; ++c) tail(c) += tail_noise_ * normal(rng);
    Vector head = step_(tail);
    if (head_noise_ > 0.0)
      for (Index c = 0; c < d; ++c) head(c) += head_noise_ * normal(rng);
    cloud.samples.row(j).head(d) = tail.transpose();
    cloud.samples.row(j).tail(d) = head.transpose();
  }
  return cloud;
}

// ---------------------------------------------------------------------------

const char* to_string(ForecastMode mode) noexcept {
  switch (mode) {
    case ForecastMode::Sieve: return "sieve";
    case ForecastMode::Latent: return "latent";
    case ForecastMode::SieveLatent: return "sieve+latent";
  }
  return "unknown";
}

ForecastMode parse_forecast_mode(const std::string& name) {
  if (name == "sieve") return ForecastMode::Sieve;
  if (name == "latent") return ForecastMode::Latent;
  if (name == "sieve+latent" || name == "sieve-latent") return ForecastMode::SieveLatent;
  fail(ErrorKind::Config, "unknown forecast mode '" + name + "'");
}

namespace {

ForecastResult start_result(const History& history, Index horizon, ForecastMode mode) {
  require(horizon >= 0, ErrorKind::InvalidArgument, "horizon must be >= 0");
  require(history.length() >= 1, ErrorKind::ShapeMismatch, "history is empty");
  require(history.states.allFinite(), ErrorKind::NonFinite, "history is not finite");
  ForecastResult r;
  r.mode = mode;
  r.history = history.states;
  r.forecast.dt = history.dt;
  r.forecast.t0 = history.t_last + history.dt;
  r.forecast.states.resize(horizon, history.dim());
  r.ensembles.reserve(static_cast<std::size_t>(horizon));
  r.match_distances.reserve(static_cast<std::size_t>(horizon));
  return r;
}

template <typename CloudFor>
void run_sieve(CloudFor&& cloud_for_step, const History& initial, Index horizon,
               const SieveConfig& cfg, ForecastResult& r) {
  History history = initial;
  const PointCloud* indexed_cloud = nullptr;
  std::optional<SortedProjectionIndex> index;
  for (Index step = 0; step < horizon; ++step) {
    const PointCloud& cloud = cloud_for_step(step, history);
    Ensemble ens;
    if (cfg.use_index) {
      if (indexed_cloud != &cloud || r.resample || (cfg.refresh_every > 0 && step % cfg.refresh_every == 0)) {
        index.emplace(cloud);
        indexed_cloud = &cloud;
      }
      ens = index->top_k(history, cfg.k);
    } else {
      ens = top_k_match(cloud, history, cfg.k);
    }
    const Vector head = ens.members.row(0).tail(ens.d).transpose();
    if (!head.allFinite()) fail(ErrorKind::NonFinite, "forecast diverged at step " + std::to_string(step));
    r.forecast.states.row(step) = head.transpose();
    r.match_distances.push_back(ens.distances(0));
    r.ensembles.push_back(std::move(ens));
    history.advance(head);
  }
}

}  // namespace

ForecastResult forecast_sieve(const JointSampler& sampler, const History& history, Index horizon,
                              const SieveConfig& cfg, Rng& rng) {
  ForecastResult r = start_result(history, horizon, ForecastMode::Sieve);
  require(history.length() >= sampler.history_length(), ErrorKind::ShapeMismatch,
          "history needs " + std::to_string(sampler.history_length()) + " states");
  r.resample = cfg.resample || sampler.conditional();
  PointCloud cloud;
  auto cloud_for_step = [&](Index step, const History& h) -> const PointCloud& {
    const bool refresh = cfg.refresh_every > 0 && step % cfg.refresh_every == 0;
    if (step == 0 || r.resample || refresh) {
      cloud = sampler.draw(cfg.n_samples, h, rng);
      ++r.cloud_draws;
    }
    return cloud;
  };
  run_sieve(cloud_for_step, history, horizon, cfg, r);
  return r;
}

ForecastResult forecast_sieve(const PointCloud& cloud, const History& history, Index horizon,
                              const SieveConfig& cfg) {
  ForecastResult r = start_result(history, horizon, ForecastMode::Sieve);
  r.resample = false;
  r.cloud_draws = 1;
  auto cloud_for_step = [&](Index, const History&) -> const PointCloud& { return cloud; };
  run_sieve(cloud_for_step, history, horizon, cfg, r);
  return r;
}

// ---------------------------------------------------------------------------

LatentInit parse_latent_init(const std::string& name) {
  if (name == "encode_history" || name == "encode-history") return LatentInit::EncodeHistory;
  if (name == "best_sieved" || name == "best-sieved") return LatentInit::BestSieved;
  fail(ErrorKind::Config, "unknown latent init '" + name + "'");
}

const char* to_string(LatentInit init) noexcept {
  return init == LatentInit::EncodeHistory ? "encode_history" : "best_sieved";
}

void LatentControlConfig::validate() const {
  require(max_iters >= 0, ErrorKind::Config, "latent max_iters must be >= 0");
  require(step_size > 0.0, ErrorKind::Config, "latent step_size must be positive");
  require(tol > 0.0, ErrorKind::Config, "latent tol must be positive");
}

namespace {

Vector tail_residual(const VaeModel& model, const Vector& z, const Vector& target_tail) {
  const ModelConfig& c = model.config;
  require(!c.conditional(), ErrorKind::CondUnexpected, "latent control needs an unconditional model");
  const Index len = (c.out_states() - 1) * c.d;
  require(target_tail.size() == len, ErrorKind::ShapeMismatch, "target tail has wrong size");
  const Vector phys = model.normalizer.invert(decode(model, z, Vector()));
  return (phys.head(len) - target_tail).cwiseQuotient(model.normalizer.block_scale(c.out_states() - 1));
}

}  // namespace

double latent_tail_loss(const VaeModel& model, const Vector& z, const Vector& target_tail) {
  return tail_residual(model, z, target_tail).norm();
}

Vector latent_tail_gradient(const VaeModel& model, const Vector& z, const Vector& target_tail) {
  const Vector r = tail_residual(model, z, target_tail);
  const double loss = r.norm();
  if (loss == 0.0) return Vector::Zero(z.size());
  // d(phys)/d(normalized) = std cancels the 1/std inside the residual
  Vector d_out = Vector::Zero(model.config.out_dim());
  d_out.head(r.size()) = r / loss;
  return decoder_latent_gradient(model, z, Vector(), d_out);
}

LatentControlResult latent_control_step(const VaeModel& model, const Vector& z_init,
                                        const Vector& target_tail, const LatentControlConfig& cfg,
                                        std::optional<double> initial_loss) {
  cfg.validate();
  require(z_init.size() == model.config.latent_dim, ErrorKind::ShapeMismatch, "latent has wrong size");
  LatentControlResult res;
  res.z = z_init;
  res.loss = initial_loss ? *initial_loss : latent_tail_loss(model, z_init, target_tail);
  res.initial_loss = res.loss;
  if (!std::isfinite(res.loss)) fail(ErrorKind::NonFinite, "latent loss is not finite");

  double step = cfg.step_size;
  for (Index it = 0; it < cfg.max_iters && res.loss >= cfg.tol; ++it) {
    res.iterations = it + 1;
    const Vector g = latent_tail_gradient(model, res.z, target_tail);
    if (!g.allFinite()) fail(ErrorKind::NonFinite, "latent gradient is not finite");
    if (g.squaredNorm() == 0.0) break;
    const Vector trial = res.z - step * g;
    const double trial_loss = latent_tail_loss(model, trial, target_tail);
    if (std::isfinite(trial_loss) && trial_loss < res.loss) {
      res.z = trial;
      res.loss = trial_loss;
      ++res.accepted_steps;
    } else {
      step *= 0.5;
      if (step < 1e-14) break;
    }
  }
  return res;
}

ForecastResult forecast_latent(const VaeModel& model, const History& history, Index horizon,
                               const LatentControlConfig& cfg, const SieveConfig& sieve, Rng& rng) {
  cfg.validate();
  const ModelConfig& c = model.config;
  require(!c.conditional(), ErrorKind::CondUnexpected,
          "latent optimal control applies to the unconditional joint model");
  require(c.joint(), ErrorKind::ShapeMismatch, "latent optimal control needs a joint model");
  const bool sieved = cfg.init == LatentInit::BestSieved;
  ForecastResult r = start_result(history, horizon, sieved ? ForecastMode::SieveLatent : ForecastMode::Latent);
  require(history.length() >= c.history_length(), ErrorKind::ShapeMismatch,
          "history needs " + std::to_string(c.history_length()) + " states");
  r.resample = sieved && sieve.resample;

  const Index tail_states = c.out_states() - 1;
  const Index d = c.d;
  History h = history;
  PointCloud cloud;
  ModelSampler sampler(model);

  for (Index step = 0; step < horizon; ++step) {
    const Vector target = h.recent(tail_states);
    Ensemble ens;
    Vector z0;
    std::optional<double> init_loss;
    if (sieved) {
      const bool refresh = sieve.refresh_every > 0 && step % sieve.refresh_every == 0;
      if (step == 0 || r.resample || refresh) {
        cloud = sampler.draw(sieve.n_samples, h, rng);
        ++r.cloud_draws;
      }
      ens = top_k_match(cloud, h, sieve.k);
      z0 = cloud.latents.col(ens.indices[0]);
      init_loss = ens.distances(0);
    } else {
      // unknown head padded with the last observed state
      Vector padded(c.out_dim());
      padded.head(target.size()) = target;
      padded.tail(d) = h.states.row(h.length() - 1).transpose();
      z0 = encode(model, model.normalizer.apply(padded), Vector()).first;
    }

    const LatentControlResult opt = latent_control_step(model, z0, target, cfg, init_loss);
    Vector sample;
    if (sieved && opt.accepted_steps == 0) {
      sample = ens.members.row(0).transpose();
    } else {
      sample = model.normalizer.invert(decode(model, opt.z, Vector()));
    }
    if (!sample.allFinite()) fail(ErrorKind::NonFinite, "latent forecast diverged at step " + std::to_string(step));

    if (sieved) {
      ens.members.row(0) = sample.transpose();
      ens.distances(0) = opt.loss;
      if (opt.accepted_steps > 0) ens.indices[0] = -1;
    } else {
      ens.n_out = c.out_states();
      ens.d = d;
      ens.members = sample.transpose();
      ens.distances = Vector::Constant(1, opt.loss);
      ens.weights = Vector::Ones(1);
      ens.indices = {-1};
    }
    const Vector head = sample.tail(d);
    r.forecast.states.row(step) = head.transpose();
    r.match_distances.push_back(opt.loss);
    r.ensembles.push_back(std::move(ens));
    h.advance(head);
  }
  return r;
}

}  // namespace jgf
