#include "jgf/io.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace jgf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "jgf_test_io";
  fs::create_directories(dir);
  return dir / name;
}

Ensemble random_ensemble(Index k, Index d, Rng& rng) {
  Ensemble e;
  e.n_out = 2;
  e.d = d;
  e.members = standard_normal(k, 2 * d, rng);
  e.distances = Vector::LinSpaced(k, 0.1, 2.0);
  e.weights = standard_normal(k, 1, rng).cwiseAbs();
  for (Index i = 0; i < k; ++i) e.indices.push_back(i == 0 ? -1 : 3 * i);
  return e;
}

}  // namespace

TEST_CASE("trajectory round trip is bit exact") {
  Rng rng(1);
  Trajectory t;
  t.states = standard_normal(33, 3, rng);
  t.states(0, 0) = std::numeric_limits<double>::denorm_min();
  t.dt = 0.1;
  t.t0 = -2.5;
  t.system_tag = "lorenz63 σ=10";
  const fs::path p = scratch("t.jctr");
  write_trajectory(p, t);
  const Trajectory r = read_trajectory(p);
  CHECK(r.states == t.states);
  CHECK(r.dt == t.dt);
  CHECK(r.t0 == t.t0);
  CHECK(r.system_tag == t.system_tag);
}

TEST_CASE("corrupt and missing files raise format and I/O errors") {
  const fs::path p = scratch("bad.jctr");
  {
    std::ofstream out(p, std::ios::binary);
    out << "NOPE1234";
  }
  try {
    read_trajectory(p);
    FAIL("expected Format");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
  }
  // truncated payload
  Trajectory t;
  t.states = Matrix::Ones(10, 2);
  const fs::path q = scratch("trunc.jctr");
  write_trajectory(q, t);
  fs::resize_file(q, fs::file_size(q) - 8);
  try {
    read_trajectory(q);
    FAIL("expected Format");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
  }
  try {
    read_trajectory(scratch("does_not_exist.jctr"));
    FAIL("expected Io");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
}

TEST_CASE("window set round trip") {
  Rng rng(2);
  WindowSet ws;
  ws.n = 2;
  ws.d = 3;
  ws.dt = 0.025;
  ws.t_start = 1.0;
  ws.t_end = 9.0;
  ws.data = standard_normal(12, 6, rng);
  for (Index i = 0; i < 12; ++i) ws.start_rows.push_back(100 + 7 * i);
  const fs::path p = scratch("w.jcws");
  write_window_set(p, ws);
  const WindowSet r = read_window_set(p);
  CHECK(r.data == ws.data);
  CHECK(r.start_rows == ws.start_rows);
  CHECK(r.n == 2);
  CHECK(r.d == 3);
  CHECK(r.dt == ws.dt);
  CHECK(r.t_start == ws.t_start);
  CHECK(r.t_end == ws.t_end);
}

TEST_CASE("checkpoint round trip preserves behaviour") {
  for (ModelKind kind : {ModelKind::UncondJoint, ModelKind::CondJoint, ModelKind::BaselineCond}) {
    ModelConfig mc;
    mc.kind = kind;
    mc.d = 3;
    mc.latent_dim = 2;
    mc.hidden_dims = {7, 5};
    mc.kl_weight = 0.25;
    Rng rng(3);
    Normalizer nz;
    nz.mean = standard_normal(3, 1, rng);
    nz.std = standard_normal(3, 1, rng).cwiseAbs();
    VaeModel m = init_model(mc, nz, 9);
    m.record.epochs_run = 4;
    m.record.epoch_losses = {4.0, 3.0, 2.5, 2.25};
    m.record.final_loss = 2.25;
    m.record.train_config.lr = 3e-4;
    const fs::path p = scratch("m.jcvm");
    save_checkpoint(p, m);
    const VaeModel r = load_checkpoint(p);
    CHECK(r.params == m.params);
    CHECK(r.config.kind == kind);
    CHECK(r.config.hidden_dims == mc.hidden_dims);
    CHECK(r.config.kl_weight == mc.kl_weight);
    CHECK(r.normalizer.mean == nz.mean);
    CHECK(r.normalizer.std == nz.std);
    CHECK(r.record.epoch_losses == m.record.epoch_losses);
    CHECK(r.record.train_config.lr == 3e-4);
    const std::optional<Vector> cond =
        mc.conditional() ? std::optional<Vector>(standard_normal(mc.cond_dim(), 1, rng)) : std::nullopt;
    Rng a(5), b(5);
    CHECK(sample_joint(m, 20, cond, a).samples == sample_joint(r, 20, cond, b).samples);
  }
}

TEST_CASE("ensemble run round trip and CSV export") {
  Rng rng(4);
  EnsembleRun run;
  run.history = standard_normal(2, 3, rng);
  for (int t = 0; t < 5; ++t) run.steps.push_back(random_ensemble(4, 3, rng));
  const fs::path p = scratch("e.jcen");
  write_ensembles(p, run);
  const EnsembleRun r = read_ensembles(p);
  CHECK(r.history == run.history);
  REQUIRE(r.steps.size() == 5);
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(r.steps[t].members == run.steps[t].members);
    CHECK(r.steps[t].distances == run.steps[t].distances);
    CHECK(r.steps[t].weights == run.steps[t].weights);
    CHECK(r.steps[t].indices == run.steps[t].indices);
    CHECK(r.steps[t].n_out == 2);
  }
  const fs::path c = scratch("e.csv");
  write_ensembles_csv(c, run);
  std::ifstream in(c);
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,member,distance,weight,block,x0,x1,x2");
  Index lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 5 * 4 * 2);
}

TEST_CASE("key-value files and number formatting") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 20240601.0}) CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(0.5) == "0.5");
  KeyValueFile kv;
  kv.set("a", 1.0 / 3.0);
  kv.set("b", "text with spaces");
  kv.set("c", static_cast<long long>(-4));
  kv.set("d", std::vector<double>{1.5, 2.0});
  kv.set("a", 2.0);  // overwrite keeps position
  const fs::path p = scratch("kv.meta");
  kv.write(p);
  const KeyValueFile r = KeyValueFile::read(p);
  CHECK(r.entries() == kv.entries());
  CHECK(r.entries().front().first == "a");
  CHECK(r.get_double("a") == 2.0);
  CHECK(r.get("b") == "text with spaces");
  CHECK_FALSE(r.contains("zzz"));
  CHECK_THROWS_AS(r.get("zzz"), Error);
}

TEST_CASE("CSV writer") {
  const fs::path p = scratch("m.csv");
  write_csv(p, {"x", "y"}, (Matrix(2, 2) << 0.1, 2, 3, -4).finished());
  std::ifstream in(p);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(all == "x,y\n0.1,2\n3,-4\n");
  CHECK_THROWS_AS(write_csv(p, {"x"}, Matrix::Zero(1, 2)), Error);
}
