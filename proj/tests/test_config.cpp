#include "jgf/commands.hpp"
#include "jgf/config.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

using namespace jgf;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::InvalidArgument;
}

RunConfig smoke() {
  RunConfig c;
  apply_preset(c, "lorenz-smoke");
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(JGF_CLI_PATH) + " --quiet " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(entry.path(), root).string()] = ss.str();
  }
  return files;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "jgf_test_config" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

}  // namespace

TEST_CASE("every preset validates") {
  for (const auto& name : preset_names()) {
    RunConfig c;
    apply_preset(c, name);
    CAPTURE(name);
    CHECK_NOTHROW(c.validate());
  }
  RunConfig c;
  CHECK(kind_of([&] { apply_preset(c, "nope"); }) == ErrorKind::Config);
}

TEST_CASE("seed is mandatory") {
  RunConfig c = smoke();
  c.seed.reset();
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::Config);
  CHECK(kind_of([&] { (void)c.root_seed(); }) == ErrorKind::Config);
}

TEST_CASE("cross-section validation") {
  const auto broken = [](const std::string& key, const std::string& value) {
    RunConfig c = smoke();
    c.set(key, value);
    return kind_of([&] { c.validate(); });
  };
  CHECK(broken("forecast.test_start", "40") == ErrorKind::Config);   // overlaps training
  CHECK(broken("windows.train_end", "1000") == ErrorKind::Config);   // past the span
  CHECK(broken("forecast.k", "401") == ErrorKind::Config);           // k > N
  CHECK(broken("forecast.n_ics", "1000") == ErrorKind::Config);      // cannot fit
  CHECK(broken("forecast.long_horizon", "100000") == ErrorKind::Config);
  CHECK(broken("dynamics.dt", "-1") == ErrorKind::Config);
  CHECK(broken("eval.tail_fraction", "0.7") == ErrorKind::Config);
  RunConfig c = smoke();
  c.set("model.kind", "cond-joint");
  c.set("forecast.mode", "latent");
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::Config);
}

TEST_CASE("setting keys") {
  RunConfig c;
  c.set(" train.epochs ", " 1e2 ");
  CHECK(c.train.epochs == 100);
  c.set("model.hidden", "32, 16");
  CHECK(c.model.hidden_dims == std::vector<Index>{32, 16});
  c.set("lorenz.ic", "0,1,2");
  CHECK(c.lorenz_ic == Eigen::Vector3d(0, 1, 2));
  c.set("forecast.resample", "yes");
  CHECK(c.sieve.resample);
  CHECK(kind_of([&] { c.set("train.epochs", "1.5"); }) == ErrorKind::Config);
  CHECK(kind_of([&] { c.set("train.lr", "fast"); }) == ErrorKind::Config);
  CHECK(kind_of([&] { c.set("train.nope", "1"); }) == ErrorKind::Config);
  CHECK(kind_of([&] { apply_override(c, "train.lr"); }) == ErrorKind::Config);
}

TEST_CASE("entries round-trip through set") {
  const RunConfig a = smoke();
  RunConfig b;
  for (const auto& [k, v] : a.entries()) b.set(k, v);
  CHECK(b.entries() == a.entries());
}

TEST_CASE("config files with comments layer over presets") {
  const fs::path p = scratch("cfg.txt");
  {
    std::ofstream out(p);
    out << "# smoke overrides\n\ntrain.epochs = 5   # more\nforecast.k=4\n";
  }
  RunConfig c = smoke();
  apply_config_file(c, p);
  CHECK(c.train.epochs == 5);
  CHECK(c.sieve.k == 4);
  {
    std::ofstream out(p);
    out << "train.epochs\n";
  }
  CHECK(kind_of([&] { apply_config_file(c, p); }) == ErrorKind::Config);
  CHECK(kind_of([&] { apply_config_file(c, p.string() + ".missing"); }) == ErrorKind::Io);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ErrorKind::Config) == 2);
  CHECK(exit_code_for(ErrorKind::Io) == 4);
  CHECK(exit_code_for(ErrorKind::Format) == 4);
  CHECK(exit_code_for(ErrorKind::NonFinite) == 3);
  const fs::path out = scratch("cli_codes");
  CHECK(run_cli("--out " + out.string() + " simulate") == 2);  // no seed
  CHECK(run_cli("--preset lorenz-smoke --set bogus.key=1 --out " + out.string() + " simulate") == 2);
  CHECK(run_cli("--preset lorenz-smoke --out " + out.string() + " train") == 4);  // nothing simulated yet
  CHECK(run_cli("--preset lorenz-smoke --set dynamics.dt=0.5 --set dynamics.steps=200 --set dynamics.transient=0 "
                "--set windows.train_end=40 --set forecast.test_start=40 --set forecast.test_end=100 "
                "--set forecast.n_ics=1 --set forecast.long_horizon=0 --out " + out.string() + " simulate") == 3);
  CHECK(run_cli("--preset lorenz-smoke --out " + out.string() + " simulate") == 0);
}

TEST_CASE("pipeline output is byte-identical across reruns and thread counts") {
  for (const std::string preset : {"lorenz-smoke", "ks-smoke"}) {
    CAPTURE(preset);
    const fs::path a = scratch(preset + "_a"), b = scratch(preset + "_b");
    REQUIRE(run_cli("--preset " + preset + " --out " + a.string() + " all") == 0);
    REQUIRE(run_cli("--preset " + preset + " --threads 3 --out " + b.string() + " all") == 0);
    const auto fa = read_tree(a), fb = read_tree(b);
    CHECK(fa.size() == fb.size());
    CHECK(fa.count("report/summary.meta") == 1);
    for (const auto& [name, bytes] : fa) {
      CAPTURE(name);
      REQUIRE(fb.count(name) == 1);
      CHECK(fb.at(name) == bytes);
    }
  }
}
