#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Sandbox {
 public:
  Sandbox() {
    dir_ = fs::temp_directory_path() / ("knudsen_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    fs::create_directories(dir_);
  }
  ~Sandbox() { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }

  Run run(const std::string& args) const {
    std::string cmd = std::string(KNUDSEN_CLI_PATH) + " " + args + " > " + (dir_ / "stdout").string() + " 2> " +
                      (dir_ / "stderr").string();
    int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir_ / "stdout");
    r.err = slurp(dir_ / "stderr");
    return r;
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  static inline int counter_ = 0;
};

const char* kMs =
    "seed: 5\n"
    "kernel: {type: ms, alpha: 0.5}\n"
    "reps: 32\n"
    "spectral: {grid_size: 64}\n"
    "simulate: {samples_per_rep: 2000, lags: 30}\n"
    "correlations: {a: 1.0e5, samples: 20000}\n"
    "clt: {a: 1.0e4, reps: 1000}\n"
    "exit_time: {L_over_r: [20, 40], reps: 1000, brownian: true, brownian_step: 0.05}\n";

}  // namespace

TEST_CASE("cli: usage errors exit with 2") {
  Sandbox sb;
  CHECK(sb.run("").code == 2);
  CHECK(sb.run("frobnicate").code == 2);
  CHECK(sb.run("simulate").code == 2);
  CHECK(sb.run("simulate --config /nonexistent.yaml").code == 2);
  CHECK(sb.run("--help").code == 0);
  CHECK(sb.run("validate --profile huge").code == 2);
}

TEST_CASE("cli: config errors exit with 2 and point at the line") {
  Sandbox sb;
  fs::path bad = sb.write("bad.yaml", "seed: 1\nkernel: {type: ms, alpha: 0.5}\nsimulat: {lags: 3}\n");
  Run r = sb.run("simulate --config " + bad.string());
  CHECK(r.code == 2);
  CHECK(r.err.find("bad.yaml:3:1") != std::string::npos);

  // Untruncated strip flights have no second moment.
  fs::path none = sb.write("none.yaml", "seed: 1\nkernel: {type: ms, alpha: 0.5}\ntruncation: {kind: none}\nreps: 32\n");
  CHECK(sb.run("simulate --config " + none.string() + " --out-dir " + (sb.dir() / "o").string()).code == 2);
}

TEST_CASE("cli: numeric failures exit with 3") {
  Sandbox sb;
  fs::path id = sb.write("id.yaml", "seed: 1\nkernel: {type: identity}\nspectral: {grid_size: 64}\n");
  Run r = sb.run("spectrum --config " + id.string() + " --out-dir " + (sb.dir() / "o").string());
  CHECK(r.code == 3);
  CHECK(r.err.find("numeric error") != std::string::npos);
}

TEST_CASE("cli: simulate is reproducible and worker-independent") {
  Sandbox sb;
  fs::path cfg = sb.write("ms.yaml", kMs);
  auto out = [&](const std::string& d) { return (sb.dir() / d).string(); };
  Run a = sb.run("simulate --config " + cfg.string() + " --out-dir " + out("a"));
  REQUIRE(a.code == 0);
  Run b = sb.run("simulate --config " + cfg.string() + " --out-dir " + out("b"));
  Run c = sb.run("simulate --config " + cfg.string() + " --workers 1 --out-dir " + out("c"));
  REQUIRE(b.code == 0);
  REQUIRE(c.code == 0);
  std::string csv = slurp(sb.dir() / "a" / "simulate.csv");
  CHECK_FALSE(csv.empty());
  CHECK(csv == slurp(sb.dir() / "b" / "simulate.csv"));
  CHECK(csv == slurp(sb.dir() / "c" / "simulate.csv"));
  CHECK(slurp(sb.dir() / "a" / "simulate.json") == slurp(sb.dir() / "c" / "simulate.json"));

  auto j = nlohmann::json::parse(slurp(sb.dir() / "a" / "simulate.json"));
  CHECK(j["provenance"]["seed"] == 5);
  CHECK(j["provenance"]["config_hash"].get<std::string>().size() == 64);

  // p = 1/2 gives eta = 3
  double eta = std::stod(a.out.substr(a.out.find("eta = ") + 6));
  CHECK(eta == doctest::Approx(3.0).epsilon(0.05));

  Run d = sb.run("simulate --config " + cfg.string() + " --seed 6 --out-dir " + out("d"));
  REQUIRE(d.code == 0);
  CHECK(csv != slurp(sb.dir() / "d" / "simulate.csv"));
}

TEST_CASE("cli: spectrum, correlations, clt, exit-time and tables write their files") {
  Sandbox sb;
  fs::path cfg = sb.write("ms.yaml", kMs);
  std::string base = " --config " + cfg.string() + " --out-dir " + (sb.dir() / "o").string();

  Run s = sb.run("spectrum" + base);
  REQUIRE(s.code == 0);
  auto sp = nlohmann::json::parse(slurp(sb.dir() / "o" / "spectrum.json"));
  CHECK(sp["grid_size"] == 64);
  CHECK(std::stod(s.out.substr(s.out.find("eta = ") + 6)) == doctest::Approx(3.0).epsilon(1e-6));

  CHECK(sb.run("correlations" + base).code == 0);
  CHECK(fs::exists(sb.dir() / "o" / "correlations.csv"));
  CHECK(fs::exists(sb.dir() / "o" / "correlations.json"));

  CHECK(sb.run("clt" + base).code == 0);
  CHECK(fs::exists(sb.dir() / "o" / "clt.csv"));

  CHECK(sb.run("exit-time" + base).code == 0);
  std::string exits = slurp(sb.dir() / "o" / "exit_time.csv");
  CHECK(std::count(exits.begin(), exits.end(), '\n') >= 3);

  Run t = sb.run("tables --h-grid 0,0.5 --out-dir " + (sb.dir() / "o").string());
  REQUIRE(t.code == 0);
  std::string tab = slurp(sb.dir() / "o" / "tables.csv");
  CHECK(tab.rfind("family,h,zeta,eta,D_over_D0\n", 0) == 0);
  CHECK(tab == t.out);
}
