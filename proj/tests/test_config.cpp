#include <doctest.h>

#include <fstream>
#include <string>

#include "knudsen/config.hpp"
#include "knudsen/error.hpp"

using namespace knudsen;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* kMinimal = "seed: 3\nkernel: {type: semicircle}\n";

}  // namespace

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("minimal config fills defaults") {
  ExperimentConfig c = parse_config(kMinimal);
  CHECK(c.seed == 3);
  CHECK(c.kernel.type == "semicircle");
  CHECK(c.channel.n == 2);
  CHECK(c.channel.k == 1);
  CHECK(c.channel.measure.kind == MeasureKind::CosineLaw);
  CHECK(c.reps == 64);
  CHECK(c.spectral.grid_size == 2048);
  CHECK(c.spectral.discretize.seed == 3);
  CHECK(c.hash.size() == 64);
  CHECK(c.canonical["spectral"]["grid"] == "graded");
  CHECK(c.canonical["kernel"]["measure"]["s"] == 1.0);
}

TEST_CASE("YAML and JSON spellings hash the same") {
  ExperimentConfig a = parse_config(
      "seed: 11\nkernel:\n  type: ms\n  alpha: 0.25\nchannel: {n: 2, k: 1, r: 0.5}\nschedule: {a: [100, 1000], t: 2}\n");
  ExperimentConfig b = parse_config(
      R"({"schedule": {"t": 2.0, "a": [1e2, 1e3]}, "channel": {"r": 0.5}, "kernel": {"alpha": 0.25, "type": "ms"},
          "seed": 11})");
  CHECK(a.hash == b.hash);
  CHECK(a.canonical == b.canonical);
  // Output location and worker count do not enter the hash.
  ExperimentConfig c = parse_config(std::string(kMinimal) + "output: {dir: elsewhere}\nworkers: 1\n");
  CHECK(c.hash == parse_config(kMinimal).hash);
  CHECK(c.out_dir == "elsewhere");
  CHECK(c.exec().parallel == false);
  CHECK(parse_config("seed: 4\nkernel: {type: semicircle}\n").hash != parse_config(kMinimal).hash);
}

TEST_CASE("seed override refreshes the hash") {
  ExperimentConfig c = parse_config(kMinimal);
  std::string h = c.hash;
  override_seed(c, 4);
  CHECK(c.seed == 4);
  CHECK(c.hash != h);
  CHECK(c.hash == parse_config("seed: 4\nkernel: {type: semicircle}\n").hash);
}

TEST_CASE("diagnostics carry line and column") {
  std::string e = error_of("seed: 1\nkernel: {type: semicircle}\nchanel: {n: 2}\n");
  CHECK(e.find("cfg.yaml:3:1") != std::string::npos);
  CHECK(e.find("unknown key 'chanel'") != std::string::npos);

  e = error_of("seed: 1\nkernel:\n  type: ms\n  alpha: 1.5\n");
  CHECK(e.find("cfg.yaml:") == 0);
  CHECK(e.find("alpha") != std::string::npos);

  e = error_of("seed: 1\nkernel: {type: semicircle}\nreps: many\n");
  CHECK(e.find("cfg.yaml:3:7") != std::string::npos);

  e = error_of("seed: 1\nkernel: [\n");
  CHECK(e.find("syntax error") != std::string::npos);

  CHECK(error_of("kernel: {type: semicircle}\n").find("missing required key 'seed'") != std::string::npos);
  CHECK(error_of("seed: 1\n").find("missing required key 'kernel'") != std::string::npos);
  CHECK(error_of("seed: 1\nkernel: {type: bumpy}\n").find("unknown kernel type") != std::string::npos);
  CHECK(error_of("seed: 1\nkernel: {type: flat_top}\n").find("needs h") != std::string::npos);
  CHECK(error_of("seed: 1\nkernel: {type: semicircle, h: 0.3}\n").find("not a parameter") != std::string::npos);
  CHECK(error_of("- 1\n- 2\n").find("top level must be a mapping") != std::string::npos);
}

TEST_CASE("value checks") {
  CHECK_FALSE(error_of(std::string(kMinimal) + "spectral: {grid_size: 16}\n").empty());
  CHECK(error_of(std::string(kMinimal) + "spectral: {grid_size: 64}\n").empty());
  CHECK_FALSE(error_of(std::string(kMinimal) + "reps: 8\n").empty());
  CHECK_FALSE(error_of(std::string(kMinimal) + "schedule: {a: [1000, 100]}\n").empty());
  CHECK_FALSE(error_of(std::string(kMinimal) + "truncation: {kind: Q}\n").empty());
  CHECK_FALSE(error_of(std::string(kMinimal) + "exit_time: {reps: 10}\n").empty());
  CHECK_FALSE(error_of(std::string(kMinimal) + "clt: {reps: 10}\n").empty());
  CHECK_FALSE(error_of(std::string(kMinimal) + "channel: {n: 4, k: 1}\n").empty());
  CHECK_FALSE(error_of("seed: 1\nkernel: {type: semicircle}\nchannel: {n: 3, k: 1}\n").empty());
  CHECK_FALSE(error_of("seed: 1\nkernel: {type: ms, alpha: 0.5, measure: {type: cosine, beta: 2}}\n").empty());
  CHECK_FALSE(error_of("seed: 1\nkernel: {type: mh, acceptance: 2}\n").empty());
  CHECK_FALSE(error_of("seed: 1\nkernel: {type: semicircle, measure: {type: cosine, s: 2}}\n"
                       "channel: {measure: {type: cosine, s: 1}}\n")
                  .empty());
  CHECK(error_of("seed: 1\nkernel: {type: ms, alpha: 0.5}\nchannel: {n: 3, k: 2}\n").empty());
}

TEST_CASE("kernel specs build") {
  ExperimentConfig c = parse_config("seed: 1\nkernel: {type: flat_top, h: 0.5}\n");
  CHECK(build_kernel(c.kernel));
  c = parse_config("seed: 1\nkernel: {type: mh, acceptance: 0.7}\n");
  CHECK(c.canonical["kernel"]["proposal"]["type"] == "uniform");
  c = parse_config("seed: 1\nkernel: {type: ms, alpha: 0.5, measure: {type: maxwellian, beta: 2, M: 1}}\n");
  CHECK(c.channel.measure.kind == MeasureKind::SurfaceMaxwellian);
  CHECK(c.channel.measure.beta == 2.0);
}

TEST_CASE("shipped configs load") {
  for (const char* name : {"semicircle.yaml", "ms_alpha05.json"}) {
    std::string path = std::string(KNUDSEN_SOURCE_DIR) + "/configs/" + name;
    ExperimentConfig c = load_config(path);
    CHECK_MESSAGE(c.hash.size() == 64, name);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/config.yaml"), ConfigError);
}
