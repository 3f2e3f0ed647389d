#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "knudsen/flight.hpp"
#include "knudsen/kernels.hpp"
#include "knudsen/spectral.hpp"

namespace knudsen {

struct KernelSpec {
  std::string type = "semicircle";  // semicircle, flat_top, middle_wall, flat_bottom, ms, mh, identity
  double h = 0.0;
  double alpha = 1.0;
  SurfaceMeasure measure;
  std::shared_ptr<KernelSpec> proposal;  // mh
  std::optional<double> acceptance;      // mh: constant acceptance probability
};

CollisionKernel build_kernel(const KernelSpec& spec);
nlohmann::json to_json(const KernelSpec& spec);

struct SimulateSpec {
  Estimator estimator = Estimator::LagSum;
  long samples_per_rep = 4096;
  int lags = 200;
};

struct ExitSpec {
  std::vector<double> L_over_r = {1e2, 1e3};
  long reps = 1000;
  long max_collisions = 1000000000;
  bool brownian = false;
  double brownian_D = 1.0;
  double brownian_step = 0.005;
};

struct CorrelationSpec {
  double a = 1e5;
  int j_max = 0;
  long samples = 200000;
};

struct CltSpec {
  double a = 1e5;
  double t = 0.003;
  long reps = 1000;
  TruncationSpec trunc{TruncationKind::J};
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  KernelSpec kernel;
  ChannelConfig channel;
  ScalingSchedule schedule;
  TruncationSpec trunc;
  int reps = 64;
  SpectralOptions spectral;
  SimulateSpec simulate;
  ExitSpec exit;
  CorrelationSpec correlations;
  CltSpec clt;
  std::string out_dir = "out";
  int workers = 0;

  nlohmann::json canonical;  // normalized, defaults filled in
  std::string hash;          // SHA-256 of canonical.dump()

  Execution exec() const { return workers == 1 ? Execution::serial() : Execution{true, workers}; }
};

// YAML or JSON text. Errors carry "source:line:column: message".
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);
// Replaces the seed and refreshes the canonical form and hash.
void override_seed(ExperimentConfig& cfg, std::uint64_t seed);

std::string sha256_hex(const std::string& data);

}  // namespace knudsen
