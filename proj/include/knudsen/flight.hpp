#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "knudsen/geometry.hpp"
#include "knudsen/kernels.hpp"
#include "knudsen/measures.hpp"
#include "knudsen/parallel.hpp"
#include "knudsen/spectral.hpp"
#include "knudsen/stats.hpp"

namespace knudsen {

// Channel R^k x B^{n-k} of radius r. Simulation supports (2,1), (3,1), (3,2);
// the moment formulas accept any n - k >= 1.
struct ChannelConfig {
  int n = 2;
  int k = 1;
  double r = 1.0;
  std::optional<double> L;
  SurfaceMeasure measure;

  int codim() const { return n - k; }
  void validate() const;
  bool simulable() const;
};

// h(a) = a for n - k >= 2, a / ln a for n - k = 1.
double h_scale(double a, int codim);

struct ScalingSchedule {
  std::vector<double> a_values = {1e2, 1e3, 1e4, 1e5};
  double t = 1.0;
  void validate() const;
};

// Number of collisions n_{a,t} = floor(a h(a) t / E[tau_b]).
long collision_count(double a, double t, int codim, double mean_tau);

enum class TruncationKind { None, I, J, K };

// Cuts on x = |Z| / (2r), i.e. |cot phi| in 2D.
struct TruncationSpec {
  TruncationKind kind = TruncationKind::I;
  double eta_exp = 0.5;
  double gamma_exp = 2.0;
  double c1 = 1.0;  // additive slack of the widened window

  void validate() const;
  // Open interval (lo, hi) of kept x; I(a) keeps x <= a.
  std::pair<double, double> bounds(double a) const;
  bool keep(double x, double a) const;
};

// C(a) = ceil(log_3 ln a).
int lag_budget(double a);

std::string to_string(TruncationKind k);
TruncationKind truncation_from_string(const std::string& s);

struct Displacement {
  std::array<double, 2> z{};  // horizontal components, k of them used
  double tau = 0.0;
};

Displacement step_displacement(const Velocity& v, const ChannelConfig& cfg);
// 2D shortcut: Z = 2r cot phi, tau = 2r / (s sin phi).
Displacement step_displacement(const AngleState& a, double r);

struct MomentForms {
  std::optional<double> EZ2;  // E[(Z^u)^2], n - k >= 2 only
  double E_tau = 0.0;
  double D0 = 0.0;
};

MomentForms closed_form_moments(const ChannelConfig& cfg);

// E[Z_a^2] = E[Z^2 1{|cot phi| <= a}] in 2D under the stationary angle law.
double truncated_second_moment_2d(double a, double r);
// Same over lo < |cot phi| < hi.
double window_second_moment_2d(double lo, double hi, double r);
// Per-component E[(Z^u)^2 1{|Z| <= 2ra}] for the slab (n=3, k=2).
double truncated_second_moment_slab(double a, double r);
// Exact E[(Z^u)^2] for n - k >= 2, from integrating the chord geometry.
double displacement_second_moment(int n, int k, double r);

struct MomentEstimate {
  long samples = 0;
  double E_tau = 0.0, E_tau_se = 0.0;
  // n - k >= 2: untruncated per-component E[(Z^u)^2]
  std::optional<double> EZ2, EZ2_se;
  // n - k = 1: per-component E[(Z^u)^2 1{|Z| <= 2ra}] for each requested a
  std::vector<double> a_values, EZ2_trunc, EZ2_trunc_se;
  // n - k = 1: least-squares slope of EZ2_trunc against ln a (-> 4r^2)
  std::optional<double> log_slope, log_slope_se;
  // EZ2 / E_tau for n - k >= 2, log_slope / E_tau for n - k = 1
  double D0 = 0.0, D0_se = 0.0;
};

// Importance sampling over the grazing tail: the normal-component quantile is
// drawn from an even mix of U(0,1) and a log-uniform law on (1e-14, 1), the
// rest of the velocity from the measure itself. Plain sampling cannot see the
// ln a growth: with N draws the largest |cot phi| is about sqrt(N)/2.
MomentEstimate estimate_moments(const ChannelConfig& cfg, const std::vector<double>& a_values, long samples,
                                std::uint64_t seed, const Execution& exec = {});

struct FlightRecord {
  std::vector<Velocity> velocities;
  std::vector<Displacement> displacements;
  std::optional<double> exit_time;
};

FlightRecord simulate_chain(const CollisionKernel& kernel, const ChannelConfig& cfg, long steps, Stream& rng);

// Collisions up to time T, started from the stationary law.
long collisions_until(const CollisionKernel& kernel, const ChannelConfig& cfg, double T, Stream& rng);

enum class Estimator { Direct, LagSum };

std::string to_string(Estimator e);
Estimator estimator_from_string(const std::string& s);

struct DiffusivityOptions {
  Estimator estimator = Estimator::LagSum;
  int reps = 64;
  long samples_per_rep = 4096;  // lag_sum only
  int lags = 200;               // lag_sum only
  std::uint64_t seed = 0;
  Execution exec;
};

struct RepRow {
  double a = 0.0;
  int rep = 0;
  double sum_z = 0.0;
  double sum_z_trunc = 0.0;
  long collisions = 0;
  double eta = 0.0;  // per-rep estimate of the normalized eta_a
  std::uint64_t seed = 0;
};

struct DiffusivityResult {
  std::string label;
  Estimator estimator = Estimator::Direct;
  double t = 1.0;
  double D0 = 0.0;
  double mean_tau = 0.0;
  std::vector<double> a_values;
  std::vector<long> steps;       // n_{a,t}
  std::vector<double> D, D_se;   // (1/(a^2 t)) E[(sum Z_a)^2]
  std::vector<double> eta_raw;   // D / D0
  std::vector<double> eta, eta_se;  // D normalized by the exact truncated second moment
  Extrapolation fit;
  std::vector<RepRow> rows;
  std::vector<std::string> warnings;
};

DiffusivityResult diffusivity_mc(const CollisionKernel& kernel, const ChannelConfig& cfg,
                                 const ScalingSchedule& schedule, const TruncationSpec& trunc,
                                 const DiffusivityOptions& opt);

// Start angle in (0, pi/2] with density proportional to cot^2(phi) sin(phi)
// on lo <= cot phi <= hi; u in (0,1).
double sample_z2_angle(double lo, double hi, double u);

struct CorrelationOptions {
  int j_max = 0;  // 0: lag_budget(a) + 1
  long samples = 200000;
  int batches = 32;
  std::uint64_t seed = 0;
  Execution exec;
};

struct CorrelationProfile {
  double a = 0.0;
  std::vector<double> rho, rho_se;  // E[Z_0 Z_j] / E[Z_0^2], rho[0] = 1
  std::vector<double> products;     // E[Z_{a,0} Z^K_{a,j}] in length^2
  double zeta = 0.0;
  double zeta_se = 0.0;
};

// Start in the J(a) cone (trunc gives its exponents), lags truncated to K(a).
CorrelationProfile correlation_profile(const CollisionKernel& kernel, const ChannelConfig& cfg, double a,
                                       const TruncationSpec& trunc, const CorrelationOptions& opt);

struct QExpectation {
  double value = 0.0;
  double se = 0.0;
};

// E[q_1 ... q_j | Theta_0 = phi], q_i = cot Theta_i / cot Theta_{i-1}.
QExpectation shallow_q_expectation(const CellGeometry& cell, double phi, int j, long samples = 1000000,
                                   std::uint64_t seed = 0);

struct ExitTimeOptions {
  long reps = 1000;
  long max_collisions = 1000000000;
  std::uint64_t seed = 0;
  Execution exec;
  // Brownian control: Gaussian steps with diffusivity brownian_D.
  bool brownian = false;
  double brownian_D = 1.0;
  double brownian_step = 0.005;  // step standard deviation over L
};

struct ExitTimeResult {
  double L = 0.0;
  double r = 0.0;
  double mean = 0.0;
  double se = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  long reps = 0;
  long censored = 0;
  double censored_fraction = 0.0;
  std::optional<double> tau_pred;
  std::vector<double> times;  // NaN when censored
  std::vector<long> collisions;
};

// D (if given) only feeds the prediction.
ExitTimeResult mean_exit_time(const CollisionKernel& kernel, const ChannelConfig& cfg, const ExitTimeOptions& opt,
                              std::optional<double> D = std::nullopt);

struct ExitFit {
  LinearFit line;  // tau against L^2 / ln(L/r) (or L^2 for n - k >= 2)
  double D = 0.0;  // 1 / slope
};

ExitFit fit_exit_times(const std::vector<ExitTimeResult>& runs, int codim);

struct CltOptions {
  double a = 1e5;
  double t = 0.003;
  long reps = 1000;
  TruncationSpec trunc{TruncationKind::J};
  std::uint64_t seed = 0;
  Execution exec;
};

struct CltReport {
  double a = 0.0, t = 0.0;
  long steps = 0;
  long reps = 0;
  double variance = 0.0;  // predicted variance of a^{-1} sum Z
  TestResult ks;
  double empirical_sd = 0.0;  // of standardized sums
  double window_corr = 0.0;
  double window_corr_se = 0.0;
  double small_block_fraction = 0.0;
  std::vector<double> standardized;
};

// eta_trunc: spectral eta for the same truncated observable at a.
CltReport clt_check(const CollisionKernel& kernel, const ChannelConfig& cfg, double eta_trunc, const CltOptions& opt);

// Grid observable matching a truncation: bin averages of 2r cot phi over kept x.
std::vector<double> truncated_observable(const AngleGrid& grid, const TruncationSpec& trunc, double a, double r);
// Exact E[Z^2 1{kept}] in 2D.
double truncated_moment(const TruncationSpec& trunc, double a, double r);

}  // namespace knudsen
