#include "knudsen/flight.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "knudsen/analysis.hpp"
#include "knudsen/error.hpp"

namespace knudsen {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kGrazing = 1e-12;

// asinh(x) - x / sqrt(1 + x^2); E[Z^2 1{|cot| <= x}] = 4 r^2 F(x) in 2D.
double moment_primitive(double x) {
  if (std::isinf(x)) return std::numeric_limits<double>::infinity();
  if (x < 1e-3) {
    double x2 = x * x;
    return x * x2 * (1.0 / 3.0 - 0.3 * x2 + 15.0 / 56.0 * x2 * x2);
  }
  return std::asinh(x) - x / std::sqrt(1.0 + x * x);
}

double cot(double phi) { return std::cos(phi) / std::sin(phi); }

void require_2d(const ChannelConfig& cfg, const char* what) {
  if (cfg.n != 2 || cfg.k != 1) throw DomainError(std::string(what) + ": only the 2D channel (n=2, k=1) is supported");
}

void require_kernel(const CollisionKernel& kernel, const ChannelConfig& cfg, const char* what) {
  if (!kernel) throw DomainError(std::string(what) + ": empty kernel");
  if (!kernel.supports_dimension(cfg.n))
    throw DomainError(std::string(what) + ": kernel " + kernel.label() + " does not support n=" + std::to_string(cfg.n));
}

double norm_of(const Displacement& d, int k) { return k == 1 ? std::abs(d.z[0]) : std::hypot(d.z[0], d.z[1]); }

}  // namespace

void ChannelConfig::validate() const {
  if (n < 2) throw DomainError("channel: n must be >= 2");
  if (k < 1 || k > n - 1) throw DomainError("channel: need 1 <= k <= n-1");
  if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("channel: r must be positive");
  if (L && !(*L > r)) throw DomainError("channel: L must exceed r");
  measure.validate();
  if (measure.n != n) throw DomainError("channel: measure dimension differs from n");
}

bool ChannelConfig::simulable() const { return (n == 2 && k == 1) || (n == 3 && (k == 1 || k == 2)); }

double h_scale(double a, int codim) {
  if (!(a > 1.0)) throw DomainError("h_scale: a must exceed 1");
  return codim >= 2 ? a : a / std::log(a);
}

void ScalingSchedule::validate() const {
  if (a_values.empty()) throw DomainError("schedule: a_values is empty");
  for (std::size_t i = 0; i < a_values.size(); ++i) {
    if (!(a_values[i] >= 10.0)) throw DomainError("schedule: a values must be >= 10");
    if (i > 0 && !(a_values[i] > a_values[i - 1])) throw DomainError("schedule: a values must increase");
  }
  if (!(t > 0.0)) throw DomainError("schedule: t must be positive");
}

long collision_count(double a, double t, int codim, double mean_tau) {
  double n = a * h_scale(a, codim) * t / mean_tau;
  if (!(n >= 1.0)) throw DomainError("collision_count: schedule gives fewer than one collision");
  if (n > 9e18) throw DomainError("collision_count: overflow");
  return static_cast<long>(std::floor(n));
}

int lag_budget(double a) {
  if (!(a > std::exp(1.0))) return 1;
  return std::max(1, static_cast<int>(std::ceil(std::log(std::log(a)) / std::log(3.0))));
}

void TruncationSpec::validate() const {
  if (!(eta_exp > 0.0 && eta_exp < 1.0)) throw DomainError("truncation: eta_exp must lie in (0,1)");
  if (!(gamma_exp > 1.0)) throw DomainError("truncation: gamma_exp must exceed 1");
  if (!(c1 >= 0.0)) throw DomainError("truncation: c1 must be >= 0");
}

std::pair<double, double> TruncationSpec::bounds(double a) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (kind) {
    case TruncationKind::None:
      return {0.0, inf};
    case TruncationKind::I:
      return {0.0, a};
    case TruncationKind::J:
    case TruncationKind::K: {
      if (!(a > std::exp(1.0))) throw DomainError("truncation: J/K windows need a > e");
      double la = std::log(a);
      double lo = std::exp(std::pow(la, eta_exp));
      double hi = a / std::pow(la, gamma_exp);
      if (kind == TruncationKind::K) {
        double w = std::pow(3.0, lag_budget(a));
        lo /= w;
        hi = hi * w + c1;
      }
      if (!(hi > lo)) throw DomainError("truncation: empty window at this a");
      return {lo, hi};
    }
  }
  return {0.0, inf};
}

bool TruncationSpec::keep(double x, double a) const {
  if (kind == TruncationKind::None) return true;
  auto [lo, hi] = bounds(a);
  if (kind == TruncationKind::I) return x <= hi;
  return x > lo && x < hi;
}

std::string to_string(TruncationKind k) {
  switch (k) {
    case TruncationKind::None: return "none";
    case TruncationKind::I: return "I";
    case TruncationKind::J: return "J";
    case TruncationKind::K: return "K";
  }
  return "?";
}

TruncationKind truncation_from_string(const std::string& s) {
  if (s == "none") return TruncationKind::None;
  if (s == "I") return TruncationKind::I;
  if (s == "J") return TruncationKind::J;
  if (s == "K") return TruncationKind::K;
  throw DomainError("unknown truncation '" + s + "' (expected none, I, J or K)");
}

Displacement step_displacement(const Velocity& v, const ChannelConfig& cfg) {
  if (v.n != cfg.n) throw DomainError("step_displacement: velocity dimension differs from channel");
  double vn = v.normal();
  if (!(vn > 0.0)) throw DomainError("step_displacement: velocity must point into the channel");
  double speed2 = v.norm2();
  if (vn < kGrazing * std::sqrt(speed2)) throw GeometryError(GeometryError::Kind::Grazing, "step_displacement: grazing");
  double cross2 = 0.0;
  for (int i = cfg.k; i < cfg.n; ++i) cross2 += v.v[i] * v.v[i];
  Displacement d;
  d.tau = 2.0 * cfg.r * vn / cross2;
  for (int i = 0; i < cfg.k; ++i) d.z[i] = v.v[i] * d.tau;
  return d;
}

Displacement step_displacement(const AngleState& a, double r) {
  if (!(a.phi > 0.0 && a.phi < kPi)) throw DomainError("step_displacement: phi must lie in (0,pi)");
  if (a.phi < kGrazing || kPi - a.phi < kGrazing) throw GeometryError(GeometryError::Kind::Grazing, "step_displacement: grazing");
  double s = std::sin(a.phi);
  Displacement d;
  d.z[0] = 2.0 * r * std::cos(a.phi) / s;
  d.tau = 2.0 * r / (a.speed * s);
  return d;
}

MomentForms closed_form_moments(const ChannelConfig& cfg) {
  cfg.validate();
  const int n = cfg.n, m = cfg.codim();
  const double r = cfg.r;
  const double gamma_ratio = std::exp(std::lgamma(0.5 * (n + 1)) - std::lgamma(0.5 * n));  // G((n+1)/2)/G(n/2)
  const double codim_factor = m >= 2 ? m / (m * m - 1.0) : 1.0;
  MomentForms f;
  if (m >= 2) f.EZ2 = 4.0 * r * r / (m * m - 1.0);
  const SurfaceMeasure& mu = cfg.measure;
  if (mu.kind == MeasureKind::CosineLaw) {
    f.E_tau = 2.0 * r * std::sqrt(kPi) / (mu.s * m) * gamma_ratio;
    f.D0 = 2.0 / std::sqrt(kPi) / gamma_ratio * codim_factor * r * mu.s;
  } else {
    double bm = mu.beta * mu.M;
    f.E_tau = r / m * std::sqrt(2.0 * kPi * bm);
    double s_ms = std::sqrt((n + 1) / bm);
    f.D0 = 4.0 / std::sqrt(2.0 * kPi * (n + 1)) * codim_factor * r * s_ms;
  }
  return f;
}

double truncated_second_moment_2d(double a, double r) {
  if (!(a > 0.0)) throw DomainError("truncated_second_moment_2d: a must be positive");
  return 4.0 * r * r * moment_primitive(a);
}

double window_second_moment_2d(double lo, double hi, double r) {
  if (!(lo >= 0.0 && hi > lo)) throw DomainError("window_second_moment_2d: need 0 <= lo < hi");
  return 4.0 * r * r * (moment_primitive(hi) - moment_primitive(lo));
}

double truncated_second_moment_slab(double a, double r) {
  if (!(a > 0.0)) throw DomainError("truncated_second_moment_slab: a must be positive");
  double a2 = a * a;
  return 2.0 * r * r * (std::log1p(a2) - a2 / (1.0 + a2));
}

double displacement_second_moment(int n, int k, double r) {
  int m = n - k;
  if (k < 1 || m < 2) throw DomainError("displacement_second_moment: need k >= 1 and n - k >= 2");
  return 8.0 * r * r / (m * m - 1.0);
}

MomentEstimate estimate_moments(const ChannelConfig& cfg, const std::vector<double>& a_values, long samples,
                                std::uint64_t seed, const Execution& exec) {
  cfg.validate();
  if (!cfg.simulable()) throw DomainError("estimate_moments: unsupported (n, k)");
  const int m = cfg.codim();
  if (m == 1 && a_values.size() < 2) throw DomainError("estimate_moments: n - k = 1 needs at least two a values");
  for (double a : a_values)
    if (!(a > 1.0)) throw DomainError("estimate_moments: a values must exceed 1");
  constexpr long kChunks = 256;
  if (samples < kChunks * 16) throw DomainError("estimate_moments: need at least 4096 samples");
  const long per = samples / kChunks;
  const double umin = 1e-14, L = -std::log(umin);
  const std::size_t na = a_values.size();
  std::vector<double> lna(na);
  for (std::size_t i = 0; i < na; ++i) lna[i] = std::log(a_values[i]);

  // Per chunk: E_tau, EZ2 (untruncated), EZ2 at each a.
  const std::size_t width = 2 + na;
  std::vector<double> chunk(kChunks * width, 0.0);
  for_each_index(kChunks, exec, [&](long c) {
    Stream rng(seed, static_cast<std::uint32_t>(c), Purpose::Moments);
    double* out = &chunk[c * width];
    for (long i = 0; i < per; ++i) {
      double u = rng.bernoulli(0.5) ? rng.uniform() : std::exp(-L * rng.uniform());
      double w = u > umin ? 1.0 / (0.5 + 0.5 / (u * L)) : 2.0;
      Displacement d = step_displacement(cfg.measure.sample_at_normal_quantile(u, rng), cfg);
      double z2 = 0.0, norm2 = 0.0;
      for (int j = 0; j < cfg.k; ++j) {
        z2 += d.z[j] * d.z[j];
        norm2 += d.z[j] * d.z[j];
      }
      z2 /= cfg.k;
      out[0] += w * d.tau;
      out[1] += w * z2;
      double norm = std::sqrt(norm2);
      for (std::size_t a = 0; a < na; ++a)
        if (norm <= 2.0 * cfg.r * a_values[a]) out[2 + a] += w * z2;
    }
    for (std::size_t j = 0; j < width; ++j) out[j] /= per;
  });

  auto column = [&](std::size_t j) {
    std::vector<double> v(kChunks);
    for (long c = 0; c < kChunks; ++c) v[c] = chunk[c * width + j];
    return v;
  };
  MomentEstimate est;
  est.samples = per * kChunks;
  est.a_values = a_values;
  std::vector<double> tau = column(0);
  Summary st = summarize(tau);
  est.E_tau = st.mean;
  est.E_tau_se = st.std_error;
  std::vector<double> num;
  if (m >= 2) {
    num = column(1);
    Summary sz = summarize(num);
    est.EZ2 = sz.mean;
    est.EZ2_se = sz.std_error;
  } else {
    num.assign(kChunks, 0.0);
    for (std::size_t a = 0; a < na; ++a) {
      Summary sa = summarize(column(2 + a));
      est.EZ2_trunc.push_back(sa.mean);
      est.EZ2_trunc_se.push_back(sa.std_error);
    }
    // per-chunk slopes, so their spread carries the correlation between a values
    for (long c = 0; c < kChunks; ++c) {
      std::vector<double> y(na);
      for (std::size_t a = 0; a < na; ++a) y[a] = chunk[c * width + 2 + a];
      num[c] = fit_line(lna, y).slope;
    }
    Summary ss = summarize(num);
    est.log_slope = ss.mean;
    est.log_slope_se = ss.std_error;
  }
  Summary sn = summarize(num);
  double cov = 0.0;
  for (long c = 0; c < kChunks; ++c) cov += (num[c] - sn.mean) * (tau[c] - st.mean);
  cov /= static_cast<double>(kChunks - 1) * kChunks;
  est.D0 = sn.mean / st.mean;
  double rel2 = std::pow(sn.std_error / sn.mean, 2) + std::pow(st.std_error / st.mean, 2) - 2.0 * cov / (sn.mean * st.mean);
  est.D0_se = std::abs(est.D0) * std::sqrt(std::max(0.0, rel2));
  return est;
}

double truncated_moment(const TruncationSpec& trunc, double a, double r) {
  auto [lo, hi] = trunc.bounds(a);
  if (trunc.kind == TruncationKind::None) throw DomainError("truncated_moment: the 2D second moment is infinite");
  return window_second_moment_2d(lo, hi, r);
}

std::vector<double> truncated_observable(const AngleGrid& grid, const TruncationSpec& trunc, double a, double r) {
  auto [xlo, xhi] = trunc.bounds(a);
  // Kept angles: (atan(1/xhi), atan(1/xlo)) and its mirror.
  double p1 = std::isinf(xhi) ? 0.0 : std::atan(1.0 / xhi);
  double p2 = xlo > 0.0 ? std::atan(1.0 / xlo) : 0.5 * kPi;
  const std::pair<double, double> windows[2] = {{p1, p2}, {kPi - p2, kPi - p1}};
  std::vector<double> z(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double acc = 0.0;
    for (const auto& [wlo, whi] : windows) {
      double lo = std::max(grid.lo(i), wlo), hi = std::min(grid.hi(i), whi);
      if (hi > lo) acc += 2.0 * std::cos(0.5 * (hi + lo)) * std::sin(0.5 * (hi - lo));
    }
    z[i] = r * acc / grid.weights()[i];
  }
  return z;
}

FlightRecord simulate_chain(const CollisionKernel& kernel, const ChannelConfig& cfg, long steps, Stream& rng) {
  cfg.validate();
  if (!cfg.simulable()) throw DomainError("simulate_chain: unsupported (n, k)");
  require_kernel(kernel, cfg, "simulate_chain");
  if (steps < 1) throw DomainError("simulate_chain: steps must be >= 1");
  FlightRecord rec;
  rec.velocities.reserve(steps);
  rec.displacements.reserve(steps);
  if (cfg.n == 2) {
    AngleState s = cfg.measure.sample_angle_state(rng);
    for (long j = 0; j < steps; ++j) {
      if (j > 0) s = kernel.step(s, rng);
      rec.velocities.push_back(to_velocity(s));
      rec.displacements.push_back(step_displacement(s, cfg.r));
    }
  } else {
    Velocity v = cfg.measure.sample(rng);
    for (long j = 0; j < steps; ++j) {
      if (j > 0) v = kernel.step_velocity(v, rng);
      rec.velocities.push_back(v);
      rec.displacements.push_back(step_displacement(v, cfg));
    }
  }
  return rec;
}

long collisions_until(const CollisionKernel& kernel, const ChannelConfig& cfg, double T, Stream& rng) {
  cfg.validate();
  require_kernel(kernel, cfg, "collisions_until");
  if (!(T > 0.0)) throw DomainError("collisions_until: T must be positive");
  long count = 0;
  double time = 0.0;
  if (cfg.n == 2) {
    AngleState s = cfg.measure.sample_angle_state(rng);
    while (true) {
      time += step_displacement(s, cfg.r).tau;
      if (time > T) break;
      ++count;
      s = kernel.step(s, rng);
    }
  } else {
    Velocity v = cfg.measure.sample(rng);
    while (true) {
      time += step_displacement(v, cfg).tau;
      if (time > T) break;
      ++count;
      v = kernel.step_velocity(v, rng);
    }
  }
  return count;
}

std::string to_string(Estimator e) { return e == Estimator::Direct ? "direct" : "lag_sum"; }

Estimator estimator_from_string(const std::string& s) {
  if (s == "direct") return Estimator::Direct;
  if (s == "lag_sum") return Estimator::LagSum;
  throw DomainError("unknown estimator '" + s + "' (expected direct or lag_sum)");
}

double sample_z2_angle(double lo, double hi, double u) {
  if (!(lo >= 0.0 && hi > lo && std::isfinite(hi))) throw DomainError("sample_z2_angle: need 0 <= lo < hi < inf");
  double f_lo = moment_primitive(lo), f_hi = moment_primitive(hi);
  double target = f_lo + u * (f_hi - f_lo);
  auto f = [&](double x) { return moment_primitive(x) - target; };
  double x;
  if (f(lo) >= 0.0) {
    x = lo;
  } else if (f(hi) <= 0.0) {
    x = hi;
  } else {
    std::uintmax_t iters = 200;
    auto root = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
    x = 0.5 * (root.first + root.second);
  }
  return std::atan2(1.0, x);
}

namespace {

// Direct estimator: reps independent stationary chains of n_{a,t} steps.
void run_direct(const CollisionKernel& kernel, const ChannelConfig& cfg, const ScalingSchedule& sch,
                const TruncationSpec& trunc, const DiffusivityOptions& opt, DiffusivityResult& res) {
  const int R = opt.reps;
  const std::size_t na = sch.a_values.size();
  res.rows.assign(na * R, RepRow{});
  for (std::size_t m = 0; m < na; ++m) {
    const double a = sch.a_values[m];
    const long N = res.steps[m];
    auto [xlo, xhi] = trunc.bounds(a);
    auto keep = [&](double x) {
      if (trunc.kind == TruncationKind::None) return true;
      if (trunc.kind == TruncationKind::I) return x <= xhi;
      return x > xlo && x < xhi;
    };
    for_each_index(R, opt.exec, [&](long rep) {
      std::uint32_t id = static_cast<std::uint32_t>(m * R + rep);
      Stream rng(opt.seed, id, Purpose::Chain);
      double sum = 0.0, sum_t = 0.0;
      if (cfg.n == 2) {
        AngleState s = cfg.measure.sample_angle_state(rng);
        for (long j = 0; j < N; ++j) {
          if (j > 0) s = kernel.step(s, rng);
          double z = step_displacement(s, cfg.r).z[0];
          sum += z;
          if (keep(std::abs(z) / (2.0 * cfg.r))) sum_t += z;
        }
      } else {
        Velocity v = cfg.measure.sample(rng);
        for (long j = 0; j < N; ++j) {
          if (j > 0) v = kernel.step_velocity(v, rng);
          Displacement d = step_displacement(v, cfg);
          sum += d.z[0];
          if (keep(norm_of(d, cfg.k) / (2.0 * cfg.r))) sum_t += d.z[0];
        }
      }
      RepRow& row = res.rows[m * R + rep];
      row.a = a;
      row.rep = static_cast<int>(rep);
      row.sum_z = sum;
      row.sum_z_trunc = sum_t;
      row.collisions = N;
      row.seed = opt.seed;
    });
  }
}

// Exact normalizer E[(Z^u_a)^2] when known.
std::optional<double> exact_moment(const ChannelConfig& cfg, const TruncationSpec& trunc, double a) {
  if (cfg.n == 2 && trunc.kind != TruncationKind::None) return truncated_moment(trunc, a, cfg.r);
  if (cfg.n == 3 && cfg.k == 2 && trunc.kind == TruncationKind::I) return truncated_second_moment_slab(a, cfg.r);
  if (cfg.codim() >= 2 && trunc.kind == TruncationKind::None) return displacement_second_moment(cfg.n, cfg.k, cfg.r);
  return std::nullopt;
}

}  // namespace

DiffusivityResult diffusivity_mc(const CollisionKernel& kernel, const ChannelConfig& cfg,
                                 const ScalingSchedule& schedule, const TruncationSpec& trunc,
                                 const DiffusivityOptions& opt) {
  cfg.validate();
  schedule.validate();
  trunc.validate();
  if (!cfg.simulable()) throw DomainError("diffusivity_mc: unsupported (n, k)");
  require_kernel(kernel, cfg, "diffusivity_mc");
  if (opt.reps < 32) throw DomainError("diffusivity_mc: reps must be >= 32");
  if (cfg.codim() == 1 && cfg.n == 2 && trunc.kind == TruncationKind::None)
    throw DomainError("diffusivity_mc: n - k = 1 needs a truncation");

  MomentForms mf = closed_form_moments(cfg);
  DiffusivityResult res;
  res.label = kernel.label();
  res.estimator = opt.estimator;
  res.t = schedule.t;
  res.D0 = mf.D0;
  res.mean_tau = mf.E_tau;
  res.a_values = schedule.a_values;
  const std::size_t na = schedule.a_values.size();
  for (double a : schedule.a_values) res.steps.push_back(collision_count(a, schedule.t, cfg.codim(), mf.E_tau));
  res.D.assign(na, 0.0);
  res.D_se.assign(na, 0.0);
  res.eta.assign(na, 0.0);
  res.eta_se.assign(na, 0.0);
  res.eta_raw.assign(na, 0.0);
  const int R = opt.reps;

  if (opt.estimator == Estimator::Direct) {
    double work = 0.0;
    for (long n : res.steps) work += static_cast<double>(n) * R;
    if (work > 1e11) res.warnings.push_back("direct estimator: more than 1e11 steps requested");
    run_direct(kernel, cfg, schedule, trunc, opt, res);
    for (std::size_t m = 0; m < na; ++m) {
      double a = schedule.a_values[m];
      std::vector<double> sq(R);
      for (int i = 0; i < R; ++i) {
        double s = res.rows[m * R + i].sum_z_trunc;
        sq[i] = s * s;
      }
      Summary sm = summarize(sq);
      double scale = 1.0 / (a * a * schedule.t);
      res.D[m] = sm.mean * scale;
      res.D_se[m] = sm.std_error * scale;
      auto c0 = exact_moment(cfg, trunc, a);
      double norm = c0 ? *c0 * res.steps[m] * scale : res.D0;
      res.eta[m] = res.D[m] / norm;
      res.eta_se[m] = res.D_se[m] / norm;
      for (int i = 0; i < R; ++i) res.rows[m * R + i].eta = sq[i] * scale / norm;
    }
  } else {
    require_2d(cfg, "diffusivity_mc(lag_sum)");
    if (trunc.kind == TruncationKind::None) throw DomainError("lag_sum: needs a truncation");
    if (opt.lags < 1) throw DomainError("lag_sum: lags must be >= 1");
    if (opt.samples_per_rep < 1) throw DomainError("lag_sum: samples_per_rep must be >= 1");
    const double A = schedule.a_values.back();
    auto [Alo, Ahi] = trunc.bounds(A);
    const double cA = truncated_moment(trunc, A, 1.0);
    std::vector<double> lo(na), hi(na), ratio(na);
    for (std::size_t m = 0; m < na; ++m) {
      std::tie(lo[m], hi[m]) = trunc.bounds(schedule.a_values[m]);
      if (lo[m] < Alo || hi[m] > Ahi) throw DomainError("lag_sum: truncation windows must be nested in the largest a");
      ratio[m] = cA / truncated_moment(trunc, schedule.a_values[m], 1.0);
    }
    const bool closed = trunc.kind == TruncationKind::I;
    auto inside = [&](double x, std::size_t m) { return closed ? x <= hi[m] : (x > lo[m] && x < hi[m]); };
    const int K = opt.lags;
    std::vector<std::vector<double>> w(na, std::vector<double>(K + 1));
    for (std::size_t m = 0; m < na; ++m)
      for (int k = 1; k <= K; ++k) w[m][k] = 2.0 * std::max(0.0, 1.0 - static_cast<double>(k) / res.steps[m]);
    std::vector<double> per_rep(na * R, 0.0);
    res.rows.assign(na * R, RepRow{});

    for_each_index(R, opt.exec, [&](long rep) {
      Stream rng(opt.seed, static_cast<std::uint32_t>(rep), Purpose::Chain);
      std::vector<double> acc(na), total(na, 0.0);
      for (long smp = 0; smp < opt.samples_per_rep; ++smp) {
        double phi = sample_z2_angle(Alo, Ahi, rng.uniform());
        if (rng.bernoulli(0.5)) phi = kPi - phi;
        AngleState s{phi, cfg.measure.sample_speed(rng)};
        double x0 = cot(phi);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int k = 1; k <= K; ++k) {
          s = kernel.step(s, rng);
          double x = cot(s.phi), ax = std::abs(x);
          for (std::size_t m = 0; m < na; ++m)
            if (inside(ax, m)) acc[m] += w[m][k] * x;
        }
        for (std::size_t m = 0; m < na; ++m)
          if (inside(std::abs(x0), m)) total[m] += ratio[m] * (1.0 + acc[m] / x0);
      }
      for (std::size_t m = 0; m < na; ++m) per_rep[m * R + rep] = total[m] / opt.samples_per_rep;
    });

    for (std::size_t m = 0; m < na; ++m) {
      double a = schedule.a_values[m];
      std::vector<double> y(per_rep.begin() + m * R, per_rep.begin() + (m + 1) * R);
      Summary sm = summarize(y);
      double c0 = truncated_moment(trunc, a, cfg.r);
      double scale = c0 * res.steps[m] / (a * a * schedule.t);
      res.eta[m] = sm.mean;
      res.eta_se[m] = sm.std_error;
      res.D[m] = sm.mean * scale;
      res.D_se[m] = sm.std_error * scale;
      for (int i = 0; i < R; ++i) {
        RepRow& row = res.rows[m * R + i];
        row.a = a;
        row.rep = i;
        row.sum_z = std::numeric_limits<double>::quiet_NaN();
        row.sum_z_trunc = std::numeric_limits<double>::quiet_NaN();
        row.collisions = opt.samples_per_rep * (K + 1);
        row.eta = y[i];
        row.seed = opt.seed;
      }
    }
  }

  for (std::size_t m = 0; m < na; ++m) {
    res.eta_raw[m] = res.D[m] / res.D0;
    if (res.eta_se[m] > 0.05 * std::abs(res.eta[m]))
      res.warnings.push_back("relative standard error above 5% at a=" + std::to_string(schedule.a_values[m]) +
                             "; increase reps");
  }
  if (cfg.codim() == 1 && na >= 4) {
    res.fit = eta_extrapolate(schedule.a_values, res.eta, res.eta_se);
    if (res.fit.warning) res.warnings.push_back("eta_a tail is not monotone beyond noise");
  } else {
    res.fit.eta = res.eta.back();
    res.fit.uncertainty = res.eta_se.back();
  }
  return res;
}

CorrelationProfile correlation_profile(const CollisionKernel& kernel, const ChannelConfig& cfg, double a,
                                       const TruncationSpec& trunc, const CorrelationOptions& opt) {
  cfg.validate();
  trunc.validate();
  require_2d(cfg, "correlation_profile");
  require_kernel(kernel, cfg, "correlation_profile");
  if (opt.samples < opt.batches || opt.batches < 2) throw DomainError("correlation_profile: need samples >= batches >= 2");
  TruncationSpec tj = trunc, tk = trunc;
  tj.kind = TruncationKind::J;
  tk.kind = TruncationKind::K;
  auto [jlo, jhi] = tj.bounds(a);
  auto [klo, khi] = tk.bounds(a);
  const int jmax = opt.j_max > 0 ? opt.j_max : lag_budget(a) + 1;
  if (jmax > lag_budget(a) + 4) throw DomainError("correlation_profile: j_max exceeds C(a) plus margin");
  const int B = opt.batches;
  const long per = opt.samples / B;
  std::vector<std::vector<double>> sums(B, std::vector<double>(jmax + 1, 0.0));

  for_each_index(B, opt.exec, [&](long b) {
    Stream rng(opt.seed, static_cast<std::uint32_t>(b), Purpose::Correlation);
    std::vector<double>& acc = sums[b];
    for (long i = 0; i < per; ++i) {
      double phi = sample_z2_angle(jlo, jhi, rng.uniform());
      if (rng.bernoulli(0.5)) phi = kPi - phi;
      AngleState s{phi, cfg.measure.sample_speed(rng)};
      double x0 = cot(phi);
      acc[0] += 1.0;
      for (int j = 1; j <= jmax; ++j) {
        s = kernel.step(s, rng);
        double x = cot(s.phi), ax = std::abs(x);
        if (ax > klo && ax < khi) acc[j] += x / x0;
      }
    }
  });

  auto fit_ratio = [&](const std::vector<double>& rho) {
    double num = 0.0, den = 0.0;
    for (int j = 0; j < jmax; ++j) {
      num += rho[j] * rho[j + 1];
      den += rho[j] * rho[j];
    }
    return num / den;
  };

  CorrelationProfile out;
  out.a = a;
  out.rho.assign(jmax + 1, 0.0);
  out.rho_se.assign(jmax + 1, 0.0);
  std::vector<double> zetas(B);
  std::vector<std::vector<double>> rb(jmax + 1, std::vector<double>(B));
  for (int b = 0; b < B; ++b) {
    std::vector<double> rho(jmax + 1);
    for (int j = 0; j <= jmax; ++j) rho[j] = rb[j][b] = sums[b][j] / per;
    zetas[b] = fit_ratio(rho);
  }
  for (int j = 0; j <= jmax; ++j) {
    Summary sm = summarize(rb[j]);
    out.rho[j] = sm.mean;
    out.rho_se[j] = sm.std_error;
  }
  double c0 = window_second_moment_2d(jlo, jhi, cfg.r);
  for (double r : out.rho) out.products.push_back(c0 * r);
  out.zeta = fit_ratio(out.rho);
  out.zeta_se = summarize(zetas).std_error;
  return out;
}

namespace {

// E[cot Psi / cot phi | phi] under the closed shallow density of `cell`.
double shallow_q_mean(const CellGeometry& cell, double phi, unsigned depth) {
  CellGeometry base = cell;
  double sign = 1.0, keep = 1.0, atom = 0.0;
  switch (cell.family) {
    case Family::Semicircle:
    case Family::FlatBottom:
      break;
    case Family::FlatTop:
      base = CellGeometry::semicircle();
      keep = 1.0 - cell.h;
      atom = cell.h;
      break;
    case Family::MiddleWall:
      base = CellGeometry::semicircle();
      if (cell.h > 0.5) throw DomainError("shallow_q_expectation: middle wall with h > 1/2 has no shallow closed form");
      if (cell.h == 0.5) sign = -1.0;
      break;
  }
  if (!(std::min(phi, kPi - phi) < kShallowThreshold)) throw DomainError("shallow_q_expectation: phi too large");
  double cphi = cot(phi);
  double total = 0.0;
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  for (const auto& [lo, hi] : shallow_support(base, phi)) {
    if (hi <= 0.5 * kPi) {
      auto f = [&](double psi) { return cot(psi) / cphi * shallow_kernel_density(base, phi, psi); };
      total += GK::integrate(f, lo, hi, depth, 1e-13);
    } else {
      // chi = pi - psi keeps cot accurate near pi.
      auto f = [&](double chi) { return -cot(chi) / cphi * shallow_kernel_density(base, phi, kPi - chi); };
      total += GK::integrate(f, kPi - hi, kPi - lo, depth, 1e-13);
    }
  }
  return atom + keep * sign * total;
}

}  // namespace

QExpectation shallow_q_expectation(const CellGeometry& cell, double phi, int j, long samples, std::uint64_t seed) {
  cell.validate();
  if (!(phi > 0.0 && phi < kPi)) throw DomainError("shallow_q_expectation: phi must lie in (0,pi)");
  if (j < 1) throw DomainError("shallow_q_expectation: j must be >= 1");
  if (!(std::min(phi, kPi - phi) < kShallowThreshold)) throw DomainError("shallow_q_expectation: phi too large");
  if (j == 1) return {shallow_q_mean(cell, phi, 10), 0.0};
  if (samples < 2) throw DomainError("shallow_q_expectation: samples must be >= 2");
  CollisionKernel kernel = microstructure_kernel(cell);
  Stream rng(seed, 0, Purpose::Correlation);
  std::vector<double> vals(samples);
  for (long i = 0; i < samples; ++i) {
    AngleState s{phi, 1.0};
    double prod = 1.0;
    for (int step = 1; step < j; ++step) {
      AngleState next = kernel.step(s, rng);
      if (!(std::min(next.phi, kPi - next.phi) < kShallowThreshold))
        throw NumericError("shallow_q_expectation: chain left the shallow range; use a smaller phi");
      prod *= cot(next.phi) / cot(s.phi);
      s = next;
    }
    vals[i] = prod * shallow_q_mean(cell, s.phi, 0);
  }
  Summary sm = summarize(vals);
  return {sm.mean, sm.std_error};
}

ExitTimeResult mean_exit_time(const CollisionKernel& kernel, const ChannelConfig& cfg, const ExitTimeOptions& opt,
                              std::optional<double> D) {
  cfg.validate();
  if (!cfg.L) throw DomainError("mean_exit_time: channel half-length L is required");
  const double L = *cfg.L, r = cfg.r;
  if (!(L / r >= 10.0)) throw DomainError("mean_exit_time: L/r must be >= 10");
  if (opt.reps < 1000) throw DomainError("mean_exit_time: reps must be >= 1000");
  if (opt.max_collisions < 1) throw DomainError("mean_exit_time: max_collisions must be >= 1");
  if (!opt.brownian) {
    if (!cfg.simulable()) throw DomainError("mean_exit_time: unsupported (n, k)");
    require_kernel(kernel, cfg, "mean_exit_time");
  } else if (!(opt.brownian_D > 0.0 && opt.brownian_step > 0.0 && opt.brownian_step < 0.5)) {
    throw DomainError("mean_exit_time: Brownian mode needs D > 0 and step in (0, 1/2)");
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ExitTimeResult res;
  res.L = L;
  res.r = r;
  res.reps = opt.reps;
  res.times.assign(opt.reps, nan);
  res.collisions.assign(opt.reps, 0);

  for_each_index(opt.reps, opt.exec, [&](long rep) {
    Stream rng(opt.seed, static_cast<std::uint32_t>(rep), Purpose::ExitTime);
    double x = 0.0, t = 0.0;
    long c = 0;
    if (opt.brownian) {
      const double sigma = opt.brownian_step * L, dt = sigma * sigma / opt.brownian_D;
      const double s2 = sigma * sigma;
      for (; c < opt.max_collisions; ++c) {
        double y = x + sigma * rng.normal();
        if (std::abs(y) >= L) {
          double b = y > 0.0 ? L : -L;
          res.times[rep] = t + dt * (b - x) / (y - x);
          break;
        }
        // Bridge crossing between two interior points.
        double p = std::exp(-2.0 * (L - x) * (L - y) / s2) + std::exp(-2.0 * (L + x) * (L + y) / s2);
        if (rng.uniform() < p) {
          res.times[rep] = t + 0.5 * dt;
          break;
        }
        x = y;
        t += dt;
      }
    } else if (cfg.n == 2) {
      AngleState s = cfg.measure.sample_angle_state(rng);
      for (; c < opt.max_collisions; ++c) {
        Displacement d = step_displacement(s, r);
        double y = x + d.z[0];
        if (std::abs(y) >= L) {
          double b = y > 0.0 ? L : -L;
          res.times[rep] = t + d.tau * (b - x) / d.z[0];
          break;
        }
        x = y;
        t += d.tau;
        s = kernel.step(s, rng);
      }
    } else {
      Velocity v = cfg.measure.sample(rng);
      for (; c < opt.max_collisions; ++c) {
        Displacement d = step_displacement(v, cfg);
        double y = x + d.z[0];
        if (std::abs(y) >= L) {
          double b = y > 0.0 ? L : -L;
          res.times[rep] = t + d.tau * (b - x) / d.z[0];
          break;
        }
        x = y;
        t += d.tau;
        v = kernel.step_velocity(v, rng);
      }
    }
    res.collisions[rep] = c;
  });

  std::vector<double> done;
  done.reserve(opt.reps);
  for (double t : res.times)
    if (std::isfinite(t)) done.push_back(t);
  res.censored = opt.reps - static_cast<long>(done.size());
  res.censored_fraction = static_cast<double>(res.censored) / opt.reps;
  if (done.size() < 2) throw NumericError("mean_exit_time: fewer than two uncensored trajectories");
  Summary sm = summarize(done);
  res.mean = sm.mean;
  res.se = sm.std_error;
  res.ci_lo = sm.mean - 1.96 * sm.std_error;
  res.ci_hi = sm.mean + 1.96 * sm.std_error;
  if (D) res.tau_pred = opt.brownian ? L * L / *D : predicted_tau(L, r, *D, cfg.codim());
  return res;
}

ExitFit fit_exit_times(const std::vector<ExitTimeResult>& runs, int codim) {
  if (runs.size() < 2) throw DomainError("fit_exit_times: need at least two lengths");
  std::vector<double> x, y;
  for (const auto& run : runs) {
    double L2 = run.L * run.L;
    x.push_back(codim >= 2 ? L2 : L2 / std::log(run.L / run.r));
    y.push_back(run.mean);
  }
  ExitFit f;
  f.line = runs.size() >= 3 ? fit_line(x, y) : fit_proportional(x, y);
  if (!(f.line.slope > 0.0)) throw NumericError("fit_exit_times: non-positive slope");
  f.D = 1.0 / f.line.slope;
  return f;
}

CltReport clt_check(const CollisionKernel& kernel, const ChannelConfig& cfg, double eta_trunc, const CltOptions& opt) {
  cfg.validate();
  opt.trunc.validate();
  require_2d(cfg, "clt_check");
  require_kernel(kernel, cfg, "clt_check");
  if (opt.reps < 1000) throw DomainError("clt_check: reps must be >= 1000");
  if (!(eta_trunc > 0.0)) throw DomainError("clt_check: eta must be positive");
  if (!(opt.a > 10.0 && opt.t > 0.0)) throw DomainError("clt_check: need a > 10 and t > 0");
  const double a = opt.a, r = cfg.r;
  MomentForms mf = closed_form_moments(cfg);
  const long N = collision_count(a, opt.t, 1, mf.E_tau);
  if (N < 4) throw DomainError("clt_check: too few collisions; raise t");
  auto [xlo, xhi] = opt.trunc.bounds(a);
  const bool closed = opt.trunc.kind == TruncationKind::I;
  auto keep = [&](double x) { return closed ? x <= xhi : (x > xlo && x < xhi); };
  // Bernstein blocks: big n^0.6, small n^0.01, alternating.
  const long big = std::max(1L, static_cast<long>(std::pow(static_cast<double>(N), 0.6)));
  const long small = std::max(1L, static_cast<long>(std::pow(static_cast<double>(N), 0.01)));
  const long period = big + small;

  CltReport rep;
  rep.a = a;
  rep.t = opt.t;
  rep.steps = N;
  rep.reps = opt.reps;
  rep.variance = static_cast<double>(N) * truncated_moment(opt.trunc, a, r) * eta_trunc / (a * a);
  std::vector<double> total(opt.reps), w1(opt.reps), w2(opt.reps), smalls(opt.reps);

  for_each_index(opt.reps, opt.exec, [&](long i) {
    Stream rng(opt.seed, static_cast<std::uint32_t>(i), Purpose::Clt);
    AngleState s = cfg.measure.sample_angle_state(rng);
    double s1 = 0.0, s2 = 0.0, sm = 0.0;
    const long half = N / 2;
    for (long j = 0; j < N; ++j) {
      if (j > 0) s = kernel.step(s, rng);
      double x = cot(s.phi);
      if (!keep(std::abs(x))) continue;
      double z = 2.0 * r * x;
      (j < half ? s1 : s2) += z;
      if (j % period >= big) sm += z;
    }
    total[i] = (s1 + s2) / a;
    w1[i] = s1;
    w2[i] = s2;
    smalls[i] = sm / a;
  });

  const double sd = std::sqrt(rep.variance);
  rep.standardized.resize(opt.reps);
  for (long i = 0; i < opt.reps; ++i) rep.standardized[i] = total[i] / sd;
  rep.ks = ks_one_sample(rep.standardized, normal_cdf);
  rep.empirical_sd = std::sqrt(summarize(rep.standardized).variance);
  rep.window_corr = pearson(w1, w2);
  rep.window_corr_se = 1.0 / std::sqrt(static_cast<double>(opt.reps));
  double vt = summarize(total).variance;
  rep.small_block_fraction = vt > 0.0 ? summarize(smalls).variance / vt : 0.0;
  return rep;
}

}  // namespace knudsen
