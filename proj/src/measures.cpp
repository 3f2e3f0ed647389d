#include "knudsen/measures.hpp"

#include <cmath>
#include <numbers>

#include "knudsen/error.hpp"

namespace knudsen {

namespace {
constexpr double kPi = std::numbers::pi;
}

AngleState to_angle(const Velocity& v) {
  if (v.n != 2) throw DomainError("to_angle: 2D velocity required");
  return {std::atan2(v.v[1], v.v[0]), std::hypot(v.v[0], v.v[1])};
}

Velocity to_velocity(const AngleState& a) {
  Velocity v;
  v.n = 2;
  v.v = {a.speed * std::cos(a.phi), a.speed * std::sin(a.phi), 0.0};
  return v;
}

SurfaceMeasure SurfaceMeasure::cosine(int n, double s) {
  SurfaceMeasure m;
  m.kind = MeasureKind::CosineLaw;
  m.n = n;
  m.s = s;
  m.validate();
  return m;
}

SurfaceMeasure SurfaceMeasure::maxwellian(int n, double beta, double M) {
  SurfaceMeasure m;
  m.kind = MeasureKind::SurfaceMaxwellian;
  m.n = n;
  m.beta = beta;
  m.M = M;
  m.validate();
  return m;
}

void SurfaceMeasure::validate() const {
  if (n < 2) throw DomainError("measure: dimension must be >= 2");
  if (kind == MeasureKind::CosineLaw && !(s > 0.0)) throw DomainError("measure: speed must be positive");
  if (kind == MeasureKind::SurfaceMaxwellian && !(beta > 0.0 && M > 0.0))
    throw DomainError("measure: beta and M must be positive");
}

std::string SurfaceMeasure::label() const {
  if (kind == MeasureKind::CosineLaw) return "cosine(n=" + std::to_string(n) + ",s=" + std::to_string(s) + ")";
  return "maxwellian(n=" + std::to_string(n) + ",beta=" + std::to_string(beta) + ",M=" + std::to_string(M) + ")";
}

double SurfaceMeasure::angle_density(double phi) {
  return (phi > 0.0 && phi < kPi) ? 0.5 * std::sin(phi) : 0.0;
}

double SurfaceMeasure::angle_cdf(double phi) {
  if (phi <= 0.0) return 0.0;
  if (phi >= kPi) return 1.0;
  double s = std::sin(0.5 * phi);
  return s * s;
}

double SurfaceMeasure::angle_quantile(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return kPi;
  return 2.0 * std::asin(std::sqrt(u));
}

double SurfaceMeasure::angle_mass(double lo, double hi) {
  // (cos lo - cos hi)/2 written as a product to avoid cancellation.
  return std::sin(0.5 * (lo + hi)) * std::sin(0.5 * (hi - lo));
}

double SurfaceMeasure::mean_square_speed() const {
  if (kind == MeasureKind::CosineLaw) return s * s;
  return (n + 1) / (beta * M);
}

double SurfaceMeasure::rms_speed() const { return std::sqrt(mean_square_speed()); }

double SurfaceMeasure::velocity_density_2d(const AngleState& a) const {
  if (kind != MeasureKind::SurfaceMaxwellian || n != 2)
    throw DomainError("velocity_density_2d: 2D Maxwellian required");
  if (!(a.phi > 0.0 && a.phi < kPi) || a.speed <= 0.0) return 0.0;
  double c = beta * M;
  double vn = a.speed * std::sin(a.phi);
  return 2.0 * kPi * std::pow(c / (2.0 * kPi), 1.5) * vn * std::exp(-0.5 * c * a.speed * a.speed);
}

double SurfaceMeasure::sample_speed(Stream& rng) const {
  if (kind == MeasureKind::CosineLaw) return s;
  // In 2D the speed density is proportional to v^2 exp(-c v^2/2): a chi law
  // with three degrees of freedom. In general n it has n+1.
  double sig = 1.0 / std::sqrt(beta * M);
  double acc = 0.0;
  for (int i = 0; i < n + 1; ++i) {
    double z = rng.normal();
    acc += z * z;
  }
  return sig * std::sqrt(acc);
}

AngleState SurfaceMeasure::sample_angle_state(Stream& rng) const {
  if (n != 2) throw DomainError("sample_angle_state: 2D measure required");
  AngleState a;
  // x uniform in (-1,1): cos(phi) = x gives density sin(phi)/2.
  a.phi = std::acos(2.0 * rng.uniform() - 1.0);
  a.speed = sample_speed(rng);
  return a;
}

Velocity SurfaceMeasure::sample(Stream& rng) const {
  if (n != 2 && n != 3) throw DomainError("SurfaceMeasure::sample: n must be 2 or 3");
  std::vector<double> v = kind == MeasureKind::CosineLaw ? sample_cosine_hemisphere(n, s, rng)
                                                         : sample_surface_maxwellian(n, beta, M, rng);
  Velocity out;
  out.n = n;
  for (int i = 0; i < n; ++i) out.v[i] = v[i];
  return out;
}

Velocity SurfaceMeasure::sample_at_normal_quantile(double u, Stream& rng) const {
  if (n != 2 && n != 3) throw DomainError("sample_at_normal_quantile: n must be 2 or 3");
  if (!(u > 0.0 && u < 1.0)) throw DomainError("sample_at_normal_quantile: u must lie in (0,1)");
  const int m = n - 1;
  Velocity out;
  out.n = n;
  double normal, tangent;
  if (kind == MeasureKind::CosineLaw) {
    // rho^m uniform in the unit (n-1)-ball, normal = sqrt(1 - rho^2)
    double g2 = -std::expm1((2.0 / m) * std::log1p(-u));
    normal = s * std::sqrt(g2);
    tangent = s * std::sqrt(std::max(0.0, 1.0 - g2));
  } else {
    double sig = 1.0 / std::sqrt(beta * M);
    normal = sig * std::sqrt(-2.0 * std::log1p(-u));
    for (int i = 0; i < m; ++i) out.v[i] = sig * rng.normal();
    out.v[m] = normal;
    return out;
  }
  if (m == 1) {
    out.v[0] = rng.bernoulli(0.5) ? tangent : -tangent;
  } else {
    double t = 2.0 * kPi * rng.uniform();
    out.v[0] = tangent * std::cos(t);
    out.v[1] = tangent * std::sin(t);
  }
  out.v[m] = normal;
  return out;
}

std::vector<double> sample_cosine_hemisphere(int n, double s, Stream& rng) {
  if (n < 2) throw DomainError("sample_cosine_hemisphere: n must be >= 2");
  if (!(s > 0.0)) throw DomainError("sample_cosine_hemisphere: s must be positive");
  int m = n - 1;
  std::vector<double> x(n);
  double r2 = 0.0;
  if (m == 1) {
    x[0] = 2.0 * rng.uniform() - 1.0;
    r2 = x[0] * x[0];
  } else {
    double norm2 = 0.0;
    for (int i = 0; i < m; ++i) {
      x[i] = rng.normal();
      norm2 += x[i] * x[i];
    }
    double rad = std::pow(rng.uniform(), 1.0 / m) / std::sqrt(norm2);
    for (int i = 0; i < m; ++i) {
      x[i] *= rad;
      r2 += x[i] * x[i];
    }
  }
  x[m] = std::sqrt(std::max(0.0, 1.0 - r2));
  for (double& c : x) c *= s;
  return x;
}

std::vector<double> sample_surface_maxwellian(int n, double beta, double M, Stream& rng) {
  if (n < 2) throw DomainError("sample_surface_maxwellian: n must be >= 2");
  if (!(beta > 0.0 && M > 0.0)) throw DomainError("sample_surface_maxwellian: beta, M must be positive");
  double sig = 1.0 / std::sqrt(beta * M);
  std::vector<double> v(n);
  for (int i = 0; i < n - 1; ++i) v[i] = sig * rng.normal();
  v[n - 1] = sig * std::sqrt(-2.0 * std::log(rng.uniform()));
  return v;
}

}  // namespace knudsen
