#include "knudsen/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "knudsen/error.hpp"
#include "knudsen/measures.hpp"

namespace knudsen {

namespace {
constexpr double kPi = std::numbers::pi;
}

double angle_quantile_in(double lo, double hi, double u) {
  if (lo >= 0.5 * kPi) return kPi - angle_quantile_in(kPi - hi, kPi - lo, 1.0 - u);
  double f_lo = SurfaceMeasure::angle_cdf(lo);
  double mass = SurfaceMeasure::angle_mass(lo, hi);
  double phi = SurfaceMeasure::angle_quantile(f_lo + u * mass);
  return std::clamp(phi, lo, hi);
}

AngleGrid::AngleGrid(std::vector<double> edges) : edges_(std::move(edges)) {
  std::size_t n = edges_.size() - 1;
  weights_.resize(n);
  nodes_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    weights_[i] = SurfaceMeasure::angle_mass(edges_[i], edges_[i + 1]);
    nodes_[i] = angle_quantile_in(edges_[i], edges_[i + 1], 0.5);
  }
}

AngleGrid AngleGrid::graded(std::size_t n, double c) {
  if (n < 2 || n % 2 != 0) throw DomainError("AngleGrid::graded: size must be even and >= 2");
  std::size_t half = n / 2;
  std::vector<double> e(n + 1);
  double lg = std::log1p(0.5 * kPi / c);
  for (std::size_t i = 0; i <= half; ++i) {
    double u = static_cast<double>(i) / half;
    e[i] = c * std::expm1(u * lg);
  }
  e[0] = 0.0;
  e[half] = 0.5 * kPi;
  for (std::size_t i = 0; i < half; ++i) e[n - i] = kPi - e[i];
  return AngleGrid(std::move(e));
}

AngleGrid AngleGrid::quantile(std::size_t n) {
  if (n < 2 || n % 2 != 0) throw DomainError("AngleGrid::quantile: size must be even and >= 2");
  std::vector<double> e(n + 1);
  std::size_t half = n / 2;
  for (std::size_t i = 0; i <= half; ++i) e[i] = SurfaceMeasure::angle_quantile(static_cast<double>(i) / n);
  e[half] = 0.5 * kPi;
  for (std::size_t i = 0; i < half; ++i) e[n - i] = kPi - e[i];
  return AngleGrid(std::move(e));
}

AngleGrid AngleGrid::make(GridKind kind, std::size_t n) {
  return kind == GridKind::Graded ? graded(n) : quantile(n);
}

std::size_t AngleGrid::find(double psi) const {
  auto it = std::upper_bound(edges_.begin(), edges_.end(), psi);
  std::size_t i = it == edges_.begin() ? 0 : static_cast<std::size_t>(it - edges_.begin()) - 1;
  return std::min(i, size() - 1);
}

double AngleGrid::quantile_in(std::size_t i, double u) const { return angle_quantile_in(lo(i), hi(i), u); }

}  // namespace knudsen
