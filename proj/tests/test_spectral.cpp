#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "knudsen/error.hpp"
#include "knudsen/grid.hpp"
#include "knudsen/kernels.hpp"
#include "knudsen/random.hpp"
#include "knudsen/spectral.hpp"

using namespace knudsen;

namespace {

constexpr double pi = std::numbers::pi;
const double eta_semicircle = (1 - 0.25 * std::log(3.0)) / (1 + 0.25 * std::log(3.0));

const CollisionKernel& semicircle() {
  static const CollisionKernel k = microstructure_kernel(CellGeometry::semicircle());
  return k;
}

const Decomposition& semicircle_512() {
  static const Decomposition d = spectrum(discretize_kernel(semicircle(), 512));
  return d;
}

}  // namespace

TEST_CASE("angle grids") {
  for (AngleGrid g : {AngleGrid::graded(256), AngleGrid::quantile(256)}) {
    double total = 0;
    for (double w : g.weights()) total += w;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(g.edges().front() == 0.0);
    CHECK(g.edges().back() == doctest::Approx(pi));
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(g.weights()[i] == doctest::Approx(g.weights()[g.size() - 1 - i]).epsilon(1e-12));
      CHECK(g.find(g.nodes()[i]) == i);
    }
  }
  AngleGrid q = AngleGrid::quantile(128);
  for (double w : q.weights()) CHECK(w == doctest::Approx(1.0 / 128).epsilon(1e-12));
  // Graded: finest spacing 1e-8 at the ends, geometric in between.
  AngleGrid g = AngleGrid::graded(1024);
  CHECK(g.hi(0) == doctest::Approx(1e-8 * std::expm1(std::log1p(0.5 * pi / 1e-8) / 512)).epsilon(1e-12));
  CHECK(angle_quantile_in(0.1, 0.2, 0.0) == doctest::Approx(0.1));
  CHECK(angle_quantile_in(0.1, 0.2, 1.0) == doctest::Approx(0.2));
  CHECK(angle_quantile_in(pi - 1e-9, pi, 0.5) > pi - 1e-9);
  CHECK_THROWS_AS(AngleGrid::graded(7), DomainError);
}

TEST_CASE("MS matrix is rank one plus a multiple of the identity") {
  const double alpha = 0.25;
  KernelMatrix m = discretize_kernel(ms_kernel(alpha, SurfaceMeasure::cosine(2, 1.0)), 128);
  double worst = 0;
  for (Eigen::Index i = 0; i < 128; ++i)
    for (Eigen::Index j = 0; j < 128; ++j)
      worst = std::max(worst, std::abs(m.entries(i, j) - alpha * m.weights()[j] - (i == j ? 1 - alpha : 0.0)));
  CHECK(worst < 1e-14);
  Decomposition d = spectrum(m);
  CHECK(d.eigenvalues[d.constant_index] == doctest::Approx(1.0).epsilon(1e-12));
  for (Eigen::Index k = 0; k < d.eigenvalues.size(); ++k)
    if (k != d.constant_index) CHECK(d.eigenvalues[k] == doctest::Approx(1 - alpha).epsilon(1e-12));
  CHECK(spectral_gap(d) == doctest::Approx(alpha).epsilon(1e-12));
  const double p = 1 - alpha;
  for (double a : {1e2, 1e4, 1e6}) CHECK(eta_truncated(d, a) == doctest::Approx((1 + p) / (1 - p)).epsilon(1e-10));
}

TEST_CASE("i.i.d. kernel puts all spectral mass at zero") {
  Decomposition d = spectrum(discretize_kernel(ms_kernel(1.0, SurfaceMeasure::cosine(2, 1.0)), 128));
  SpectralMeasure sm = spectral_measure(d, truncated_displacement(d.grid, 1e4));
  for (std::size_t k = 0; k < sm.masses.size(); ++k) CHECK(std::abs(sm.eigenvalues[k]) < 1e-12);
  CHECK(eta_from_measure(sm) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("identity kernel: unit spectrum, zero gap, eta undefined") {
  Decomposition d = spectrum(discretize_kernel(identity_kernel(), 64));
  for (Eigen::Index k = 0; k < d.eigenvalues.size(); ++k) CHECK(d.eigenvalues[k] == doctest::Approx(1.0));
  CHECK(spectral_gap(d) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(eta_truncated(d, 1e3), NumericError);
}

TEST_CASE("semicircle matrix invariants") {
  KernelMatrix m = discretize_kernel(semicircle(), 512);
  Eigen::VectorXd rows = m.entries.rowwise().sum();
  CHECK((rows.array() - 1.0).abs().maxCoeff() < 1e-8);
  Eigen::Map<const Eigen::VectorXd> w(m.weights().data(), 512);
  Eigen::MatrixXd S = w.asDiagonal() * m.entries;
  CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(m.asymmetry < 1e-3);

  const Decomposition& d = semicircle_512();
  CHECK(d.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(d.constant_index == 0);
  // Constant in L2(mu); pointwise the 1e-17-mass end bins carry roundoff.
  Eigen::VectorXd u = d.eigenvector(0), w2 = d.sqrt_w.cwiseAbs2();
  double mean = w2.dot(u);
  CHECK(w2.dot((u.array() - mean).square().matrix()) < 1e-16 * mean * mean);
  CHECK(d.eigenvalues[d.eigenvalues.size() - 1] >= -1.0 - 1e-8);
  CHECK(spectral_gap(d) > 0.05);
  CHECK_THROWS_AS(discretize_kernel(semicircle(), 32), DomainError);
}

TEST_CASE("eigenvectors are orthonormal in the weighted inner product") {
  const Decomposition& d = semicircle_512();
  Eigen::VectorXd w = d.sqrt_w.cwiseAbs2();
  for (Eigen::Index a : {0, 1, 7})
    for (Eigen::Index b : {0, 1, 7}) {
      double ip = (d.eigenvector(a).cwiseProduct(w)).dot(d.eigenvector(b));
      CHECK(ip == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-10));
    }
}

TEST_CASE("spectral measure") {
  const Decomposition& d = semicircle_512();
  std::vector<double> z(d.sqrt_w.size());
  Eigen::VectorXd v = d.eigenvector(1);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = v[i];
  SpectralMeasure sm = spectral_measure(d, z);
  double top = *std::max_element(sm.masses.begin(), sm.masses.end());
  CHECK(top == doctest::Approx(1.0).epsilon(1e-10));

  Stream s(71, 0, Purpose::Test);
  for (auto& x : z) x = s.normal();
  sm = spectral_measure(d, z);
  double total = 0;
  for (double m : sm.masses) {
    CHECK(m >= 0.0);
    total += m;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
  for (double l : sm.eigenvalues) CHECK(std::abs(l) < 1.0);
  CHECK_THROWS_AS(spectral_measure(d, std::vector<double>(z.size(), 3.0)), DomainError);
}

TEST_CASE("truncated displacement is the bin average of 2 r cot") {
  AngleGrid g = AngleGrid::graded(64);
  const double a = 50.0, r = 1.5, cut = std::atan(1 / a);
  auto z = truncated_displacement(g, a, r);
  for (std::size_t i : {std::size_t(3), std::size_t(20), std::size_t(31), std::size_t(40), std::size_t(62)}) {
    double lo = std::max(g.lo(i), cut), hi = std::min(g.hi(i), pi - cut), num = 0;
    if (hi > lo) {
      const int m = 20000;
      double dx = (hi - lo) / m;
      for (int k = 0; k < m; ++k) {
        double t = lo + (k + 0.5) * dx;
        num += 2 * r / std::tan(t) * 0.5 * std::sin(t) * dx;
      }
    }
    CHECK(z[i] == doctest::Approx(num / g.weights()[i]).epsilon(1e-7));
  }
  CHECK(z[0] == 0.0);
}

TEST_CASE("flat top: affine eigenvalue map and exact eta relation") {
  const double h = 0.4;
  Decomposition base = semicircle_512();
  Decomposition ft = spectrum(discretize_kernel(flat_top_kernel(h, semicircle()), 512));
  double worst = 0;
  for (Eigen::Index k = 0; k < base.eigenvalues.size(); ++k)
    worst = std::max(worst, std::abs(ft.eigenvalues[k] - ((1 - h) * base.eigenvalues[k] + h)));
  CHECK(worst < 1e-10);
  CHECK((1 - h) * -0.5 + h == doctest::Approx(0.1));
  for (double a : {1e2, 1e4, 1e6}) {
    double e0 = eta_truncated(base, a), eh = eta_truncated(ft, a);
    CHECK(eh == doctest::Approx((e0 + h) / (1 - h)).epsilon(1e-10));
  }
}

TEST_CASE("semicircle eta and grid refinement") {
  const Decomposition& d = semicircle_512();
  Decomposition d2 = spectrum(discretize_kernel(semicircle(), 1024));
  CHECK(std::abs(spectral_gap(d) - spectral_gap(d2)) < 0.1 * spectral_gap(d2));
  std::vector<double> as = {1e2, 1e3, 1e4, 1e5, 1e6}, ea;
  for (double a : as) {
    double e = eta_truncated(d2, a);
    CHECK(e >= 0.0);
    CHECK(std::abs(e - eta_truncated(d, a)) < 0.02 * e);
    ea.push_back(e);
  }
  Extrapolation x = eta_extrapolate(as, ea);
  CHECK(x.eta == doctest::Approx(eta_semicircle).epsilon(0.03));
}

TEST_CASE("domination implies ordered eta") {
  Decomposition a = spectrum(discretize_kernel(flat_top_kernel(0.2, semicircle()), 256));
  Decomposition b = spectrum(discretize_kernel(flat_top_kernel(0.5, semicircle()), 256));
  CHECK(eta_truncated(a, 1e4) <= 1.02 * eta_truncated(b, 1e4));
}

TEST_CASE("histogram mode") {
  DiscretizeOptions opt;
  opt.mode = DiscretizeMode::Histogram;
  opt.histogram_samples = 20000;
  opt.seed = 5;
  KernelMatrix m = discretize_kernel(ms_kernel(0.5, SurfaceMeasure::cosine(2, 1.0)), 64, opt);
  CHECK(m.asymmetry > 0.0);
  CHECK((m.entries.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-8);
  REQUIRE(opt.grid_kind() == GridKind::Quantile);
  for (int i = 0; i < 64; ++i) CHECK(m.entries(i, i) == doctest::Approx(0.5 + 0.5 / 64).epsilon(0.05));
  KernelMatrix again = discretize_kernel(ms_kernel(0.5, SurfaceMeasure::cosine(2, 1.0)), 64, opt);
  CHECK(again.entries == m.entries);
  opt.parallel = false;
  KernelMatrix serial = discretize_kernel(ms_kernel(0.5, SurfaceMeasure::cosine(2, 1.0)), 64, opt);
  CHECK(serial.entries == m.entries);
  DiscretizeOptions dens;
  CHECK_THROWS_AS(discretize_kernel(microstructure_kernel(CellGeometry::semicircle()), 32, dens), DomainError);
}

TEST_CASE("extrapolation in 1/ln a") {
  std::vector<double> as = {1e2, 1e3, 1e4, 1e5, 1e6};
  Extrapolation c = eta_extrapolate(as, std::vector<double>(5, 0.7));
  CHECK(c.eta == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(c.uncertainty < 1e-12);
  CHECK_FALSE(c.warning);
  std::vector<double> ea;
  for (double a : as) ea.push_back(0.5 + 1.0 / std::log(a));
  Extrapolation s = eta_extrapolate(as, ea);
  CHECK(std::abs(s.eta - 0.5) < 1e-3);
  CHECK(s.slope == doctest::Approx(1.0).epsilon(1e-9));
  Extrapolation z = eta_extrapolate(as, {0.5, 0.6, 0.5, 0.6, 0.5});
  CHECK(z.warning);
  CHECK_THROWS_AS(eta_extrapolate({1e2, 1e3, 1e4}, {1, 1, 1}), DomainError);
}
