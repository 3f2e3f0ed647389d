#include "knudsen/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "knudsen/error.hpp"
#include "knudsen/grid.hpp"
#include "knudsen/spectral.hpp"
#include "knudsen/stats.hpp"

namespace knudsen {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMaxRetries = 100;
constexpr double kGolden = 0.6180339887498949;

class ScaledSink : public RowSink {
 public:
  ScaledSink(RowSink& inner, double f) : inner_(inner), f_(f) {}
  void add(double psi, double mass) override { inner_.add(psi, f_ * mass); }
  void add_atom(double mass) override { inner_.add_atom(f_ * mass); }
  void add_stationary(double mass) override { inner_.add_stationary(f_ * mass); }
  double add_density(const std::function<double(double)>& f, double scale) override {
    return inner_.add_density(f, f_ * scale);
  }

 private:
  RowSink& inner_;
  double f_;
};

// Exit map of a cell; negative on the discontinuity set or a failed trace.
double cell_map(const CellGeometry& cell, double phi, double r) {
  switch (cell.family) {
    case Family::Semicircle:
      return semicircle_exit_fast(phi, r);
    case Family::FlatTop:
      if (r < 0.5 * cell.h || r > 1.0 - 0.5 * cell.h) return phi;
      return semicircle_exit_fast(phi, (r - 0.5 * cell.h) / (1.0 - cell.h));
    case Family::MiddleWall:
    case Family::FlatBottom:
      try {
        return trace_cell(cell, {r, phi}).psi;
      } catch (const GeometryError&) {
        return -1.0;
      }
  }
  return -1.0;
}

class MicrostructureImpl : public KernelImpl {
 public:
  MicrostructureImpl(const CellGeometry& cell, const SurfaceMeasure& nu) : cell_(cell) {
    cell_.validate();
    stationary = nu;
    label = cell.label();
  }

  AngleState step(const AngleState& s, Stream& rng) const override {
    for (int t = 0; t < kMaxRetries; ++t) {
      double psi = cell_map(cell_, s.phi, rng.uniform());
      if (psi >= 0.0) return {psi, s.speed};
    }
    throw Error(label + ": sampling failed after retries at phi=" + std::to_string(s.phi));
  }

  bool has_density() const override {
    return cell_.family == Family::Semicircle || cell_.family == Family::FlatTop ||
           (cell_.family == Family::FlatBottom && cell_.h == 0.0) ||
           (cell_.family == Family::MiddleWall && cell_.h == 0.0);
  }

  std::optional<double> density(double phi, double psi) const override {
    if (!has_density()) return std::nullopt;
    double f = semicircle_density(phi, psi);
    return cell_.family == Family::FlatTop ? (1.0 - cell_.h) * f : f;
  }

  double atom(double) const override { return cell_.family == Family::FlatTop ? cell_.h : 0.0; }

  bool has_row() const override { return true; }

  void row(double lo, double hi, const RowRule& rule, RowSink& sink) const override {
    const int Q = rule.thetas, M = rule.positions;
    CellGeometry inner = cell_;
    double keep = 1.0;
    if (cell_.family == Family::FlatTop) {
      inner = CellGeometry::semicircle();
      keep = 1.0 - cell_.h;
      sink.add_atom(cell_.h);
    }
    const double mass = keep / (static_cast<double>(Q) * M);
    for (int q = 0; q < Q; ++q) {
      double theta = angle_quantile_in(lo, hi, (q + 0.5) / Q);
      // The tracer rejects angles below kMinAngle; bins down there weigh ~1e-20.
      if (inner.family == Family::MiddleWall || inner.family == Family::FlatBottom)
        theta = std::clamp(theta, kMinAngle, kPi - kMinAngle);
      double shift = std::fmod((q + 0.5) * kGolden, 1.0);
      for (int m = 0; m < M; ++m) {
        double r = (m + shift) / M;
        double psi = cell_map(inner, theta, r);
        for (int t = 1; psi < 0.0 && t < kMaxRetries; ++t)
          psi = cell_map(inner, theta, std::clamp(r + (t % 2 ? 1 : -1) * ((t + 1) / 2) * 1e-7, 0.0, 1.0));
        if (psi < 0.0) throw Error(label + ": row assembly failed");
        sink.add(psi, mass);
      }
    }
  }

 private:
  CellGeometry cell_;
};

class MsImpl : public KernelImpl {
 public:
  MsImpl(double alpha, const SurfaceMeasure& nu) : alpha_(alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("ms_kernel: alpha must lie in [0,1]");
    nu.validate();
    stationary = nu;
    label = "ms(alpha=" + std::to_string(alpha) + "," + nu.label() + ")";
  }

  AngleState step(const AngleState& s, Stream& rng) const override {
    return rng.bernoulli(alpha_) ? stationary.sample_angle_state(rng) : s;
  }

  Velocity step_velocity(const Velocity& v, Stream& rng) const override {
    if (v.n != stationary.n) throw DomainError(label + ": dimension mismatch");
    return rng.bernoulli(alpha_) ? stationary.sample(rng) : v;
  }

  bool supports_dimension(int n) const override { return n == stationary.n && (n == 2 || n == 3); }
  bool has_density() const override { return true; }
  std::optional<double> density(double, double psi) const override {
    return alpha_ * SurfaceMeasure::angle_density(psi);
  }
  double atom(double) const override { return 1.0 - alpha_; }
  bool speed_preserving() const override {
    return stationary.kind == MeasureKind::CosineLaw || alpha_ == 0.0;
  }
  bool has_row() const override { return true; }
  void row(double, double, const RowRule&, RowSink& sink) const override {
    sink.add_stationary(alpha_);
    sink.add_atom(1.0 - alpha_);
  }

 private:
  double alpha_;
};

class MhImpl : public KernelImpl {
 public:
  MhImpl(CollisionKernel proposal, const SurfaceMeasure& target, std::optional<Acceptance> acc)
      : proposal_(std::move(proposal)), acc_(std::move(acc)) {
    if (!proposal_.has_density()) throw DomainError("mh_kernel: proposal has no density");
    target.validate();
    stationary = target;
    label = "mh(" + proposal_.label() + (acc_ ? ",custom" : ",ratio") + ")";
  }

  double acceptance(double phi, double psi) const {
    if (acc_) return std::clamp((*acc_)(phi, psi), 0.0, 1.0);
    double fwd = *proposal_.density(phi, psi);
    if (fwd <= 0.0) return 0.0;
    double back = *proposal_.density(psi, phi);
    double ratio = SurfaceMeasure::angle_density(psi) * back / (SurfaceMeasure::angle_density(phi) * fwd);
    return std::min(1.0, ratio);
  }

  AngleState step(const AngleState& s, Stream& rng) const override {
    AngleState u = proposal_.step(s, rng);
    if (u.phi == s.phi) return s;
    if (rng.uniform() < acceptance(s.phi, u.phi)) return {u.phi, s.speed};
    return s;
  }

  bool has_density() const override { return true; }
  std::optional<double> density(double phi, double psi) const override {
    return acceptance(phi, psi) * *proposal_.density(phi, psi);
  }

  double atom(double phi) const override {
    auto f = [&](double psi) { return *density(phi, psi); };
    double moved = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, kPi, 15, 1e-10);
    return std::clamp(1.0 - moved, 0.0, 1.0);
  }

  bool has_row() const override { return true; }
  void row(double lo, double hi, const RowRule& rule, RowSink& sink) const override {
    const int Q = rule.thetas;
    for (int q = 0; q < Q; ++q) {
      double theta = angle_quantile_in(lo, hi, (q + 0.5) / Q);
      double moved = sink.add_density([&](double psi) { return *density(theta, psi); }, 1.0 / Q);
      sink.add_atom(std::max(0.0, 1.0 - moved) / Q);
    }
  }

 private:
  CollisionKernel proposal_;
  std::optional<Acceptance> acc_;
};

class FlatTopImpl : public KernelImpl {
 public:
  FlatTopImpl(double h, CollisionKernel base) : h_(h), base_(std::move(base)) {
    if (!(h >= 0.0 && h < 1.0)) throw DomainError("flat_top_kernel: h must lie in [0,1)");
    stationary = base_.stationary();
    natural = base_.natural();
    label = "flat_top(h=" + std::to_string(h) + "," + base_.label() + ")";
  }

  AngleState step(const AngleState& s, Stream& rng) const override {
    return rng.bernoulli(h_) ? s : base_.step(s, rng);
  }
  Velocity step_velocity(const Velocity& v, Stream& rng) const override {
    return rng.bernoulli(h_) ? v : base_.step_velocity(v, rng);
  }
  bool supports_dimension(int n) const override { return base_.supports_dimension(n); }
  bool has_density() const override { return base_.has_density(); }
  std::optional<double> density(double phi, double psi) const override {
    auto d = base_.density(phi, psi);
    if (!d) return std::nullopt;
    return (1.0 - h_) * *d;
  }
  double atom(double phi) const override { return h_ + (1.0 - h_) * base_.atom(phi); }
  bool speed_preserving() const override { return base_.speed_preserving(); }
  bool has_row() const override { return base_.has_row(); }
  void row(double lo, double hi, const RowRule& rule, RowSink& sink) const override {
    ScaledSink scaled(sink, 1.0 - h_);
    base_.row(lo, hi, rule, scaled);
    sink.add_atom(h_);
  }

 private:
  double h_;
  CollisionKernel base_;
};

class IdentityImpl : public KernelImpl {
 public:
  explicit IdentityImpl(const SurfaceMeasure& nu) {
    stationary = nu;
    natural = false;
    label = "identity";
  }
  AngleState step(const AngleState& s, Stream&) const override { return s; }
  Velocity step_velocity(const Velocity& v, Stream&) const override { return v; }
  bool supports_dimension(int n) const override { return n == 2 || n == 3; }
  bool has_density() const override { return true; }
  std::optional<double> density(double, double) const override { return 0.0; }
  double atom(double) const override { return 1.0; }
  bool has_row() const override { return true; }
  void row(double, double, const RowRule&, RowSink& sink) const override { sink.add_atom(1.0); }
};

class UniformAngleImpl : public KernelImpl {
 public:
  UniformAngleImpl() {
    natural = false;
    label = "uniform_angle";
  }
  AngleState step(const AngleState& s, Stream& rng) const override { return {kPi * rng.uniform(), s.speed}; }
  bool has_density() const override { return true; }
  std::optional<double> density(double, double psi) const override {
    return (psi > 0.0 && psi < kPi) ? 1.0 / kPi : 0.0;
  }
  bool has_row() const override { return true; }
  void row(double, double, const RowRule&, RowSink& sink) const override {
    sink.add_density([](double) { return 1.0 / kPi; }, 1.0);
  }
};

}  // namespace

Velocity KernelImpl::step_velocity(const Velocity& v, Stream& rng) const {
  if (v.n != 2) throw DomainError(label + ": only 2D velocities are supported");
  return to_velocity(step(to_angle(v), rng));
}

void KernelImpl::row(double, double, const RowRule&, RowSink&) const {
  throw DomainError(label + ": no deterministic row");
}

double semicircle_density(double phi, double psi) {
  if (!(phi > 0.0 && phi < kPi) || !(psi > 0.0 && psi < kPi)) return 0.0;
  if (phi > 0.5 * kPi) return semicircle_density(kPi - phi, kPi - psi);
  // On the branch with n bounces Psi = n(pi + 2s) - phi (mod 2 pi), where
  // s = asin((2r-1) sin phi); |dPsi/dr| = 4 n sin(phi) / cos(s).
  const double sphi = std::sin(phi);
  double total = 0.0;
  auto branch = [&](int n, double slo, double shi) {
    double A = n * (kPi + 2.0 * slo) - phi, B = n * (kPi + 2.0 * shi) - phi;
    long m0 = static_cast<long>(std::ceil((A - psi) / (2.0 * kPi)));
    long m1 = static_cast<long>(std::floor((B - psi) / (2.0 * kPi)));
    for (long m = m0; m <= m1; ++m) {
      double s = 0.5 * ((psi + 2.0 * kPi * m + phi) / n - kPi);
      if (s < slo || s > shi) continue;
      total += std::cos(s) / (4.0 * n * sphi);
    }
  };
  // r-mass of entries with s beyond |s0|: (sin phi - sin|s0|) / (2 sin phi).
  // Near phi = pi/2 the branches never run out, so the tail is cut there.
  auto tail = [&](double s0) {
    double a = std::abs(s0);
    return std::cos(0.5 * (phi + a)) * std::sin(0.5 * (phi - a)) / sphi;
  };
  constexpr double kTail = 1e-10;
  for (int n = 1;; ++n) {
    double slo = std::max(0.0, ((n - 2) * kPi + phi) / (2 * n - 1));
    double shi = std::min(phi, ((n - 1) * kPi + phi) / (2 * n + 1));
    if (slo >= phi || tail(slo) < kTail) break;
    if (shi > slo) branch(n, slo, shi);
  }
  for (int n = 1;; ++n) {
    double shi = std::min(0.0, (phi - (n - 1) * kPi) / (2 * n - 1));
    double slo = std::max(-phi, (phi - n * kPi) / (2 * n + 1));
    if (shi <= -phi || tail(shi) < kTail) break;
    // s = 0 belongs to the first branch above.
    if (shi > slo) branch(n, slo, n == 1 ? std::nextafter(0.0, -1.0) : shi);
  }
  return total;
}

CollisionKernel microstructure_kernel(const CellGeometry& cell, const SurfaceMeasure& nu) {
  return CollisionKernel(std::make_shared<MicrostructureImpl>(cell, nu));
}

CollisionKernel ms_kernel(double alpha, const SurfaceMeasure& nu) {
  return CollisionKernel(std::make_shared<MsImpl>(alpha, nu));
}

CollisionKernel mh_kernel(const CollisionKernel& proposal, const SurfaceMeasure& target,
                          std::optional<Acceptance> acceptance) {
  return CollisionKernel(std::make_shared<MhImpl>(proposal, target, std::move(acceptance)));
}

CollisionKernel flat_top_kernel(double h, const CollisionKernel& base) {
  return CollisionKernel(std::make_shared<FlatTopImpl>(h, base));
}

CollisionKernel identity_kernel(const SurfaceMeasure& nu) {
  return CollisionKernel(std::make_shared<IdentityImpl>(nu));
}

CollisionKernel uniform_angle_kernel() { return CollisionKernel(std::make_shared<UniformAngleImpl>()); }

bool StationarityReport::passed(double level) const {
  return p_value > level && (!speed_p_value || *speed_p_value > level);
}

StationarityReport check_stationarity(const CollisionKernel& kernel, const SurfaceMeasure& nu, long n_samples,
                                      Stream& rng, StationarityTest test) {
  if (n_samples < 10000) throw DomainError("check_stationarity: n_samples must be >= 1e4");
  if (nu.n != 2) throw DomainError("check_stationarity: 2D measure required");
  std::vector<double> moved(n_samples), fresh(n_samples), moved_speed, fresh_speed;
  const bool random_speed = nu.kind == MeasureKind::SurfaceMaxwellian;
  if (random_speed) {
    moved_speed.resize(n_samples);
    fresh_speed.resize(n_samples);
  }
  for (long i = 0; i < n_samples; ++i) {
    AngleState y = kernel.step(nu.sample_angle_state(rng), rng);
    moved[i] = y.phi;
    if (random_speed) moved_speed[i] = y.speed;
  }
  for (long i = 0; i < n_samples; ++i) {
    AngleState z = nu.sample_angle_state(rng);
    fresh[i] = z.phi;
    if (random_speed) fresh_speed[i] = z.speed;
  }
  StationarityReport rep;
  TestResult t = test == StationarityTest::KolmogorovSmirnov
                     ? ks_two_sample(moved, fresh)
                     : chi_square_two_sample(moved, fresh, AngleGrid::quantile(64).edges());
  rep.statistic = t.statistic;
  rep.p_value = t.p_value;
  if (random_speed) {
    TestResult s = ks_two_sample(moved_speed, fresh_speed);
    rep.speed_statistic = s.statistic;
    rep.speed_p_value = s.p_value;
  }
  return rep;
}

double check_detailed_balance(const CollisionKernel& kernel, const SurfaceMeasure& nu,
                              const std::vector<double>& grid) {
  if (!kernel.has_density()) throw DomainError("check_detailed_balance: kernel has no density");
  (void)nu;
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t j = i + 1; j < grid.size(); ++j) {
      double a = SurfaceMeasure::angle_density(grid[i]) * *kernel.density(grid[i], grid[j]);
      double b = SurfaceMeasure::angle_density(grid[j]) * *kernel.density(grid[j], grid[i]);
      worst = std::max(worst, std::abs(a - b));
    }
  }
  return worst;
}

bool dominates_off_diagonal(const CollisionKernel& k1, const CollisionKernel& k2, const SurfaceMeasure& nu,
                            const AngleGrid& grid, double tol, std::uint64_t seed) {
  (void)nu;
  auto rows = [&](const CollisionKernel& k) {
    DiscretizeOptions opt;
    opt.mode = k.has_row() ? DiscretizeMode::Density : DiscretizeMode::Histogram;
    opt.seed = seed;
    return assemble_rows(k, grid, opt);
  };
  RawRows r1 = rows(k1), r2 = rows(k2);
  const Eigen::Index n = static_cast<Eigen::Index>(grid.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double a = r1.prob(i, j) - (i == j ? r1.atoms[i] : 0.0);
      double b = r2.prob(i, j) - (i == j ? r2.atoms[i] : 0.0);
      if (a < b - tol) return false;
    }
  }
  return true;
}

}  // namespace knudsen
