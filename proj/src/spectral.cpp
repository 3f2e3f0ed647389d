#include "knudsen/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>

#include "knudsen/error.hpp"
#include "knudsen/parallel.hpp"
#include "knudsen/stats.hpp"

namespace knudsen {

namespace {

constexpr double kPi = std::numbers::pi;

class GridRowSink : public RowSink {
 public:
  GridRowSink(const AngleGrid& grid, std::size_t start, std::vector<double>& row, double& atom)
      : grid_(grid), start_(start), row_(row), atom_(atom) {}

  void add(double psi, double mass) override { row_[grid_.find(psi)] += mass; }
  void add_atom(double mass) override {
    row_[start_] += mass;
    atom_ += mass;
  }
  void add_stationary(double mass) override {
    for (std::size_t j = 0; j < row_.size(); ++j) row_[j] += mass * grid_.weights()[j];
  }
  double add_density(const std::function<double(double)>& f, double scale) override {
    double total = 0.0;
    for (std::size_t j = 0; j < row_.size(); ++j) {
      double v = boost::math::quadrature::gauss<double, 7>::integrate(f, grid_.lo(j), grid_.hi(j));
      row_[j] += scale * v;
      total += v;
    }
    return total;
  }

 private:
  const AngleGrid& grid_;
  std::size_t start_;
  std::vector<double>& row_;
  double& atom_;
};

void fill_row(const CollisionKernel& kernel, const AngleGrid& grid, const DiscretizeOptions& opt, std::size_t i,
              std::vector<double>& row, double& atom) {
  std::fill(row.begin(), row.end(), 0.0);
  atom = 0.0;
  GridRowSink sink(grid, i, row, atom);
  if (opt.mode == DiscretizeMode::Density) {
    kernel.row(grid.lo(i), grid.hi(i), opt.rule, sink);
    return;
  }
  Stream rng(opt.seed, static_cast<std::uint32_t>(i), Purpose::Discretize);
  const double m = 1.0 / static_cast<double>(opt.histogram_samples);
  const SurfaceMeasure& nu = kernel.stationary();
  for (long s = 0; s < opt.histogram_samples; ++s) {
    AngleState x{grid.quantile_in(i, rng.uniform()), nu.n == 2 ? nu.sample_speed(rng) : 1.0};
    AngleState y = kernel.step(x, rng);
    if (y.phi == x.phi)
      sink.add_atom(m);
    else
      sink.add(y.phi, m);
  }
}

}  // namespace

RawRows assemble_rows(const CollisionKernel& kernel, const AngleGrid& grid, const DiscretizeOptions& opt) {
  if (opt.mode == DiscretizeMode::Density && !kernel.has_row())
    throw DomainError("discretize_kernel: " + kernel.label() + " has no deterministic row; use histogram mode");
  if (opt.mode == DiscretizeMode::Histogram && opt.histogram_samples < 1)
    throw DomainError("discretize_kernel: histogram_samples must be positive");
  const std::size_t n = grid.size();
  RawRows out;
  out.prob.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  out.atoms.assign(n, 0.0);
  Execution ex{opt.parallel, opt.workers};
  for_each_index(static_cast<long>(n), ex, [&](long i) {
    std::vector<double> row(n);
    double atom;
    fill_row(kernel, grid, opt, static_cast<std::size_t>(i), row, atom);
    for (std::size_t j = 0; j < n; ++j) out.prob(i, static_cast<Eigen::Index>(j)) = row[j];
    out.atoms[i] = atom;
  });
  return out;
}

KernelMatrix discretize_kernel(const CollisionKernel& kernel, const AngleGrid& grid, const DiscretizeOptions& opt) {
  if (grid.size() < 64) throw DomainError("discretize_kernel: grid_size must be >= 64");
  RawRows raw = assemble_rows(kernel, grid, opt);
  const Eigen::Index n = static_cast<Eigen::Index>(grid.size());
  Eigen::Map<const Eigen::VectorXd> w(grid.weights().data(), n);
  Eigen::MatrixXd J = w.asDiagonal() * raw.prob;
  KernelMatrix km{grid, {}, raw.atoms, 0.0, 0.0, kernel.label()};
  km.asymmetry = (J - J.transpose()).cwiseAbs().maxCoeff();
  Eigen::MatrixXd S = 0.5 * (J + J.transpose());
  // Restore the row sums on the diagonal; this keeps S exactly symmetric.
  Eigen::VectorXd rs = S.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) S(i, i) += w[i] - rs[i];
  km.entries = w.cwiseInverse().asDiagonal() * S;
  km.min_entry = km.entries.minCoeff();
  Eigen::VectorXd rows = km.entries.rowwise().sum();
  double dev = (rows.array() - 1.0).abs().maxCoeff();
  if (dev > 1e-8) throw NumericError("discretize_kernel: rows not stochastic, deviation " + std::to_string(dev));
  return km;
}

KernelMatrix discretize_kernel(const CollisionKernel& kernel, std::size_t grid_size, const DiscretizeOptions& opt) {
  if (grid_size < 64) throw DomainError("discretize_kernel: grid_size must be >= 64");
  return discretize_kernel(kernel, AngleGrid::make(opt.grid_kind(), grid_size), opt);
}

Eigen::VectorXd Decomposition::eigenvector(Eigen::Index k) const {
  return vectors.col(k).cwiseQuotient(sqrt_w);
}

Decomposition spectrum(const KernelMatrix& m) {
  const Eigen::Index n = m.entries.rows();
  Eigen::VectorXd sw(n);
  for (Eigen::Index i = 0; i < n; ++i) sw[i] = std::sqrt(m.weights()[i]);
  // W^{1/2} P W^{-1/2} = W^{-1/2} S W^{-1/2} with S = W P symmetric.
  Eigen::MatrixXd A = sw.asDiagonal() * m.entries * sw.cwiseInverse().asDiagonal();
  A = 0.5 * (A + A.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) {
    throw NumericError("spectrum: eigensolver failed (n=" + std::to_string(n) +
                       ", asymmetry=" + std::to_string(m.asymmetry) + ")");
  }
  Decomposition d{m.grid, es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse(), sw, 0};
  (d.vectors.transpose() * sw).cwiseAbs().maxCoeff(&d.constant_index);
  return d;
}

SpectralMeasure spectral_measure(const Decomposition& d, const std::vector<double>& z) {
  const Eigen::Index n = d.sqrt_w.size();
  if (static_cast<Eigen::Index>(z.size()) != n) throw DomainError("spectral_measure: size mismatch");
  Eigen::Map<const Eigen::VectorXd> zv(z.data(), n);
  Eigen::VectorXd w = d.sqrt_w.cwiseAbs2();
  double mean = w.dot(zv);
  Eigen::VectorXd y = d.sqrt_w.cwiseProduct(zv.array().matrix() - Eigen::VectorXd::Constant(n, mean));
  double norm2 = y.squaredNorm();
  if (!(norm2 > 0.0)) throw DomainError("spectral_measure: observable has zero norm");
  Eigen::VectorXd c = d.vectors.transpose() * y;
  SpectralMeasure out;
  double total = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (k == d.constant_index) continue;
    out.eigenvalues.push_back(d.eigenvalues[k]);
    out.masses.push_back(c[k] * c[k]);
    total += c[k] * c[k];
  }
  for (double& m : out.masses) m /= total;
  return out;
}

double eta_from_measure(const SpectralMeasure& m) {
  double eta = 0.0;
  for (std::size_t k = 0; k < m.masses.size(); ++k) {
    double l = m.eigenvalues[k];
    if (l > 1.0 - 1e-9) {
      if (m.masses[k] > 1e-12) throw NumericError("mass at unit eigenvalue");
      continue;
    }
    eta += m.masses[k] * (1.0 + l) / (1.0 - l);
  }
  return eta;
}

std::vector<double> truncated_displacement(const AngleGrid& grid, double a, double r) {
  const double cut = a > 0.0 ? std::atan(1.0 / a) : 0.0;
  std::vector<double> z(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double lo = std::max(grid.lo(i), cut), hi = std::min(grid.hi(i), kPi - cut);
    if (hi <= lo) {
      z[i] = 0.0;
      continue;
    }
    // r (sin hi - sin lo) / W_i
    z[i] = r * 2.0 * std::cos(0.5 * (hi + lo)) * std::sin(0.5 * (hi - lo)) / grid.weights()[i];
  }
  return z;
}

double eta_truncated(const Decomposition& d, double a, const ZBuilder& z_builder) {
  std::vector<double> z = z_builder ? z_builder(a) : truncated_displacement(d.grid, a);
  return eta_from_measure(spectral_measure(d, z));
}

Extrapolation eta_extrapolate(const std::vector<double>& a, const std::vector<double>& eta_a,
                              const std::vector<double>& sigma) {
  if (a.size() < 4 || a.size() != eta_a.size()) throw DomainError("eta_extrapolate: need >= 4 (a, eta_a) points");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] > 1.0)) throw DomainError("eta_extrapolate: a must exceed 1");
    if (i > 0 && !(a[i] > a[i - 1])) throw DomainError("eta_extrapolate: a must increase");
  }
  std::vector<double> x(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) x[i] = 1.0 / std::log(a[i]);
  LinearFit f = fit_line(x, eta_a, sigma);
  Extrapolation e;
  e.eta = f.intercept;
  e.slope = f.slope;
  e.residual_rms = f.residual_rms;
  e.uncertainty = f.se_intercept;
  if (!sigma.empty()) {
    double dof = static_cast<double>(a.size()) - 2.0;
    e.uncertainty *= std::sqrt(std::max(1.0, f.chi2 / dof));
  }
  // Tail: the last three increments should share a sign unless within noise.
  std::size_t n = a.size();
  for (std::size_t i = n - 3; i + 1 < n; ++i) {
    double d1 = eta_a[i] - eta_a[i - 1], d2 = eta_a[i + 1] - eta_a[i];
    double noise = sigma.empty() ? 1e-12 * std::abs(eta_a[i]) : 2.0 * std::hypot(sigma[i], sigma[i + 1]);
    if (d1 * d2 < 0.0 && std::abs(d2) > noise && std::abs(d1) > noise) e.warning = true;
  }
  return e;
}

double spectral_gap(const Decomposition& d) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < d.eigenvalues.size(); ++k)
    if (k != d.constant_index) worst = std::max(worst, std::abs(d.eigenvalues[k]));
  return 1.0 - worst;
}

SpectralResult run_spectral(const CollisionKernel& kernel, const SpectralOptions& opt) {
  KernelMatrix km = discretize_kernel(kernel, opt.grid_size, opt.discretize);
  Decomposition d = spectrum(km);
  SpectralResult res;
  res.label = kernel.label();
  res.grid_size = opt.grid_size;
  res.top_eigenvalues.push_back(d.eigenvalues[d.constant_index]);
  for (Eigen::Index k = 0; k < d.eigenvalues.size() && res.top_eigenvalues.size() < 8; ++k)
    if (k != d.constant_index) res.top_eigenvalues.push_back(d.eigenvalues[k]);
  res.min_eigenvalue = d.eigenvalues[d.eigenvalues.size() - 1];
  res.gap = spectral_gap(d);
  res.asymmetry = km.asymmetry;
  res.a_values = opt.a_values;
  for (double a : opt.a_values) res.eta_a.push_back(eta_truncated(d, a));
  if (opt.a_values.size() >= 4) {
    res.fit = eta_extrapolate(opt.a_values, res.eta_a);
  } else if (!res.eta_a.empty()) {
    res.fit.eta = res.eta_a.back();
  }
  return res;
}

}  // namespace knudsen
