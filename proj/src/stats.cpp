#include "knudsen/stats.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "knudsen/error.hpp"

namespace knudsen {

double kolmogorov_tail(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

namespace {

// Stephens' small-sample correction of the asymptotic distribution.
double ks_p(double d, double n_eff) {
  double sn = std::sqrt(n_eff);
  return kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d);
}

}  // namespace

TestResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  if (x.empty()) throw DomainError("ks_one_sample: empty sample");
  std::sort(x.begin(), x.end());
  double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return {d, ks_p(d, n)};
}

TestResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return {d, ks_p(d, na * nb / (na + nb))};
}

double chi_square_sf(double stat, double dof) {
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

TestResult chi_square_two_sample(const std::vector<double>& a, const std::vector<double>& b,
                                 const std::vector<double>& edges) {
  std::size_t k = edges.size() - 1;
  std::vector<double> ca(k, 0.0), cb(k, 0.0);
  auto bin = [&](double x) -> long {
    auto it = std::upper_bound(edges.begin(), edges.end(), x);
    long i = static_cast<long>(it - edges.begin()) - 1;
    return (i < 0 || i >= static_cast<long>(k)) ? -1 : i;
  };
  for (double x : a)
    if (long i = bin(x); i >= 0) ca[i] += 1;
  for (double x : b)
    if (long i = bin(x); i >= 0) cb[i] += 1;
  double na = a.size(), nb = b.size();
  double ra = std::sqrt(nb / na), rb = std::sqrt(na / nb);
  double stat = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < k; ++i) {
    double tot = ca[i] + cb[i];
    if (tot == 0) continue;
    double diff = ra * ca[i] - rb * cb[i];
    stat += diff * diff / tot;
    ++used;
  }
  double dof = std::max(1, used - 1);
  return {stat, chi_square_sf(stat, dof)};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

Summary summarize(const std::vector<double>& x) {
  Summary s;
  s.n = static_cast<long>(x.size());
  if (x.empty()) return s;
  double mean = 0.0, m2 = 0.0;
  long k = 0;
  for (double v : x) {
    ++k;
    double d = v - mean;
    mean += d / k;
    m2 += d * (v - mean);
  }
  s.mean = mean;
  s.variance = k > 1 ? m2 / (k - 1) : 0.0;
  s.std_error = k > 1 ? std::sqrt(s.variance / k) : 0.0;
  return s;
}

namespace {

LinearFit solve(const Eigen::MatrixXd& X, const std::vector<double>& y, const std::vector<double>& sigma) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (n < p) throw DomainError("fit: not enough points");
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  if (!sigma.empty()) {
    if (static_cast<Eigen::Index>(sigma.size()) != n) throw DomainError("fit: sigma size mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(sigma[i] > 0.0)) throw DomainError("fit: sigma must be positive");
      w[i] = 1.0 / sigma[i];
    }
  }
  Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  Eigen::MatrixXd A = w.asDiagonal() * X;
  Eigen::VectorXd b = w.asDiagonal() * yv;
  Eigen::VectorXd beta = A.colPivHouseholderQr().solve(b);
  Eigen::VectorXd res = yv - X * beta;
  Eigen::VectorXd wres = b - A * beta;
  double chi2 = wres.squaredNorm();
  Eigen::MatrixXd cov = (A.transpose() * A).inverse();
  if (sigma.empty()) cov *= n > p ? chi2 / (n - p) : 0.0;
  LinearFit f;
  f.chi2 = chi2;
  f.residual_rms = std::sqrt(res.squaredNorm() / n);
  if (p == 2) {
    f.intercept = beta[0];
    f.slope = beta[1];
    f.se_intercept = std::sqrt(std::max(0.0, cov(0, 0)));
    f.se_slope = std::sqrt(std::max(0.0, cov(1, 1)));
  } else {
    f.slope = beta[0];
    f.se_slope = std::sqrt(std::max(0.0, cov(0, 0)));
  }
  return f;
}

}  // namespace

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& sigma) {
  if (x.size() != y.size()) throw DomainError("fit_line: size mismatch");
  Eigen::MatrixXd X(x.size(), 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = x[i];
  }
  return solve(X, y, sigma);
}

LinearFit fit_proportional(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<double>& sigma) {
  if (x.size() != y.size()) throw DomainError("fit_proportional: size mismatch");
  Eigen::MatrixXd X(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) X(i, 0) = x[i];
  return solve(X, y, sigma);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("pearson: need matching samples");
  Summary sx = summarize(x), sy = summarize(y);
  double c = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) c += (x[i] - sx.mean) * (y[i] - sy.mean);
  c /= (x.size() - 1);
  double d = std::sqrt(sx.variance * sy.variance);
  return d > 0.0 ? c / d : 0.0;
}

}  // namespace knudsen
