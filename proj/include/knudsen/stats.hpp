#pragma once

#include <functional>
#include <vector>

namespace knudsen {

struct TestResult {
  double statistic = 0.0;
  double p_value = 0.0;
};

// Asymptotic Kolmogorov tail P(K > lambda).
double kolmogorov_tail(double lambda);

// Sorts its argument.
TestResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf);
TestResult ks_two_sample(std::vector<double> a, std::vector<double> b);
// Two-sample chi-square on shared bin edges; bins with no counts are skipped.
TestResult chi_square_two_sample(const std::vector<double>& a, const std::vector<double>& b,
                                 const std::vector<double>& edges);
double chi_square_sf(double stat, double dof);
double normal_cdf(double x);

struct Summary {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double std_error = 0.0;
  long n = 0;
};

Summary summarize(const std::vector<double>& x);

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double se_intercept = 0.0;
  double se_slope = 0.0;
  double residual_rms = 0.0;
  double chi2 = 0.0;
};

// Least squares y = intercept + slope * x. With sigma given, a weighted fit
// whose standard errors come from sigma; otherwise from the residuals.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y,
                   const std::vector<double>& sigma = {});

// Least squares through the origin.
LinearFit fit_proportional(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<double>& sigma = {});

double pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace knudsen
