#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "knudsen/random.hpp"
#include "knudsen/stats.hpp"

using namespace knudsen;

TEST_CASE("kolmogorov tail at tabulated critical values") {
  CHECK(kolmogorov_tail(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(kolmogorov_tail(1.6276) == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(kolmogorov_tail(0.0) == doctest::Approx(1.0));
  CHECK(kolmogorov_tail(5.0) < 1e-20);
}

TEST_CASE("normal cdf and chi-square survival") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(chi_square_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-10));
  // dof 2 is an exponential law.
  for (double x : {0.1, 1.0, 7.5}) CHECK(chi_square_sf(x, 2) == doctest::Approx(std::exp(-x / 2)).epsilon(1e-12));
}

TEST_CASE("ks one-sample accepts the true law and rejects a shifted one") {
  Stream s(11, 0, Purpose::Test);
  std::vector<double> x(20000);
  for (auto& v : x) v = s.uniform();
  auto cdf = [](double t) { return std::clamp(t, 0.0, 1.0); };
  CHECK(ks_one_sample(x, cdf).p_value > 0.01);
  for (auto& v : x) v = std::min(v + 0.02, 0.999999);
  CHECK(ks_one_sample(x, cdf).p_value < 1e-6);
}

TEST_CASE("ks statistic on a hand-checked sample") {
  // Sorted {0.1, 0.4, 0.7} against U(0,1): max(1/3-0.1, 0.4-1/3, 2/3-0.4, 0.7-2/3, 1-0.7) = 0.3.
  TestResult r = ks_one_sample({0.7, 0.1, 0.4}, [](double t) { return t; });
  CHECK(r.statistic == doctest::Approx(0.3));
}

TEST_CASE("two-sample tests") {
  Stream s(12, 0, Purpose::Test);
  std::vector<double> a(20000), b(20000), c(20000);
  for (auto& v : a) v = s.normal();
  for (auto& v : b) v = s.normal();
  for (auto& v : c) v = s.normal() * 1.1;
  CHECK(ks_two_sample(a, b).p_value > 0.01);
  CHECK(ks_two_sample(a, c).p_value < 1e-4);
  std::vector<double> edges;
  for (int i = 0; i <= 40; ++i) edges.push_back(-4.0 + 0.2 * i);
  CHECK(chi_square_two_sample(a, b, edges).p_value > 0.01);
  CHECK(chi_square_two_sample(a, c, edges).p_value < 1e-4);
}

TEST_CASE("summary statistics") {
  Summary m = summarize({1, 2, 3, 4});
  CHECK(m.mean == doctest::Approx(2.5));
  CHECK(m.variance == doctest::Approx(5.0 / 3.0));
  CHECK(m.std_error == doctest::Approx(std::sqrt(5.0 / 12.0)));
  CHECK(m.n == 4);
}

TEST_CASE("line fits") {
  std::vector<double> x{1, 2, 3, 4, 5}, y;
  for (double v : x) y.push_back(0.5 - 2.0 * v);
  LinearFit f = fit_line(x, y);
  CHECK(f.intercept == doctest::Approx(0.5));
  CHECK(f.slope == doctest::Approx(-2.0));
  CHECK(f.residual_rms < 1e-12);

  // Textbook data: y = {1, 3, 2, 5, 4}; slope 0.8, intercept 0.6, se(slope) = sqrt(1.2 / 10).
  LinearFit g = fit_line(x, {1, 3, 2, 5, 4});
  CHECK(g.slope == doctest::Approx(0.8));
  CHECK(g.intercept == doctest::Approx(0.6));
  CHECK(g.se_slope == doctest::Approx(std::sqrt(0.12)));

  LinearFit p = fit_proportional({1, 2, 4}, {3, 6, 12});
  CHECK(p.slope == doctest::Approx(3.0));

  CHECK(pearson(x, y) == doctest::Approx(-1.0));
}
