#include "knudsen/analysis.hpp"

#include <cmath>
#include <iomanip>

#include "knudsen/error.hpp"

namespace knudsen {

std::string to_string(ClosedFamily f) {
  switch (f) {
    case ClosedFamily::Semicircle: return "semicircle";
    case ClosedFamily::FlatTop: return "flat_top";
    case ClosedFamily::MiddleWall: return "middle_wall";
    case ClosedFamily::FlatBottom: return "flat_bottom";
    case ClosedFamily::MS: return "ms";
    case ClosedFamily::IID: return "iid";
  }
  return "?";
}

ClosedFamily closed_family_from_string(const std::string& s) {
  if (s == "semicircle") return ClosedFamily::Semicircle;
  if (s == "flat_top") return ClosedFamily::FlatTop;
  if (s == "middle_wall") return ClosedFamily::MiddleWall;
  if (s == "flat_bottom") return ClosedFamily::FlatBottom;
  if (s == "ms") return ClosedFamily::MS;
  if (s == "iid") return ClosedFamily::IID;
  throw DomainError("unknown family '" + s + "'");
}

long double semicircle_zeta() { return -0.25L * std::log(3.0L); }

long double flat_bottom_zeta(long double h) {
  // zeta -> 1 (eta infinite) as h -> -1
  if (!(h > -1.0L && h < 1.0L)) throw DomainError("flat_bottom_zeta: h must lie in (-1, 1)");
  return -(1.0L + 3.0L * h) / 4.0L * (1.0L - h) / (1.0L + h) * std::log1p(2.0L * (1.0L + h) / (1.0L - h));
}

namespace {

long double eta_of(long double zeta) { return (1.0L + zeta) / (1.0L - zeta); }

ClosedForm from_zeta(ClosedFamily f, double param, long double zeta) {
  ClosedForm c;
  c.family = f;
  c.param = param;
  c.zeta = static_cast<double>(zeta);
  c.eta = static_cast<double>(eta_of(zeta));
  c.D_over_D0 = c.eta;
  return c;
}

}  // namespace

ClosedForm closed_form_eta(ClosedFamily family, double param) {
  const long double h = param;
  switch (family) {
    case ClosedFamily::Semicircle:
      return from_zeta(family, param, semicircle_zeta());
    case ClosedFamily::FlatTop: {
      if (!(h >= 0.0L && h < 1.0L)) throw DomainError("flat_top: h must lie in [0, 1)");
      long double eta0 = eta_of(semicircle_zeta());
      ClosedForm c = from_zeta(family, param, (1.0L - h) * semicircle_zeta() + h);
      c.eta = static_cast<double>((eta0 + h) / (1.0L - h));
      c.D_over_D0 = c.eta;
      return c;
    }
    case ClosedFamily::MiddleWall:
      if (!(h >= 0.0L)) throw DomainError("middle_wall: h must be >= 0");
      if (h < 0.5L) return from_zeta(family, param, semicircle_zeta());
      if (h == 0.5L) return from_zeta(family, param, -semicircle_zeta());
      throw DomainError("middle_wall: no closed form for h > 1/2 (deferred case)");
    case ClosedFamily::FlatBottom:
      if (h == 0.0L) return from_zeta(family, param, semicircle_zeta());
      return from_zeta(family, param, flat_bottom_zeta(h));
    case ClosedFamily::MS: {
      if (!(h > 0.0L && h <= 1.0L)) throw DomainError("ms: alpha must lie in (0, 1]");
      return from_zeta(family, param, 1.0L - h);
    }
    case ClosedFamily::IID:
      return from_zeta(family, param, 0.0L);
  }
  throw DomainError("closed_form_eta: unknown family");
}

DiscontinuityReport middle_wall_discontinuity_check(double h_below, double tol) {
  if (!(h_below >= 0.0 && h_below < 0.5)) throw DomainError("middle_wall_discontinuity_check: h must lie in [0, 1/2)");
  DiscontinuityReport r;
  r.eta_below = closed_form_eta(ClosedFamily::MiddleWall, h_below).eta;
  r.eta_semicircle = closed_form_eta(ClosedFamily::Semicircle).eta;
  r.eta_half = closed_form_eta(ClosedFamily::MiddleWall, 0.5).eta;
  r.ratio = r.eta_half / r.eta_below;
  long double c = 0.25L * std::log(3.0L);
  long double q = (1.0L + c) / (1.0L - c);
  r.expected_ratio = static_cast<double>(q * q);
  r.passed = std::abs(r.eta_below - r.eta_semicircle) <= tol * r.eta_semicircle &&
             std::abs(r.ratio - r.expected_ratio) <= 1e-12 * r.expected_ratio;
  return r;
}

double predicted_tau(double L, double r, double D, int codim) {
  if (!(L > r && r > 0.0)) throw DomainError("predicted_tau: need L > r > 0");
  if (!(D > 0.0)) throw DomainError("predicted_tau: D must be positive");
  if (codim < 1) throw DomainError("predicted_tau: n - k must be >= 1");
  return codim >= 2 ? L * L / D : L * L / (D * std::log(L / r));
}

std::vector<TableRow> closed_form_table(const std::vector<double>& h_grid) {
  std::vector<TableRow> rows;
  auto push = [&](ClosedFamily f, double h) {
    ClosedForm c = closed_form_eta(f, h);
    rows.push_back({f, h, c.zeta, c.eta, c.D_over_D0});
  };
  push(ClosedFamily::Semicircle, 0.0);
  for (double h : h_grid) {
    if (h >= 0.0 && h < 1.0) push(ClosedFamily::FlatTop, h);
    if (h >= 0.0 && h <= 0.5) push(ClosedFamily::MiddleWall, h);
    if (h > -1.0 && h < 1.0) push(ClosedFamily::FlatBottom, h);
  }
  return rows;
}

void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows) {
  out << "family,h,zeta,eta,D_over_D0\n";
  out << std::setprecision(12);
  for (const auto& row : rows) {
    out << to_string(row.family) << ',' << row.h << ',';
    if (row.zeta) out << *row.zeta;
    out << ',' << row.eta << ',' << row.D_over_D0 << '\n';
  }
}

}  // namespace knudsen
