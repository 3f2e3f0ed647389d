#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace knudsen {

enum class ClosedFamily { Semicircle, FlatTop, MiddleWall, FlatBottom, MS, IID };

std::string to_string(ClosedFamily f);
ClosedFamily closed_family_from_string(const std::string& s);

struct ClosedForm {
  ClosedFamily family = ClosedFamily::Semicircle;
  double param = 0.0;  // h, or alpha for MS
  double eta = 0.0;
  std::optional<double> zeta;
  double D_over_D0 = 0.0;
};

// Semicircle shallow-angle ratio, -ln(3)/4.
long double semicircle_zeta();
// Flat-bottom ratio for h in (-1, 1); h < 0 encodes a raised floor.
long double flat_bottom_zeta(long double h);

ClosedForm closed_form_eta(ClosedFamily family, double param = 0.0);

struct DiscontinuityReport {
  double eta_below = 0.0;
  double eta_semicircle = 0.0;
  double eta_half = 0.0;
  double ratio = 0.0;
  double expected_ratio = 0.0;
  bool passed = false;
};

DiscontinuityReport middle_wall_discontinuity_check(double h_below, double tol = 1e-12);

// L^2 / D for n - k >= 2, L^2 / (D ln(L/r)) for n - k = 1.
double predicted_tau(double L, double r, double D, int codim);

struct TableRow {
  ClosedFamily family;
  double h;
  std::optional<double> zeta;
  double eta;
  double D_over_D0;
};

std::vector<TableRow> closed_form_table(const std::vector<double>& h_grid);
void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows);

}  // namespace knudsen
