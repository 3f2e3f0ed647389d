#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace knudsen {

enum class Family { Semicircle, FlatTop, MiddleWall, FlatBottom };

std::string to_string(Family f);

// One period of the wall relief. The cell opening is the segment [0,1] x {0}
// and the cell body lies below it.
struct CellGeometry {
  Family family = Family::Semicircle;
  double h = 0.0;

  static CellGeometry semicircle() { return {Family::Semicircle, 0.0}; }
  static CellGeometry flat_top(double h);
  static CellGeometry middle_wall(double h);
  static CellGeometry flat_bottom(double h);

  // Throws DomainError when h is outside the family's range.
  void validate() const;
  std::string label() const;
  // True when Psi_phi(r) + Psi_{pi-phi}(1-r) = pi holds.
  bool mirror_symmetric() const { return true; }
};

// Entry through the opening at position r, travelling down at angle phi from
// the opening line; phi in (0,pi).
struct EntryState {
  double r = 0.5;
  double phi = 0.0;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct ExitRecord {
  double psi = 0.0;
  int bounces = 0;
  int wall_hits = 0;  // middle-wall reflections, MiddleWall only
  std::vector<Point> trace;
};

struct TraceOptions {
  long max_bounces = 1000000;
  bool record_trace = false;
};

inline constexpr double kDiscontinuityTol = 1e-12;
inline constexpr double kMinAngle = 1e-9;
inline constexpr double kGrazingTol = 1e-14;
inline constexpr double kShallowThreshold = 3.14159265358979323846 / 12.0;

// Exit angle of the semicircle cell for phi in (0, pi/2]. n_hint, when given,
// is trusted as the number of bounces.
ExitRecord semicircle_exit_closed_form(double phi, double r, std::optional<int> n_hint = {});

// Number of bounces from the discontinuity partition.
int semicircle_bounce_count(double phi, double r);

// Discontinuity points of r -> Psi_phi(r), sorted. For phi < pi/4 this is the
// single point r'. Otherwise r0^(n), r1^(n) for n = 1..n_cap inside (0,1).
std::vector<double> semicircle_discontinuities(double phi, int n_cap = 64);

// Fast semicircle map for any phi in (0,pi). Returns a negative value when r is
// within kDiscontinuityTol (in the bounce-count variable) of a discontinuity.
double semicircle_exit_fast(double phi, double r, int* bounces = nullptr) noexcept;

ExitRecord trace_cell(const CellGeometry& cell, EntryState entry, const TraceOptions& opt = {});

std::pair<double, double> cell_symmetry_conjugate(double phi, double r);

// Closed-form semicircle map with wall reflections decided by the tracer.
ExitRecord middle_wall_exit(const CellGeometry& cell, EntryState entry);

// Density of Psi_phi(R), R ~ U[0,1], w.r.t. dpsi, for phi below the shallow
// threshold (or its mirror above pi - threshold).
double shallow_kernel_density(const CellGeometry& cell, double phi, double psi,
                              double threshold = kShallowThreshold);

// Support arcs of the shallow density: {lo1, hi1, lo2, hi2}.
std::vector<std::pair<double, double>> shallow_support(const CellGeometry& cell, double phi);

}  // namespace knudsen
