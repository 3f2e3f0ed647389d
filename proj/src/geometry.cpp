#include "knudsen/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "knudsen/error.hpp"

namespace knudsen {

namespace {

constexpr double kPi = std::numbers::pi;

Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }

struct Arc {
  Point c;
  double R;
  double a0, a1;  // angular range, radians
};

struct Segment {
  Point p, q;
  bool middle_wall;
};

struct Cell {
  std::vector<Arc> arcs;
  std::vector<Segment> segments;
};

Cell build(const CellGeometry& g) {
  Cell c;
  switch (g.family) {
    case Family::Semicircle:
      c.arcs.push_back({{0.5, 0.0}, 0.5, -kPi, 0.0});
      break;
    case Family::FlatTop:
      c.arcs.push_back({{0.5, 0.0}, 0.5 * (1.0 - g.h), -kPi, 0.0});
      break;
    case Family::MiddleWall:
      c.arcs.push_back({{0.5, 0.0}, 0.5, -kPi, 0.0});
      if (g.h > 0.0) c.segments.push_back({{0.5, -0.5}, {0.5, -0.5 + g.h}, true});
      break;
    case Family::FlatBottom: {
      double b = 0.5 * (1.0 - g.h), a = 0.5 * (1.0 + g.h);
      c.arcs.push_back({{b, 0.0}, b, -kPi, -0.5 * kPi});
      c.arcs.push_back({{a, 0.0}, b, -0.5 * kPi, 0.0});
      if (g.h > 0.0) c.segments.push_back({{b, -b}, {a, -b}, false});
      break;
    }
  }
  return c;
}

bool on_arc(const Arc& arc, Point hit) {
  double ang = std::atan2(hit.y - arc.c.y, hit.x - arc.c.x);
  // The lower arcs end on the opening line where atan2 may flip to +pi.
  if (ang > 0.5 * kPi && arc.a0 <= -kPi + 1e-12) ang -= 2.0 * kPi;
  constexpr double eps = 1e-12;
  return ang >= arc.a0 - eps && ang <= arc.a1 + eps;
}

double wrap_angle(double psi) {
  psi = std::fmod(psi, 2.0 * kPi);
  if (psi < 0.0) psi += 2.0 * kPi;
  return psi;
}

double r0n(double phi, int n) {
  return 0.5 - std::sin((n * kPi - phi) / (2 * n + 1)) / (2.0 * std::sin(phi));
}

double r1n(double phi, int n) {
  return 0.5 + std::sin(((n - 1) * kPi + phi) / (2 * n + 1)) / (2.0 * std::sin(phi));
}

[[noreturn]] void throw_discontinuity() {
  throw GeometryError(GeometryError::Kind::OnDiscontinuity, "on discontinuity set");
}

void check_gap(double r, double point) {
  if (std::abs(r - point) < kDiscontinuityTol) throw_discontinuity();
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::Semicircle: return "semicircle";
    case Family::FlatTop: return "flat_top";
    case Family::MiddleWall: return "middle_wall";
    case Family::FlatBottom: return "flat_bottom";
  }
  return "unknown";
}

CellGeometry CellGeometry::flat_top(double h) {
  CellGeometry g{Family::FlatTop, h};
  g.validate();
  return g;
}

CellGeometry CellGeometry::middle_wall(double h) {
  CellGeometry g{Family::MiddleWall, h};
  g.validate();
  return g;
}

CellGeometry CellGeometry::flat_bottom(double h) {
  CellGeometry g{Family::FlatBottom, h};
  g.validate();
  return g;
}

void CellGeometry::validate() const {
  switch (family) {
    case Family::Semicircle:
      return;
    case Family::FlatTop:
    case Family::FlatBottom:
      if (!(h >= 0.0 && h < 1.0)) throw DomainError(label() + ": h must lie in [0,1)");
      return;
    case Family::MiddleWall:
      if (!(h >= 0.0 && h <= 0.5)) throw DomainError(label() + ": h must lie in [0,1/2]");
      return;
  }
}

std::string CellGeometry::label() const {
  if (family == Family::Semicircle) return "semicircle";
  return to_string(family) + "(h=" + std::to_string(h) + ")";
}

int semicircle_bounce_count(double phi, double r) {
  if (phi < kPi / 4) {
    double rp = r1n(phi, 1);
    check_gap(r, rp);
    return r < rp ? 1 : 2;
  }
  double lo = r0n(phi, 1), hi = r1n(phi, 1);
  check_gap(r, lo);
  check_gap(r, hi);
  if (r > lo && r < hi) return 1;
  constexpr int cap = 100000000;
  if (r <= lo) {
    for (int n = 2; n < cap; ++n) {
      double b = r0n(phi, n);
      check_gap(r, b);
      if (r > b) return n;
    }
  } else {
    for (int n = 2; n < cap; ++n) {
      double b = r1n(phi, n);
      check_gap(r, b);
      if (r < b) return n;
    }
  }
  throw GeometryError(GeometryError::Kind::Trapped, "trapped trajectory");
}

ExitRecord semicircle_exit_closed_form(double phi, double r, std::optional<int> n_hint) {
  if (!(phi >= kMinAngle && phi <= 0.5 * kPi))
    throw DomainError("semicircle_exit_closed_form: phi must lie in (0, pi/2]");
  if (!(r >= 0.0 && r <= 1.0)) throw DomainError("semicircle_exit_closed_form: r must lie in [0,1]");
  int n = n_hint ? *n_hint : semicircle_bounce_count(phi, r);
  if (n < 1) throw DomainError("semicircle_exit_closed_form: bounce count must be positive");
  double s = std::asin((2.0 * r - 1.0) * std::sin(phi));
  double psi = r <= 0.5 ? 2.0 * n * s + n * kPi - phi : 2.0 * n * s - (n - 2) * kPi - phi;
  ExitRecord rec;
  rec.psi = wrap_angle(psi);
  rec.bounces = n;
  return rec;
}

std::vector<double> semicircle_discontinuities(double phi, int n_cap) {
  if (!(phi > 0.0 && phi < 0.5 * kPi))
    throw DomainError("semicircle_discontinuities: phi must lie in (0, pi/2)");
  std::vector<double> out;
  if (phi < kPi / 4) {
    out.push_back(r1n(phi, 1));
    return out;
  }
  for (int n = 1; n <= n_cap; ++n) {
    double a = r0n(phi, n), b = r1n(phi, n);
    if (a > 0.0) out.push_back(a);
    if (b < 1.0) out.push_back(b);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double semicircle_exit_fast(double phi, double r, int* bounces) noexcept {
  if (phi > 0.5 * kPi) {
    double psi = semicircle_exit_fast(kPi - phi, 1.0 - r, bounces);
    return psi < 0.0 ? psi : kPi - psi;
  }
  // First hit on the circle is at polar angle -phi + s about the centre; each
  // chord then turns the hit point by pi - 2s clockwise.
  double s = std::asin((2.0 * r - 1.0) * std::sin(phi));
  double q = s >= 0.0 ? (kPi - phi + s) / (kPi - 2.0 * s) : (phi - s) / (kPi + 2.0 * s);
  double fl = std::floor(q);
  double frac = q - fl;
  double tol = 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + q);
  if (frac < tol || frac > 1.0 - tol) return -1.0;
  int n = 1 + static_cast<int>(fl);
  if (bounces) *bounces = n;
  double psi = std::fmod(n * (kPi + 2.0 * s) - phi, 2.0 * kPi);
  if (psi < 0.0) psi += 2.0 * kPi;
  return psi;
}

ExitRecord trace_cell(const CellGeometry& cell, EntryState entry, const TraceOptions& opt) {
  cell.validate();
  if (!(entry.phi > 0.0 && entry.phi < kPi)) throw DomainError("trace_cell: phi must lie in (0,pi)");
  if (!(entry.r >= 0.0 && entry.r <= 1.0)) throw DomainError("trace_cell: r must lie in [0,1]");
  if (entry.phi < kMinAngle || kPi - entry.phi < kMinAngle)
    throw GeometryError(GeometryError::Kind::Grazing, "grazing");
  if (opt.max_bounces < 1) throw DomainError("trace_cell: max_bounces must be >= 1");

  ExitRecord rec;
  Point pos{entry.r, 0.0};
  Point dir{std::cos(entry.phi), -std::sin(entry.phi)};
  if (opt.record_trace) rec.trace.push_back(pos);

  if (cell.family == Family::FlatTop && (entry.r < 0.5 * cell.h || entry.r > 1.0 - 0.5 * cell.h)) {
    rec.psi = entry.phi;
    rec.bounces = 1;
    return rec;
  }

  Cell c = build(cell);
  int last_arc = -1, last_seg = -1;
  constexpr double t_eps = 1e-13;
  constexpr double inf = std::numeric_limits<double>::infinity();

  for (long bounce = 0; bounce <= opt.max_bounces; ++bounce) {
    double best = inf;
    int hit_arc = -1, hit_seg = -1;

    for (int i = 0; i < static_cast<int>(c.arcs.size()); ++i) {
      const Arc& arc = c.arcs[i];
      Point oc = pos - arc.c;
      double b = dot(dir, oc);
      if (i == last_arc) {
        // Starting on this circle: roots are 0 and -2b.
        double t = -2.0 * b;
        if (t > t_eps && t < best && on_arc(arc, pos + t * dir)) {
          best = t;
          hit_arc = i;
          hit_seg = -1;
        }
        continue;
      }
      double cc = dot(oc, oc) - arc.R * arc.R;
      double disc = b * b - cc;
      if (disc < -kGrazingTol) continue;
      if (std::abs(disc) < kGrazingTol) {
        double t = -b;
        if (t > t_eps && on_arc(arc, pos + t * dir))
          throw GeometryError(GeometryError::Kind::Grazing, "grazing");
        continue;
      }
      double sq = std::sqrt(disc);
      double qv = -(b + std::copysign(sq, b));
      double roots[2] = {qv, qv != 0.0 ? cc / qv : 0.0};
      for (double t : roots) {
        if (t > t_eps && t < best && on_arc(arc, pos + t * dir)) {
          best = t;
          hit_arc = i;
          hit_seg = -1;
        }
      }
    }

    for (int i = 0; i < static_cast<int>(c.segments.size()); ++i) {
      if (i == last_seg) continue;
      const Segment& sg = c.segments[i];
      Point e = sg.q - sg.p;
      double denom = cross(dir, e);
      if (std::abs(denom) < 1e-15) continue;
      Point w = sg.p - pos;
      double t = cross(w, e) / denom;
      double u = cross(w, dir) / denom;
      if (t > t_eps && t < best && u >= 0.0 && u <= 1.0) {
        best = t;
        hit_seg = i;
        hit_arc = -1;
      }
    }

    if (dir.y > 0.0) {
      double t = -pos.y / dir.y;
      if (t <= best) {
        Point out = pos + t * dir;
        if (out.x < -1e-9 || out.x > 1.0 + 1e-9) throw NumericError("trace_cell: exit outside the opening");
        if (opt.record_trace) rec.trace.push_back(out);
        rec.psi = std::atan2(dir.y, dir.x);
        return rec;
      }
    }
    if (hit_arc < 0 && hit_seg < 0) throw NumericError("trace_cell: ray escaped the cell");

    pos = pos + best * dir;
    Point nrm;
    if (hit_arc >= 0) {
      const Arc& arc = c.arcs[hit_arc];
      nrm = (1.0 / arc.R) * (pos - arc.c);
    } else {
      const Segment& sg = c.segments[hit_seg];
      Point e = sg.q - sg.p;
      double len = std::sqrt(dot(e, e));
      nrm = {-e.y / len, e.x / len};
      if (sg.middle_wall) ++rec.wall_hits;
    }
    dir = dir - (2.0 * dot(dir, nrm)) * nrm;
    last_arc = hit_arc;
    last_seg = hit_seg;
    ++rec.bounces;
    if (opt.record_trace) rec.trace.push_back(pos);
  }
  throw GeometryError(GeometryError::Kind::Trapped, "trapped trajectory");
}

std::pair<double, double> cell_symmetry_conjugate(double phi, double r) { return {kPi - phi, 1.0 - r}; }

ExitRecord middle_wall_exit(const CellGeometry& cell, EntryState entry) {
  if (cell.family != Family::MiddleWall) throw DomainError("middle_wall_exit: MiddleWall cell required");
  cell.validate();
  ExitRecord traced = trace_cell(cell, entry);
  double psi;
  if (entry.phi <= 0.5 * kPi) {
    psi = semicircle_exit_closed_form(entry.phi, entry.r).psi;
  } else {
    auto [phi2, r2] = cell_symmetry_conjugate(entry.phi, entry.r);
    psi = kPi - semicircle_exit_closed_form(phi2, r2).psi;
  }
  // Unfolding across x = 1/2 maps the cell to itself; each wall hit mirrors.
  if (traced.wall_hits % 2 == 1) psi = kPi - psi;
  traced.psi = psi;
  return traced;
}

std::vector<std::pair<double, double>> shallow_support(const CellGeometry& cell, double phi) {
  double h = cell.family == Family::FlatBottom ? cell.h : 0.0;
  double c = (3.0 + h) / (1.0 - h);
  if (phi > 0.5 * kPi) {
    auto s = shallow_support(cell, kPi - phi);
    return {{kPi - s[1].second, kPi - s[1].first}, {kPi - s[0].second, kPi - s[0].first}};
  }
  return {{phi / c, c * phi}, {kPi - c * phi, kPi - phi / c}};
}

double shallow_kernel_density(const CellGeometry& cell, double phi, double psi, double threshold) {
  if (cell.family != Family::Semicircle && cell.family != Family::FlatBottom)
    throw DomainError("shallow_kernel_density: Semicircle or FlatBottom cell required");
  cell.validate();
  if (!(phi > 0.0 && phi < kPi)) throw DomainError("shallow_kernel_density: phi must lie in (0,pi)");
  if (phi > 0.5 * kPi) return shallow_kernel_density(cell, kPi - phi, kPi - psi, threshold);
  if (phi >= threshold) throw DomainError("shallow-angle formula invalid");
  double h = cell.family == Family::FlatBottom ? cell.h : 0.0;
  double c = (3.0 + h) / (1.0 - h);
  double sphi = std::sin(phi);
  if (psi > kPi - c * phi && psi < kPi - phi / c)
    return (1.0 - h) * std::cos(0.5 * (psi + phi - kPi)) / (4.0 * sphi);
  if (psi > phi / c && psi < c * phi)
    return (1.0 - h) * (1.0 - h) / (1.0 + h) * std::cos(0.25 * (psi + phi)) / (8.0 * sphi);
  return 0.0;
}

}  // namespace knudsen
