#pragma once

#include <array>
#include <string>
#include <vector>

#include "knudsen/random.hpp"

namespace knudsen {

// Post-collision direction in 2D: angle from the wall and speed.
struct AngleState {
  double phi = 0.0;
  double speed = 1.0;
};

// Velocity in the wall frame for n in {2,3}. Component n-1 is the inward
// normal; the others are tangential. In 3D, component 0 is the channel axis
// for the cylinder (k=1); components 0,1 span the slab plane for k=2.
struct Velocity {
  std::array<double, 3> v{};
  int n = 2;

  double normal() const { return v[n - 1]; }
  double norm2() const { return v[0] * v[0] + v[1] * v[1] + v[2] * v[2]; }
};

AngleState to_angle(const Velocity& v);
Velocity to_velocity(const AngleState& a);

enum class MeasureKind { CosineLaw, SurfaceMaxwellian };

struct SurfaceMeasure {
  MeasureKind kind = MeasureKind::CosineLaw;
  int n = 2;
  double s = 1.0;     // speed, CosineLaw
  double beta = 1.0;  // inverse temperature, SurfaceMaxwellian
  double M = 1.0;     // particle mass, SurfaceMaxwellian

  static SurfaceMeasure cosine(int n, double s);
  static SurfaceMeasure maxwellian(int n, double beta, double M);

  void validate() const;
  std::string label() const;

  // Angular density in 2D w.r.t. dphi; 1/2 sin phi for both kinds.
  static double angle_density(double phi);
  static double angle_cdf(double phi);
  static double angle_quantile(double u);
  // Mass of (lo, hi) without cancellation near either end.
  static double angle_mass(double lo, double hi);

  double mean_square_speed() const;
  // Root-mean-square speed (s for CosineLaw).
  double rms_speed() const;

  // 2D speed density w.r.t. dv (area element), Maxwellian only.
  double velocity_density_2d(const AngleState& a) const;

  AngleState sample_angle_state(Stream& rng) const;  // n must be 2
  double sample_speed(Stream& rng) const;
  Velocity sample(Stream& rng) const;  // n in {2,3}
  // Velocity whose normal component sits at quantile u of its marginal (small
  // u: grazing); the tangential part comes from rng. Drawing u ~ U(0,1)
  // reproduces sample().
  Velocity sample_at_normal_quantile(double u, Stream& rng) const;
};

// Any n >= 2: x uniform in the unit (n-1)-ball, v = s (x, sqrt(1-|x|^2)).
std::vector<double> sample_cosine_hemisphere(int n, double s, Stream& rng);

// Any n >= 2: Gaussian tangential components, Rayleigh normal component.
std::vector<double> sample_surface_maxwellian(int n, double beta, double M, Stream& rng);

}  // namespace knudsen
