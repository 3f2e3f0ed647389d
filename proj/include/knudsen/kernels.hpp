#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "knudsen/geometry.hpp"
#include "knudsen/measures.hpp"
#include "knudsen/random.hpp"

namespace knudsen {

class AngleGrid;

// Receives the one-step law of a start angle, piece by piece. Masses passed
// to all calls for one start angle sum to 1.
class RowSink {
 public:
  virtual ~RowSink() = default;
  virtual void add(double psi, double mass) = 0;
  // Mass that stays exactly at the start state.
  virtual void add_atom(double mass) = 0;
  // Mass spread as the stationary angle law.
  virtual void add_stationary(double mass) = 0;
  // Integrates f (a density in psi) over the sink's bins, scaled by `scale`;
  // returns the integrated mass before scaling.
  virtual double add_density(const std::function<double(double)>& f, double scale) = 0;
};

// Quadrature for deterministic rows: `thetas` stationary-quantile start angles
// per bin, `positions` stratified entry positions per start angle.
struct RowRule {
  int thetas = 8;
  int positions = 256;
};

class KernelImpl {
 public:
  virtual ~KernelImpl() = default;

  virtual AngleState step(const AngleState& s, Stream& rng) const = 0;
  // Default: 2D through angles, otherwise unsupported.
  virtual Velocity step_velocity(const Velocity& v, Stream& rng) const;
  virtual bool supports_dimension(int n) const { return n == 2; }

  // Continuous part of the transition density w.r.t. dpsi.
  virtual std::optional<double> density(double /*phi*/, double /*psi*/) const { return std::nullopt; }
  virtual bool has_density() const { return false; }
  // Probability of returning the start state unchanged.
  virtual double atom(double /*phi*/) const { return 0.0; }
  virtual bool speed_preserving() const { return true; }

  // Deterministic row for start angles distributed as the stationary law on
  // (lo, hi).
  virtual bool has_row() const { return false; }
  virtual void row(double lo, double hi, const RowRule& rule, RowSink& sink) const;

  SurfaceMeasure stationary;
  bool natural = true;
  std::string label;
};

// Immutable, cheaply copyable handle.
class CollisionKernel {
 public:
  CollisionKernel() = default;
  explicit CollisionKernel(std::shared_ptr<const KernelImpl> impl) : impl_(std::move(impl)) {}

  AngleState step(const AngleState& s, Stream& rng) const { return impl_->step(s, rng); }
  Velocity step_velocity(const Velocity& v, Stream& rng) const { return impl_->step_velocity(v, rng); }
  bool supports_dimension(int n) const { return impl_->supports_dimension(n); }
  std::optional<double> density(double phi, double psi) const { return impl_->density(phi, psi); }
  bool has_density() const { return impl_->has_density(); }
  double atom(double phi) const { return impl_->atom(phi); }
  bool speed_preserving() const { return impl_->speed_preserving(); }
  bool has_row() const { return impl_->has_row(); }
  void row(double lo, double hi, const RowRule& rule, RowSink& sink) const { impl_->row(lo, hi, rule, sink); }
  const SurfaceMeasure& stationary() const { return impl_->stationary; }
  bool natural() const { return impl_->natural; }
  const std::string& label() const { return impl_->label; }
  explicit operator bool() const { return static_cast<bool>(impl_); }

 private:
  std::shared_ptr<const KernelImpl> impl_;
};

using Acceptance = std::function<double(double phi, double psi)>;

CollisionKernel microstructure_kernel(const CellGeometry& cell, const SurfaceMeasure& nu = SurfaceMeasure{});
CollisionKernel ms_kernel(double alpha, const SurfaceMeasure& nu);
// Angle-level Metropolis-Hastings; speed is left unchanged. Without an
// acceptance function the ratio min{1, w(u)q(u,v)/(w(v)q(v,u))} is used,
// which needs a proposal density.
CollisionKernel mh_kernel(const CollisionKernel& proposal, const SurfaceMeasure& target,
                          std::optional<Acceptance> acceptance = std::nullopt);
CollisionKernel flat_top_kernel(double h, const CollisionKernel& base);
CollisionKernel identity_kernel(const SurfaceMeasure& nu = SurfaceMeasure{});
// Uniform angle proposal, q = 1/pi. Not natural.
CollisionKernel uniform_angle_kernel();

// Exact density of the semicircle map's pushforward, summed over bounce
// branches; phi in (0,pi).
double semicircle_density(double phi, double psi);

struct StationarityReport {
  double statistic = 0.0;
  double p_value = 0.0;
  // Speed comparison; only for measures with random speed.
  std::optional<double> speed_statistic;
  std::optional<double> speed_p_value;
  bool passed(double level) const;
};

enum class StationarityTest { KolmogorovSmirnov, ChiSquare };

StationarityReport check_stationarity(const CollisionKernel& kernel, const SurfaceMeasure& nu, long n_samples,
                                      Stream& rng, StationarityTest test = StationarityTest::KolmogorovSmirnov);

// max |w(phi) p(phi,psi) - w(psi) p(psi,phi)| over distinct grid pairs.
double check_detailed_balance(const CollisionKernel& kernel, const SurfaceMeasure& nu,
                              const std::vector<double>& grid);

// Off-diagonal cell masses of k1 dominate those of k2 up to tol.
bool dominates_off_diagonal(const CollisionKernel& k1, const CollisionKernel& k2, const SurfaceMeasure& nu,
                            const AngleGrid& grid, double tol, std::uint64_t seed = 0);

}  // namespace knudsen
