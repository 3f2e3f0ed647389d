#pragma once

#include <cstddef>
#include <vector>

namespace knudsen {

enum class GridKind { Graded, Quantile };

// Partition of (0,pi) into bins with their stationary (1/2 sin) masses.
class AngleGrid {
 public:
  // Log-graded edges, mirror symmetric about pi/2, finest spacing `c` at 0 and pi.
  static AngleGrid graded(std::size_t n, double c = 1e-8);
  // Equal stationary mass per bin.
  static AngleGrid quantile(std::size_t n);
  static AngleGrid make(GridKind kind, std::size_t n);

  std::size_t size() const { return weights_.size(); }
  const std::vector<double>& edges() const { return edges_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& nodes() const { return nodes_; }
  double lo(std::size_t i) const { return edges_[i]; }
  double hi(std::size_t i) const { return edges_[i + 1]; }
  std::size_t find(double psi) const;
  // Stationary u-quantile of the law restricted to bin i.
  double quantile_in(std::size_t i, double u) const;

 private:
  explicit AngleGrid(std::vector<double> edges);
  std::vector<double> edges_, weights_, nodes_;
};

// Stationary u-quantile on (lo, hi), stable when the bin is tiny or near pi.
double angle_quantile_in(double lo, double hi, double u);

}  // namespace knudsen
