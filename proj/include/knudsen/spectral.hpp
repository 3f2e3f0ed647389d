#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "knudsen/grid.hpp"
#include "knudsen/kernels.hpp"

namespace knudsen {

enum class DiscretizeMode { Density, Histogram };

struct DiscretizeOptions {
  // Unset: graded for density rows, quantile for histogram rows (a histogram
  // cannot fill the 1e-17-mass end bins of the graded grid).
  std::optional<GridKind> grid;
  DiscretizeMode mode = DiscretizeMode::Density;
  RowRule rule;
  long histogram_samples = 100000;
  std::uint64_t seed = 0;
  int workers = 0;  // 0: OpenMP default
  bool parallel = true;

  GridKind grid_kind() const {
    return grid.value_or(mode == DiscretizeMode::Histogram ? GridKind::Quantile : GridKind::Graded);
  }
};

// Unsymmetrized transition probabilities between grid bins, with the part of
// each row's diagonal that is an exact atom.
struct RawRows {
  Eigen::MatrixXd prob;
  std::vector<double> atoms;
};

RawRows assemble_rows(const CollisionKernel& kernel, const AngleGrid& grid, const DiscretizeOptions& opt);

struct KernelMatrix {
  AngleGrid grid;
  Eigen::MatrixXd entries;    // row-stochastic, W * entries symmetric
  std::vector<double> atoms;  // exact-atom part of each diagonal entry
  double asymmetry = 0.0;     // max |J - J^T| before symmetrization, J = W * raw
  double min_entry = 0.0;
  std::string label;

  const std::vector<double>& nodes() const { return grid.nodes(); }
  const std::vector<double>& weights() const { return grid.weights(); }
};

KernelMatrix discretize_kernel(const CollisionKernel& kernel, const AngleGrid& grid,
                               const DiscretizeOptions& opt = {});
KernelMatrix discretize_kernel(const CollisionKernel& kernel, std::size_t grid_size,
                               const DiscretizeOptions& opt = {});

struct Decomposition {
  AngleGrid grid;
  Eigen::VectorXd eigenvalues;  // descending
  Eigen::MatrixXd vectors;      // orthonormal eigenvectors of W^{1/2} P W^{-1/2}
  Eigen::VectorXd sqrt_w;
  Eigen::Index constant_index = 0;

  // Eigenvector k of P, orthonormal in the W-weighted inner product.
  Eigen::VectorXd eigenvector(Eigen::Index k) const;
};

Decomposition spectrum(const KernelMatrix& m);

struct SpectralMeasure {
  std::vector<double> eigenvalues;
  std::vector<double> masses;
};

// Constant mode removed.
SpectralMeasure spectral_measure(const Decomposition& d, const std::vector<double>& z);

// Integral of (1+l)/(1-l) against the measure.
double eta_from_measure(const SpectralMeasure& m);

// Bin averages of Z = 2r cot(phi) restricted to |Z| <= 2ra (a <= 0: no cut).
std::vector<double> truncated_displacement(const AngleGrid& grid, double a, double r = 1.0);

using ZBuilder = std::function<std::vector<double>(double a)>;

double eta_truncated(const Decomposition& d, double a, const ZBuilder& z_builder = {});

struct Extrapolation {
  double eta = 0.0;
  double uncertainty = 0.0;
  double slope = 0.0;  // coefficient of 1/ln a
  double residual_rms = 0.0;
  bool warning = false;
};

// Fits eta_a = eta + c / ln a.
Extrapolation eta_extrapolate(const std::vector<double>& a, const std::vector<double>& eta_a,
                              const std::vector<double>& sigma = {});

double spectral_gap(const Decomposition& d);

struct SpectralOptions {
  std::size_t grid_size = 2048;
  DiscretizeOptions discretize;
  std::vector<double> a_values = {1e2, 1e3, 1e4, 1e5, 1e6};
};

struct SpectralResult {
  std::string label;
  std::size_t grid_size = 0;
  std::vector<double> top_eigenvalues;  // up to 8, constant mode first
  double min_eigenvalue = 0.0;
  double gap = 0.0;
  double asymmetry = 0.0;
  std::vector<double> a_values;
  std::vector<double> eta_a;
  Extrapolation fit;
};

SpectralResult run_spectral(const CollisionKernel& kernel, const SpectralOptions& opt);

}  // namespace knudsen
