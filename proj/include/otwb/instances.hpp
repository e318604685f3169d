#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace otwb {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A discrete probability vector. Entries are nonnegative and sum to one
/// within 1e-12; construction renormalizes inputs whose mass is within 1e-6
/// of one and rejects anything further off.
class Histogram {
 public:
  Histogram() = default;

  static constexpr double kAcceptTolerance = 1e-6;
  static constexpr double kExactTolerance = 1e-12;

  // Validating constructor used for data coming from outside (files, users).
  static Histogram from_values(Vector values);
  // Normalizes arbitrary nonnegative weights with positive total.
  static Histogram normalized(Vector weights);

  const Vector& values() const { return values_; }
  Index size() const { return values_.size(); }
  double operator[](Index i) const { return values_[i]; }

  friend bool operator==(const Histogram& a, const Histogram& b) {
    return a.values_.size() == b.values_.size() && (a.values_.array() == b.values_.array()).all();
  }

 private:
  explicit Histogram(Vector v) : values_(std::move(v)) {}
  Vector values_;
};

/// Transport cost with the row/column minima removed. The raw matrix is kept
/// so files round-trip exactly; `entries()` is what the solvers use.
class CostMatrix {
 public:
  CostMatrix() = default;

  const Matrix& raw() const { return raw_; }
  const Matrix& entries() const { return entries_; }
  const Vector& row_shift() const { return row_shift_; }
  const Vector& col_shift() const { return col_shift_; }
  // ‖C‖ := max_ij C_ij of the normalized entries.
  double max_entry() const { return max_entry_; }
  Index size() const { return entries_.rows(); }

  // ⟨C_raw, X⟩ - ⟨C, X⟩ for every X with row sums mu and column sums nu.
  double offset(const Vector& mu, const Vector& nu) const;
  // Same constant for plans with fixed row sums only (column shift must be zero).
  double row_offset(const Vector& mu) const { return row_shift_.dot(mu); }

  friend CostMatrix normalize_cost(const Matrix& raw);
  friend CostMatrix normalize_cost_rows(const Matrix& raw);

 private:
  Matrix raw_;
  Matrix entries_;
  Vector row_shift_;
  Vector col_shift_;
  double max_entry_ = 0.0;
};

/// Subtracts each row's minimum, then each column's minimum.
CostMatrix normalize_cost(const Matrix& raw);
/// Subtracts row minima only. Used where a column marginal is a variable
/// (barycenters, unbalanced transport) and a column shift is not a constant.
CostMatrix normalize_cost_rows(const Matrix& raw);

struct OtInstance {
  Index n = 0;
  Histogram mu;
  Histogram nu;
  CostMatrix cost;
  double lambda = 0.0;  // dual box bound, ‖C‖/2 on the normalized cost

  static OtInstance make(Histogram mu, Histogram nu, const Matrix& raw_cost);
};

struct WbInstance {
  Index n = 0;
  Index m = 0;
  Vector weights;
  std::vector<Histogram> marginals;
  // One entry per marginal; entries may alias a single shared matrix.
  std::vector<std::shared_ptr<const CostMatrix>> costs;
  double lambda = 0.0;

  bool shared_cost() const;
  const CostMatrix& cost(Index l) const { return *costs[static_cast<std::size_t>(l)]; }
  // Σ_l w_l ⟨row_shift_l, μ_l⟩, the constant removed by row normalization.
  double offset() const;

  static WbInstance make(Vector weights, std::vector<Histogram> marginals,
                         const std::vector<Matrix>& raw_costs);
};

/// OT with a second marginal of arbitrary nonnegative mass (penalized variants).
struct UnbalancedOtInstance {
  Index n = 0;
  Histogram mu;
  Vector nu;
  CostMatrix cost;  // row-normalized only

  static UnbalancedOtInstance make(Histogram mu, Vector nu, const Matrix& raw_cost);
};

// ---------------------------------------------------------------------------
// Generators

Vector uniform_grid(double lo, double hi, Index n);
Vector gaussian_density(const Vector& grid, double mean, double stddev);
// |x_i - y_j| or (x_i - y_j)^2 on a 1-D grid.
Matrix grid_distance_cost(const Vector& grid, bool squared = false);
// Euclidean distance between pixel centers of an n_pix x n_pix image
// (row-major pixel order).
Matrix pixel_distance_cost(Index n_pix, bool squared = false);

OtInstance gen_gaussian_instance(Index n, std::uint64_t seed = 0);
OtInstance gen_random_instance(Index n, std::uint64_t seed);
Matrix corner_image(Index n_pix);
OtInstance gen_corner_to_dense(Index n_pix, bool squared = false);
// Synthetic grayscale image made of a few blobs along a random stroke.
Matrix gen_blob_image(Index n_pix, std::uint64_t seed);
Histogram image_histogram(const Matrix& image);
OtInstance image_pair_instance(const Matrix& a, const Matrix& b, bool squared = false);

struct GaussianWbCase {
  WbInstance instance;
  Vector grid;
  std::vector<double> means;
  std::vector<double> stddevs;
};
// m Gaussians with random parameters on an n-point grid of [-10, 10] with
// squared-distance cost scaled to max 1, uniform weights.
GaussianWbCase gen_gaussian_wb(Index m, Index n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// File IO

using AnyInstance = std::variant<OtInstance, WbInstance, UnbalancedOtInstance>;

std::string instance_to_json(const AnyInstance& inst);
AnyInstance instance_from_json(const std::string& text);
AnyInstance load_instance(const std::filesystem::path& path);
void save_instance(const AnyInstance& inst, const std::filesystem::path& path);

// Plain PGM (P2/P5) or CSV matrix of nonnegative intensities.
Matrix load_image(const std::filesystem::path& path);

}  // namespace otwb
