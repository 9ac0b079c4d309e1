#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "polalign/polarization.hpp"

namespace polalign {

/// Forward: tomography of received states per prepared input.
/// Reversed: tomography of prepared states per receiver outcome.
enum class Direction { Forward, Reversed };

std::string_view direction_name(Direction d);
/// Accepts "forward" or "reversed"; throws InvalidInput otherwise.
Direction parse_direction(std::string_view s);

/// Detection counts d_nm; rows are prepared inputs, columns are outcomes.
///
/// Forward matrices are 4x6 (inputs H,V,D,A by outcomes H,V,D,A,R,L) and
/// reversed matrices are 6x4. Entries are nonnegative; they are integral for
/// raw detections but may be fractional after background subtraction.
class CountMatrix {
 public:
  explicit CountMatrix(Direction direction);
  /// Row-major entries; throws InvalidInput on wrong size or negative entries.
  CountMatrix(Direction direction, std::vector<double> entries);

  Direction direction() const { return direction_; }
  std::size_t rows() const { return direction_ == Direction::Forward ? 4 : 6; }
  std::size_t cols() const { return direction_ == Direction::Forward ? 6 : 4; }
  std::span<const Label> row_labels() const;
  std::span<const Label> col_labels() const;

  double at(std::size_t row, std::size_t col) const { return entries_[row * cols() + col]; }
  void set(std::size_t row, std::size_t col, double value);
  void add(std::size_t row, std::size_t col, double value) { set(row, col, at(row, col) + value); }

  double row_total(std::size_t row) const;
  double col_total(std::size_t col) const;
  double total() const;
  const std::vector<double>& entries() const { return entries_; }

  friend bool operator==(const CountMatrix&, const CountMatrix&) = default;

 private:
  Direction direction_;
  std::vector<double> entries_;
};

/// Totals for one tomography run, ordered H, V, D, A, R, L.
using OutcomeCounts = std::array<double, 6>;

/// Fraction of the measurement record devoted to each Pauli basis.
struct BasisWeights {
  double z = 1.0 / 3.0;
  double x = 1.0 / 3.0;
  double y = 1.0 / 3.0;

  /// Throws InvalidInput unless all are positive and sum to one.
  void validate() const;
};

/// Stokes-parameter inversion (I + s.sigma)/2. Hermitian with unit trace,
/// but not necessarily positive for noisy data. Throws InsufficientData naming
/// the basis ("Z", "X" or "Y") when a basis pair is empty.
Matrix2 linear_inversion(const OutcomeCounts& counts);

/// Initializer for the likelihood iteration: linear inversion with eigenvalues
/// clipped at 1e-6 and renormalized.
DensityMatrix psd_projected(const Matrix2& hermitian);

struct MleOptions {
  /// epsilon in the diluted update (I + eps R) rho (I + eps R).
  double dilution = 1.0;
  /// Stop once the log-likelihood per count gains less than this in one
  /// iteration.
  double tolerance = 1e-10;
  int max_iterations = 10000;
  /// Record the log-likelihood after every iteration.
  bool keep_history = false;
};

struct MleReport {
  DensityMatrix state;
  double log_likelihood = 0.0;
  int iterations = 0;
  std::vector<double> history;
};

/// Thrown when the iteration cap is hit before the likelihood settles.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, DensityMatrix best, double last_delta)
      : std::runtime_error(what), best_(best), last_delta_(last_delta) {}
  const DensityMatrix& best() const { return best_; }
  double last_delta() const { return last_delta_; }

 private:
  DensityMatrix best_;
  double last_delta_;
};

/// Multinomial log-likelihood sum_m n_m log(w_m <phi_m|rho|phi_m>).
double log_likelihood(const OutcomeCounts& counts, const BasisWeights& weights, const Matrix2& rho);

/// Maximum-likelihood state by the diluted R-rho-R iteration, started from
/// the PSD projection of the linear inversion (a basis pair without counts
/// contributes a zero Stokes component to the start point). The basis weights
/// shift the log-likelihood by a constant and do not move the maximizer.
/// Throws InsufficientData for fewer than 6 counts and ConvergenceError when
/// the iteration cap is reached.
MleReport mle_reconstruct_report(const OutcomeCounts& counts, const BasisWeights& weights = {},
                                 const MleOptions& options = {});
DensityMatrix mle_reconstruct(const OutcomeCounts& counts, const BasisWeights& weights = {},
                              const MleOptions& options = {});

/// Four states indexed H, V, D, A, tagged with the protocol orientation.
struct ReconstructionSet {
  Direction direction;
  std::array<DensityMatrix, 4> states;
};

/// One estimate per prepared input row. Throws InsufficientData naming the
/// basis when no row recorded any outcome in it, or naming the row when that
/// row has fewer than 6 counts.
ReconstructionSet reconstruct_forward(const CountMatrix& cm, const BasisWeights& weights = {},
                                      const MleOptions& options = {});
/// One estimate per receiver outcome column: the effective prepared state
/// that the channel maps onto that outcome. Throws InsufficientData naming the
/// outcome for an empty column, or the basis when no input of it was sent.
ReconstructionSet reconstruct_reversed(const CountMatrix& cm, const BasisWeights& weights = {},
                                       const MleOptions& options = {});
/// Dispatches on cm.direction().
ReconstructionSet reconstruct(const CountMatrix& cm, const BasisWeights& weights = {}, const MleOptions& options = {});

}  // namespace polalign
