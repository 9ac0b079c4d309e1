#pragma once

#include <array>

#include "polalign/polarization.hpp"
#include "polalign/tomography.hpp"

namespace polalign {

/// Counts restricted to the linear bases: rows are tagged inputs H,V,D,A and
/// columns are outcomes H,V,D,A.
using LinearCounts = std::array<std::array<double, 4>, 4>;

/// Drops circular inputs or outcomes from a forward or reversed matrix.
LinearCounts linear_slice(const CountMatrix& cm);

enum class Verdict { TimingMisaligned, PolarizationFrameMisaligned, Inconclusive };

const char* verdict_name(Verdict v);

struct AlignmentVerdict {
  Verdict verdict = Verdict::Inconclusive;
  /// d_nm / (row n total) at the maximizing cell.
  double max_conditional_frequency = 0.0;
  Label input = Label::H;
  Label outcome = Label::H;
  double total_counts = 0.0;
  /// Clopper-Pearson interval for the maximizing cell, at the per-cell level
  /// implied by a Bonferroni split of (1 - confidence) over the 16 cells.
  double lower = 0.0;
  double upper = 1.0;
  double confidence = 0.0;
};

/// Largest detection probability (1/2)|<phi|U|psi>|^2 over the 16 pairs of
/// linear inputs and outcomes; the 1/2 is the receiver's Z/X basis choice.
double aligned_max_probability(const ChannelUnitary& u);

/// Conditional detection probability when events are tagged to the wrong
/// preparations: the received ensemble is maximally mixed, so 1/4.
double misaligned_frequency_model();

/// Tests "p = 1/4" (timing) against "p >= 3/8" (polarization) on the cell with
/// the largest conditional frequency. Each hypothesis is rejected when the
/// interval excludes it; a verdict is returned only if exactly one survives.
/// Throws InsufficientData for an empty input row and InvalidInput unless
/// 0 < confidence < 1.
AlignmentVerdict classify(const LinearCounts& counts, double confidence = 0.99);

/// A channel attaining the 3/8 minimum.
///
/// On the Poincare sphere the linear states sit on a great circle (the
/// equator of this construction) at 90 degree spacing. The channel sends the
/// images of |H> and |D> to the two points at latitude +-45 degrees on the
/// meridian midway between the H and D measurement directions. Each image is
/// then 60 degrees from its two nearest measurement states (projection
/// probability 3/4), and halving for the basis choice gives 3/8.
ChannelUnitary worst_case_unitary();

/// Linear-basis detection record for `events` signal detections with the
/// receiver choosing Z or X uniformly. With timing_aligned false each event is
/// tagged with an input drawn independently of the one actually sent.
LinearCounts simulate_linear_counts(const ChannelUnitary& u, int events, double fs, bool timing_aligned, Rng& rng);

}  // namespace polalign
