#pragma once

#include <array>
#include <optional>

#include "polalign/polarization.hpp"
#include "polalign/tomography.hpp"

namespace polalign {

struct CompensationOptions {
  /// Nelder-Mead runs; the first starts at previous_angles (or zeros), the
  /// rest at uniform random points of [0, pi)^3.
  int restarts = 10;
  /// Simplex value spread that counts as converged.
  double cost_tolerance = 1e-9;
  /// Evaluation budget per restart.
  int max_evaluations = 5000;
  /// Weight per radian of total wrapped plate travel from previous_angles.
  double motion_penalty = 0.0;
  std::optional<WavePlateAngles> previous_angles;
  /// Initial simplex edge in radians.
  double initial_edge = 0.2;

  void validate() const;
};

struct CompensationResult {
  WavePlateAngles angles;
  /// Cost at `angles`, including any motion penalty.
  double cost = 0.0;
  /// 1 + (penalty-free cost)/4.
  double predicted_qber = 0.0;
  int evaluations_used = 0;
  bool converged = false;
};

using TargetStates = std::array<PureState, 4>;

/// Negative summed fidelity of the compensated reconstructions against their
/// targets, for raw (unreduced) plate angles. Forward sets compare
/// V rho V^dagger with each target; reversed sets compare each
/// pre-compensated target V|phi> against the reconstructed prepared state.
double fidelity_cost(const std::array<double, 3>& theta, const ReconstructionSet& recon, const TargetStates& targets);

/// fidelity_cost plus motion_penalty * total wrapped travel from
/// previous_angles (the penalty is only active when motion_penalty > 0).
double cost(const WavePlateAngles& angles, const ReconstructionSet& recon, const TargetStates& targets,
            const CompensationOptions& opts);

/// Best-of-restarts simplex minimum of cost(). Ties (within 1e-12) go to the
/// candidate with the least travel from previous_angles.
CompensationResult optimize(const ReconstructionSet& recon, const TargetStates& targets,
                            const CompensationOptions& opts, Rng& rng);

/// Each reconstruction replaced by the pure state along its Bloch vector
/// (states at the sphere's center are kept as they are).
ReconstructionSet purified(const ReconstructionSet& recon);

/// Compensation error alone: the QBER predicted at `angles` after purifying
/// the reconstructions, so isotropic depolarization of the source does not
/// count against the alignment.
double predicted_residual_qber(const WavePlateAngles& angles, const ReconstructionSet& recon,
                               const TargetStates& targets);

/// QBER of ideal BB84 states through the true channel and the compensation:
/// V U for forward (receiver-side plates), U V for reversed (transmitter-side).
double residual_qber(const ChannelUnitary& true_channel, const WavePlateAngles& angles,
                     Direction direction = Direction::Forward);

}  // namespace polalign
