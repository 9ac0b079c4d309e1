#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "polalign/compensation.hpp"
#include "polalign/polarization.hpp"
#include "polalign/tomography.hpp"

namespace polalign {

struct TrialConfig {
  Direction direction = Direction::Forward;
  /// Signal detections N, spread multinomially over inputs and bases.
  int n_detected = 400;
  /// Intrinsic signal fidelity F_S.
  double signal_fidelity = 1.0;
  /// Mean Poissonian background counts per detector.
  double background_mean = 0.0;
  bool subtract_background = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Stochastic detection record for one channel draw.
///
/// Signal events draw the input uniformly (4 BB84 states forward, 6 states
/// reversed), the basis uniformly (Z/X/Y forward, Z/X reversed) and the
/// outcome from the Born rule on the depolarized received state. Each
/// detector then receives Poisson(background_mean) extra counts, each landing
/// on a uniformly chosen input row. With subtract_background the expected
/// background per cell is removed and negative results are clipped to zero.
/// With timing_aligned false each signal event is tagged with an input row
/// drawn independently of the state actually sent.
CountMatrix generate_counts(const ChannelUnitary& u, const TrialConfig& cfg, Rng& signal_rng, Rng& background_rng,
                            bool timing_aligned = true);
/// Single-stream convenience overload.
CountMatrix generate_counts(const ChannelUnitary& u, const TrialConfig& cfg, Rng& rng);

/// Noise-free expectation of generate_counts for `total` signal detections and
/// no background.
CountMatrix expected_counts(const ChannelUnitary& u, Direction direction, double fs, double total);

struct TrialOutcome {
  ChannelUnitary channel = ChannelUnitary::identity();
  CompensationResult compensation;
  double residual_qber = 0.0;
};

/// Haar channel, counts, tomography, compensation and residual QBER for one
/// seeded trial. Channel, signal, background and optimizer restarts use
/// separate streams derived from cfg.seed, so the background settings never
/// change the channel draw or the signal counts. Propagates InsufficientData
/// and ConvergenceError.
TrialOutcome run_trial_detailed(const TrialConfig& cfg, const CompensationOptions& opts = {});
double run_trial(const TrialConfig& cfg, const CompensationOptions& opts = {});

struct SweepGrid {
  std::vector<Direction> directions{Direction::Forward};
  std::vector<int> n_values;
  std::vector<double> fs_values;
  std::vector<double> background_means{0.0};
  std::vector<bool> subtract{false};

  void validate() const;
};

struct CellRecord {
  Direction direction = Direction::Forward;
  int n = 0;
  double fs = 1.0;
  double bg_mean = 0.0;
  bool bg_subtract = false;
  int samples = 0;
  int failures = 0;
  /// Absent when every trial failed or more than 1% failed.
  std::optional<double> mean_qber;
  /// Sample standard deviation; absent for fewer than two successes.
  std::optional<double> std_qber;
};

struct FitResult {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double r_squared = 0.0;
  int cells_used = 0;
};

struct SweepResult {
  std::vector<CellRecord> cells;
  std::optional<FitResult> fit;
};

/// Per-trial seed; independent of the subtraction flag so paired arms share
/// channel draws and signal counts.
std::uint64_t trial_seed(std::uint64_t master_seed, Direction direction, int n, double fs, double bg_mean,
                         std::uint64_t trial);

/// Runs `samples` trials per grid cell on up to `jobs` threads. The output
/// does not depend on `jobs`.
SweepResult run_sweep(const SweepGrid& grid, int samples, std::uint64_t master_seed, int jobs = 1,
                      const CompensationOptions& opts = {});

/// Cells eligible for the scaling fit: matching direction, no background,
/// a defined positive mean and fs > 0.5.
std::vector<CellRecord> select_fit_cells(std::span<const CellRecord> cells, Direction direction);

/// Least squares of log E = log alpha + beta log(2 fs - 1) + gamma log N.
/// r_squared is computed in log space. Throws FitError for fewer than four
/// cells or when N or fs takes a single value.
FitResult fit_power_law(std::span<const CellRecord> cells);

struct BackgroundPair {
  CellRecord without_subtraction;
  CellRecord with_subtraction;
  /// Mean QBER increase caused by subtracting the background.
  std::optional<double> delta;
};

/// Paired trials with and without background subtraction for every cell of
/// `grid` (its background settings are replaced) and each mean in
/// `background_means`.
std::vector<BackgroundPair> background_study(const SweepGrid& grid, std::span<const double> background_means,
                                             int samples, std::uint64_t master_seed, int jobs = 1,
                                             const CompensationOptions& opts = {});

struct DetectionRateParams {
  double pulse_rate = 0.0;        // Hz
  double mean_photon_number = 0;  // mu
  double channel_transmission = 1.0;
  double vacuum_yield = 0.0;

  void validate() const;
};

/// R [1 - (1 - Y0) exp(-eta mu)] in Hz.
double expected_detection_rate(const DetectionRateParams& p);
/// 10^(-dB/10).
double transmission_from_loss_db(double loss_db);

}  // namespace polalign
