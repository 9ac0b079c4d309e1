#include "polalign/montecarlo.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <thread>

#include "polalign/errors.hpp"

namespace polalign {

namespace {

constexpr double kMaxFailureFraction = 0.01;

// Stream tags mixed into the per-trial seed.
enum Stream : std::uint64_t { kChannel = 1, kSignal = 2, kBackground = 3, kOptimizer = 4 };

std::span<const Label> inputs_for(Direction d) {
  if (d == Direction::Forward) return kBB84Labels;
  return kSixLabels;
}

int bases_for(Direction d) { return d == Direction::Forward ? 3 : 2; }

// probability[row][basis] of the first eigenstate of that basis, given the
// depolarized received state for that row's input.
std::vector<std::array<double, 3>> plus_probabilities(const ChannelUnitary& u, Direction d, double fs) {
  const auto inputs = inputs_for(d);
  std::vector<std::array<double, 3>> p(inputs.size());
  static constexpr Label kPlus[] = {Label::H, Label::D, Label::R};
  for (std::size_t row = 0; row < inputs.size(); ++row) {
    const DensityMatrix rho = depolarize(u.apply(canonical_state(inputs[row])), fs);
    for (int b = 0; b < 3; ++b) p[row][b] = std::clamp(fidelity_mixed(canonical_state(kPlus[b]), rho), 0.0, 1.0);
  }
  return p;
}

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct TrialSlot {
  bool ok = false;
  double qber = 0.0;
};

CellRecord summarize(CellRecord cell, std::span<const TrialSlot> slots) {
  CompensatedSum sum;
  int ok = 0;
  for (const auto& s : slots) {
    if (s.ok) {
      sum.add(s.qber);
      ++ok;
    }
  }
  cell.samples = static_cast<int>(slots.size());
  cell.failures = cell.samples - ok;
  if (ok == 0 || cell.failures > kMaxFailureFraction * cell.samples) return cell;
  const double mean = sum.value() / ok;
  cell.mean_qber = mean;
  if (ok >= 2) {
    CompensatedSum sq;
    for (const auto& s : slots) {
      if (s.ok) sq.add((s.qber - mean) * (s.qber - mean));
    }
    cell.std_qber = std::sqrt(sq.value() / (ok - 1));
  }
  return cell;
}

}  // namespace

void TrialConfig::validate() const {
  const int min_n = direction == Direction::Forward ? 4 : 6;
  if (n_detected < min_n) {
    throw InvalidInput("detections N must be at least " + std::to_string(min_n) + " for the " +
                       std::string(direction_name(direction)) + " protocol");
  }
  if (!(signal_fidelity >= 0.5 && signal_fidelity <= 1.0)) throw InvalidInput("signal fidelity F_S must lie in [0.5, 1]");
  if (!(background_mean >= 0.0) || !std::isfinite(background_mean)) {
    throw InvalidInput("background mean must be finite and nonnegative");
  }
}

CountMatrix generate_counts(const ChannelUnitary& u, const TrialConfig& cfg, Rng& signal_rng, Rng& background_rng,
                            bool timing_aligned) {
  cfg.validate();
  CountMatrix cm(cfg.direction);
  const auto p = plus_probabilities(u, cfg.direction, cfg.signal_fidelity);
  const std::size_t rows = cm.rows();
  const auto n_bases = static_cast<std::size_t>(bases_for(cfg.direction));

  std::vector<double> cells(rows * cm.cols(), 0.0);
  for (int e = 0; e < cfg.n_detected; ++e) {
    const std::size_t row = uniform_index(signal_rng, rows);
    const std::size_t basis = uniform_index(signal_rng, n_bases);
    const std::size_t outcome = 2 * basis + (uniform01(signal_rng) < p[row][basis] ? 0 : 1);
    const std::size_t tagged = timing_aligned ? row : uniform_index(signal_rng, rows);
    cells[tagged * cm.cols() + outcome] += 1.0;
  }

  if (cfg.background_mean > 0.0) {
    for (std::size_t det = 0; det < cm.cols(); ++det) {
      const std::uint64_t extra = poisson(background_rng, cfg.background_mean);
      for (std::uint64_t k = 0; k < extra; ++k) cells[uniform_index(background_rng, rows) * cm.cols() + det] += 1.0;
    }
    if (cfg.subtract_background) {
      const double per_cell = cfg.background_mean / static_cast<double>(rows);
      for (double& c : cells) c = std::max(0.0, c - per_cell);
    }
  }
  return CountMatrix(cfg.direction, std::move(cells));
}

CountMatrix generate_counts(const ChannelUnitary& u, const TrialConfig& cfg, Rng& rng) {
  return generate_counts(u, cfg, rng, rng);
}

CountMatrix expected_counts(const ChannelUnitary& u, Direction direction, double fs, double total) {
  CountMatrix cm(direction);
  const auto p = plus_probabilities(u, direction, fs);
  const double per_setting = total / static_cast<double>(cm.rows() * bases_for(direction));
  for (std::size_t row = 0; row < cm.rows(); ++row) {
    for (int b = 0; b < bases_for(direction); ++b) {
      cm.set(row, 2 * b, per_setting * p[row][b]);
      cm.set(row, 2 * b + 1, per_setting * (1.0 - p[row][b]));
    }
  }
  return cm;
}

TrialOutcome run_trial_detailed(const TrialConfig& cfg, const CompensationOptions& opts) {
  cfg.validate();
  Rng channel_rng(derive_seed({cfg.seed, kChannel}));
  Rng signal_rng(derive_seed({cfg.seed, kSignal}));
  Rng background_rng(derive_seed({cfg.seed, kBackground}));
  Rng optimizer_rng(derive_seed({cfg.seed, kOptimizer}));

  TrialOutcome out;
  out.channel = haar_random_unitary(channel_rng);
  const CountMatrix counts = generate_counts(out.channel, cfg, signal_rng, background_rng);
  const ReconstructionSet recon = reconstruct(counts);
  out.compensation = optimize(recon, bb84_states(), opts, optimizer_rng);
  out.residual_qber = residual_qber(out.channel, out.compensation.angles, cfg.direction);
  return out;
}

double run_trial(const TrialConfig& cfg, const CompensationOptions& opts) {
  return run_trial_detailed(cfg, opts).residual_qber;
}

void SweepGrid::validate() const {
  if (directions.empty() || n_values.empty() || fs_values.empty() || background_means.empty() || subtract.empty()) {
    throw InvalidInput("sweep grid has an empty axis");
  }
  for (double bg : background_means) {
    if (!(bg >= 0.0) || !std::isfinite(bg)) throw InvalidInput("background means must be finite and nonnegative");
  }
  for (Direction d : directions) {
    for (int n : n_values) {
      for (double fs : fs_values) TrialConfig{d, n, fs, 0.0, false, 0}.validate();
    }
  }
}

std::uint64_t trial_seed(std::uint64_t master_seed, Direction direction, int n, double fs, double bg_mean,
                         std::uint64_t trial) {
  return derive_seed({master_seed, static_cast<std::uint64_t>(direction), static_cast<std::uint64_t>(n),
                      std::bit_cast<std::uint64_t>(fs), std::bit_cast<std::uint64_t>(bg_mean), trial});
}

SweepResult run_sweep(const SweepGrid& grid, int samples, std::uint64_t master_seed, int jobs,
                      const CompensationOptions& opts) {
  grid.validate();
  opts.validate();
  if (samples < 1) throw InvalidInput("samples per cell must be at least 1");

  std::vector<CellRecord> cells;
  std::vector<TrialConfig> base;
  for (Direction d : grid.directions) {
    for (int n : grid.n_values) {
      for (double fs : grid.fs_values) {
        for (double bg : grid.background_means) {
          for (bool sub : grid.subtract) {
            CellRecord c;
            c.direction = d;
            c.n = n;
            c.fs = fs;
            c.bg_mean = bg;
            c.bg_subtract = sub;
            cells.push_back(c);
            base.push_back(TrialConfig{d, n, fs, bg, sub, 0});
          }
        }
      }
    }
  }

  const std::size_t per_cell = static_cast<std::size_t>(samples);
  const std::size_t total = cells.size() * per_cell;
  std::vector<TrialSlot> slots(total);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};

  auto worker = [&] {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= total || failed.load()) return;
      const std::size_t ci = task / per_cell;
      const std::size_t trial = task % per_cell;
      TrialConfig cfg = base[ci];
      cfg.seed = trial_seed(master_seed, cfg.direction, cfg.n_detected, cfg.signal_fidelity, cfg.background_mean, trial);
      try {
        slots[task] = {true, run_trial(cfg, opts)};
      } catch (const InsufficientData&) {
        slots[task] = {false, 0.0};
      } catch (const ConvergenceError&) {
        slots[task] = {false, 0.0};
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };

  const int n_threads = std::max(1, jobs);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  SweepResult result;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    result.cells.push_back(summarize(cells[ci], std::span<const TrialSlot>(slots).subspan(ci * per_cell, per_cell)));
  }
  return result;
}

std::vector<CellRecord> select_fit_cells(std::span<const CellRecord> cells, Direction direction) {
  std::vector<CellRecord> out;
  for (const auto& c : cells) {
    if (c.direction == direction && c.bg_mean == 0.0 && c.mean_qber && *c.mean_qber > 0.0 && c.fs > 0.5) {
      out.push_back(c);
    }
  }
  return out;
}

FitResult fit_power_law(std::span<const CellRecord> cells) {
  if (cells.size() < 4) throw FitError("power-law fit needs at least 4 cells, got " + std::to_string(cells.size()));
  std::vector<std::array<double, 3>> rows;  // log(2fs-1), log N, log E
  for (const auto& c : cells) {
    if (!c.mean_qber || !(*c.mean_qber > 0.0) || !(c.fs > 0.5) || c.n <= 0) {
      throw FitError("fit cells need a positive mean QBER, fs > 0.5 and N > 0");
    }
    rows.push_back({std::log(2.0 * c.fs - 1.0), std::log(static_cast<double>(c.n)), std::log(*c.mean_qber)});
  }
  const double m = static_cast<double>(rows.size());
  std::array<double, 3> mean{};
  for (const auto& r : rows) {
    for (int k = 0; k < 3; ++k) mean[k] += r[k] / m;
  }
  // Centered normal equations for the two slopes.
  double sxx = 0, sxy = 0, syy = 0, sxz = 0, syz = 0, szz = 0;
  for (const auto& r : rows) {
    const double x = r[0] - mean[0];
    const double y = r[1] - mean[1];
    const double z = r[2] - mean[2];
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
    sxz += x * z;
    syz += y * z;
    szz += z * z;
  }
  const double scale_x = std::max(1.0, std::abs(mean[0]));
  const double scale_y = std::max(1.0, std::abs(mean[1]));
  if (sxx <= 1e-24 * scale_x * scale_x * m) throw FitError("degenerate fit: no spread in fs (signal fidelity)");
  if (syy <= 1e-24 * scale_y * scale_y * m) throw FitError("degenerate fit: no spread in N (detections)");
  const double det = sxx * syy - sxy * sxy;
  if (det <= 1e-12 * sxx * syy) throw FitError("degenerate fit: fs and N are collinear");

  FitResult fit;
  fit.beta = (sxz * syy - syz * sxy) / det;
  fit.gamma = (syz * sxx - sxz * sxy) / det;
  fit.alpha = std::exp(mean[2] - fit.beta * mean[0] - fit.gamma * mean[1]);
  double ss_res = 0.0;
  for (const auto& r : rows) {
    const double pred = std::log(fit.alpha) + fit.beta * r[0] + fit.gamma * r[1];
    ss_res += (r[2] - pred) * (r[2] - pred);
  }
  fit.r_squared = szz > 0.0 ? 1.0 - ss_res / szz : 1.0;
  fit.cells_used = static_cast<int>(rows.size());
  return fit;
}

std::vector<BackgroundPair> background_study(const SweepGrid& grid, std::span<const double> background_means,
                                             int samples, std::uint64_t master_seed, int jobs,
                                             const CompensationOptions& opts) {
  SweepGrid paired = grid;
  paired.background_means.assign(background_means.begin(), background_means.end());
  paired.subtract = {false, true};
  const SweepResult sweep = run_sweep(paired, samples, master_seed, jobs, opts);

  std::vector<BackgroundPair> pairs;
  for (std::size_t i = 0; i + 1 < sweep.cells.size(); i += 2) {
    BackgroundPair p{sweep.cells[i], sweep.cells[i + 1], std::nullopt};
    if (p.with_subtraction.mean_qber && p.without_subtraction.mean_qber) {
      p.delta = *p.with_subtraction.mean_qber - *p.without_subtraction.mean_qber;
    }
    pairs.push_back(p);
  }
  return pairs;
}

void DetectionRateParams::validate() const {
  if (!(pulse_rate >= 0.0) || !std::isfinite(pulse_rate)) throw InvalidInput("pulse rate must be finite and nonnegative");
  if (!(mean_photon_number >= 0.0) || !std::isfinite(mean_photon_number)) {
    throw InvalidInput("mean photon number mu must be finite and nonnegative");
  }
  if (!(channel_transmission >= 0.0 && channel_transmission <= 1.0)) {
    throw InvalidInput("channel transmission eta must lie in [0, 1]");
  }
  if (!(vacuum_yield >= 0.0 && vacuum_yield <= 1.0)) throw InvalidInput("vacuum yield Y0 must lie in [0, 1]");
}

double expected_detection_rate(const DetectionRateParams& p) {
  p.validate();
  return p.pulse_rate * (1.0 - (1.0 - p.vacuum_yield) * std::exp(-p.channel_transmission * p.mean_photon_number));
}

double transmission_from_loss_db(double loss_db) {
  if (!std::isfinite(loss_db) || loss_db < 0.0) throw InvalidInput("loss in dB must be finite and nonnegative");
  return std::pow(10.0, -loss_db / 10.0);
}

}  // namespace polalign
