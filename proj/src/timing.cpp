#include "polalign/timing.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <algorithm>
#include <cmath>

#include "polalign/errors.hpp"

namespace polalign {

namespace {

constexpr double kTimingP = 0.25;
constexpr double kPolarizationP = 0.375;
constexpr int kCells = 16;

PureState state_from_bloch(double x, double y, double z) {
  const double theta = std::acos(std::clamp(z, -1.0, 1.0));
  const double phi = std::atan2(y, x);
  return PureState::normalized(std::cos(0.5 * theta), std::polar(std::sin(0.5 * theta), phi));
}

double dot(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

}  // namespace

LinearCounts linear_slice(const CountMatrix& cm) {
  // Both layouts list H, V, D, A first on each axis.
  LinearCounts out{};
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t m = 0; m < 4; ++m) out[n][m] = cm.at(n, m);
  }
  return out;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::TimingMisaligned: return "timing-misaligned";
    case Verdict::PolarizationFrameMisaligned: return "polarization-frame-misaligned";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

double aligned_max_probability(const ChannelUnitary& u) {
  double best = 0.0;
  for (Label in : kBB84Labels) {
    const PureState received = u.apply(canonical_state(in));
    for (Label out : kBB84Labels) best = std::max(best, 0.5 * fidelity_pure(canonical_state(out), received));
  }
  return best;
}

double misaligned_frequency_model() { return kTimingP; }

AlignmentVerdict classify(const LinearCounts& counts, double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw InvalidInput("confidence must lie strictly between 0 and 1");
  AlignmentVerdict v;
  v.confidence = confidence;
  double best_row_total = 0.0;
  double best_count = 0.0;
  bool first = true;
  for (std::size_t n = 0; n < 4; ++n) {
    double row = 0.0;
    for (double c : counts[n]) {
      if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidInput("counts must be finite and nonnegative");
      row += c;
    }
    if (!(row > 0.0)) {
      throw InsufficientData(std::string("input row ") + label_char(kBB84Labels[n]) + " has no counts",
                             std::string(1, label_char(kBB84Labels[n])));
    }
    v.total_counts += row;
    for (std::size_t m = 0; m < 4; ++m) {
      const double f = counts[n][m] / row;
      if (first || f > v.max_conditional_frequency) {
        first = false;
        v.max_conditional_frequency = f;
        v.input = kBB84Labels[n];
        v.outcome = kBB84Labels[m];
        best_row_total = row;
        best_count = counts[n][m];
      }
    }
  }

  const double alpha = (1.0 - confidence) / kCells;
  const double k = best_count;
  const double trials = best_row_total;
  v.lower = k > 0.0 ? boost::math::ibeta_inv(k, trials - k + 1.0, 0.5 * alpha) : 0.0;
  v.upper = k < trials ? boost::math::ibeta_inv(k + 1.0, trials - k, 1.0 - 0.5 * alpha) : 1.0;

  const bool timing_rejected = v.lower > kTimingP;
  const bool polarization_rejected = v.upper < kPolarizationP;
  if (timing_rejected && !polarization_rejected) {
    v.verdict = Verdict::PolarizationFrameMisaligned;
  } else if (polarization_rejected && !timing_rejected) {
    v.verdict = Verdict::TimingMisaligned;
  } else {
    v.verdict = Verdict::Inconclusive;
  }
  return v;
}

ChannelUnitary worst_case_unitary() {
  // Bloch axes are (X, Y, Z): H = +z, D = +x, and the circular poles are +-y.
  const double s = std::sqrt(0.5);
  const std::array<double, 3> image_d{0.5, -s, 0.5};
  const PureState uh = state_from_bloch(0.5, s, 0.5);
  const PureState uv(-std::conj(uh.v()), std::conj(uh.h()));

  // Fix the relative phase of the V column so that |D> lands on image_d.
  auto bloch_of_d = [&](Complex phase) {
    return PureState::normalized(uh.h() + phase * uv.h(), uh.v() + phase * uv.v()).bloch();
  };
  const auto c0 = bloch_of_d(1.0);
  const auto c1 = bloch_of_d(Complex{0.0, 1.0});
  const Complex phase = std::polar(1.0, std::atan2(dot(image_d, c1), dot(image_d, c0)));
  return ChannelUnitary(Matrix2{uh.h(), phase * uv.h(), uh.v(), phase * uv.v()});
}

LinearCounts simulate_linear_counts(const ChannelUnitary& u, int events, double fs, bool timing_aligned, Rng& rng) {
  if (events < 0) throw InvalidInput("event count must be nonnegative");
  std::array<std::array<double, 2>, 4> plus{};
  for (std::size_t n = 0; n < 4; ++n) {
    const DensityMatrix rho = depolarize(u.apply(canonical_state(kBB84Labels[n])), fs);
    plus[n][0] = fidelity_mixed(canonical_state(Label::H), rho);
    plus[n][1] = fidelity_mixed(canonical_state(Label::D), rho);
  }
  LinearCounts out{};
  for (int e = 0; e < events; ++e) {
    const std::size_t sent = uniform_index(rng, 4);
    const std::size_t basis = uniform_index(rng, 2);
    const std::size_t outcome = 2 * basis + (uniform01(rng) < plus[sent][basis] ? 0 : 1);
    const std::size_t tagged = timing_aligned ? sent : uniform_index(rng, 4);
    out[tagged][outcome] += 1.0;
  }
  return out;
}

}  // namespace polalign
