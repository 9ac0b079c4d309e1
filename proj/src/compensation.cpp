#include "polalign/compensation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "polalign/errors.hpp"
#include "polalign/nelder_mead.hpp"

namespace polalign {

namespace {

constexpr double kTieTolerance = 1e-12;

struct ApplyResult {
  Complex h, v;
};

ApplyResult apply(const Matrix2& m, const PureState& psi) {
  return {m.m00 * psi.h() + m.m01 * psi.v(), m.m10 * psi.h() + m.m11 * psi.v()};
}

double quad(const ApplyResult& w, const Matrix2& rho) {
  const Complex val = std::conj(w.h) * (rho.m00 * w.h + rho.m01 * w.v) + std::conj(w.v) * (rho.m10 * w.h + rho.m11 * w.v);
  return val.real();
}

double travel_from(const std::array<double, 3>& theta, const WavePlateAngles& from) {
  return std::abs(wrapped_difference(theta[0], from.theta1)) + std::abs(wrapped_difference(theta[1], from.theta2)) +
         std::abs(wrapped_difference(theta[2], from.theta3));
}

}  // namespace

void CompensationOptions::validate() const {
  if (restarts < 1) throw InvalidInput("restarts must be at least 1");
  if (!(cost_tolerance > 0.0)) throw InvalidInput("cost_tolerance must be positive");
  if (max_evaluations < 1) throw InvalidInput("max_evaluations must be positive");
  if (!(motion_penalty >= 0.0) || !std::isfinite(motion_penalty)) {
    throw InvalidInput("motion penalty weight must be finite and nonnegative");
  }
  if (motion_penalty > 0.0 && !previous_angles) throw InvalidInput("motion penalty requires previous_angles");
  if (!(initial_edge > 0.0)) throw InvalidInput("initial simplex edge must be positive");
}

double fidelity_cost(const std::array<double, 3>& theta, const ReconstructionSet& recon, const TargetStates& targets) {
  const Matrix2 v = compensation_matrix(theta[0], theta[1], theta[2]);
  double sum = 0.0;
  if (recon.direction == Direction::Forward) {
    // <psi|V rho V^dagger|psi> = <V^dagger psi|rho|V^dagger psi>
    const Matrix2 vd = v.adjoint();
    for (std::size_t n = 0; n < 4; ++n) sum += quad(apply(vd, targets[n]), recon.states[n].matrix());
  } else {
    // <phi|V^dagger rho V|phi> = <V phi|rho|V phi>
    for (std::size_t n = 0; n < 4; ++n) sum += quad(apply(v, targets[n]), recon.states[n].matrix());
  }
  return -sum;
}

double cost(const WavePlateAngles& angles, const ReconstructionSet& recon, const TargetStates& targets,
            const CompensationOptions& opts) {
  double c = fidelity_cost(angles.as_array(), recon, targets);
  if (opts.motion_penalty > 0.0 && opts.previous_angles) {
    c += opts.motion_penalty * total_travel(angles, *opts.previous_angles);
  }
  return c;
}

CompensationResult optimize(const ReconstructionSet& recon, const TargetStates& targets,
                            const CompensationOptions& opts, Rng& rng) {
  opts.validate();
  const WavePlateAngles origin = opts.previous_angles.value_or(WavePlateAngles{});
  const bool penalized = opts.motion_penalty > 0.0;

  auto objective = [&](const std::array<double, 3>& theta) {
    double c = fidelity_cost(theta, recon, targets);
    if (penalized) c += opts.motion_penalty * travel_from(theta, origin);
    return c;
  };

  std::vector<std::array<double, 3>> starts;
  starts.reserve(static_cast<std::size_t>(opts.restarts));
  starts.push_back(origin.as_array());
  for (int r = 1; r < opts.restarts; ++r) {
    const double a = std::numbers::pi * uniform01(rng);
    const double b = std::numbers::pi * uniform01(rng);
    const double c = std::numbers::pi * uniform01(rng);
    starts.push_back({a, b, c});
  }

  CompensationResult best{};
  double best_travel = 0.0;
  int total_evals = 0;
  bool have = false;
  for (const auto& start : starts) {
    const auto run = nelder_mead<3>(objective, start, opts.initial_edge, opts.cost_tolerance, opts.max_evaluations);
    total_evals += run.evaluations;
    const WavePlateAngles angles(run.x[0], run.x[1], run.x[2]);
    const double travel = total_travel(angles, origin);
    const bool better = !have || run.value < best.cost - kTieTolerance ||
                        (run.value <= best.cost + kTieTolerance && travel < best_travel);
    if (better) {
      best.angles = angles;
      best.cost = run.value;
      best.converged = run.converged;
      best_travel = travel;
      have = true;
    }
  }

  best.evaluations_used = total_evals;
  const double qber = 1.0 + fidelity_cost(best.angles.as_array(), recon, targets) / 4.0;
  best.predicted_qber = std::clamp(qber, 0.0, 1.0);
  return best;
}

ReconstructionSet purified(const ReconstructionSet& recon) {
  ReconstructionSet out = recon;
  for (auto& rho : out.states) {
    auto b = rho.bloch();
    const double r = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
    if (r < 1e-12) continue;
    for (double& x : b) x /= r;
    rho = DensityMatrix::from_bloch(b);
  }
  return out;
}

double predicted_residual_qber(const WavePlateAngles& angles, const ReconstructionSet& recon,
                               const TargetStates& targets) {
  const double qber = 1.0 + fidelity_cost(angles.as_array(), purified(recon), targets) / 4.0;
  return std::clamp(qber, 0.0, 1.0);
}

double residual_qber(const ChannelUnitary& true_channel, const WavePlateAngles& angles, Direction direction) {
  const Matrix2 v = compensation_matrix(angles.theta1, angles.theta2, angles.theta3);
  const Matrix2 w = direction == Direction::Forward ? v * true_channel.matrix() : true_channel.matrix() * v;
  const auto states = bb84_states();
  std::array<double, 4> f{};
  for (std::size_t n = 0; n < 4; ++n) {
    const auto out = apply(w, states[n]);
    f[n] = std::clamp(std::norm(std::conj(states[n].h()) * out.h + std::conj(states[n].v()) * out.v), 0.0, 1.0);
  }
  return std::clamp(qber_from_fidelities(f), 0.0, 1.0);
}

}  // namespace polalign
