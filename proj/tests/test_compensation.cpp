#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "polalign/compensation.hpp"
#include "polalign/errors.hpp"
#include "polalign/montecarlo.hpp"

using namespace polalign;
using std::numbers::pi;

namespace {

ReconstructionSet exact_forward(const ChannelUnitary& u, double fs = 1.0) {
  const auto s = bb84_states();
  return {Direction::Forward,
          {depolarize(u.apply(s[0]), fs), depolarize(u.apply(s[1]), fs), depolarize(u.apply(s[2]), fs),
           depolarize(u.apply(s[3]), fs)}};
}

ReconstructionSet uniform_set(const DensityMatrix& rho) { return {Direction::Forward, {rho, rho, rho, rho}}; }

}  // namespace

TEST_CASE("cost examples") {
  const auto exact = exact_forward(ChannelUnitary::identity());
  const auto targets = bb84_states();
  CompensationOptions opts;
  CHECK(cost({0, 0, 0}, exact, targets, opts) == doctest::Approx(-4.0).epsilon(1e-14));

  const auto mixed = uniform_set(DensityMatrix::maximally_mixed());
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const WavePlateAngles a(pi * uniform01(rng), pi * uniform01(rng), pi * uniform01(rng));
    CHECK(cost(a, mixed, targets, opts) == doctest::Approx(-2.0).epsilon(1e-14));
  }

  opts.motion_penalty = 1.0;
  opts.previous_angles = WavePlateAngles(0.1, 0, 0);
  CHECK(cost({0, 0, 0}, exact, targets, opts) == doctest::Approx(-4.0 + 0.1).epsilon(1e-14));
}

TEST_CASE("options validation") {
  CompensationOptions opts;
  opts.restarts = 0;
  CHECK_THROWS_AS(opts.validate(), InvalidInput);
  opts = {};
  opts.motion_penalty = 0.5;
  CHECK_THROWS_AS(opts.validate(), InvalidInput);
  opts.previous_angles = WavePlateAngles(0, 0, 0);
  CHECK_NOTHROW(opts.validate());
  opts.motion_penalty = -1.0;
  CHECK_THROWS_AS(opts.validate(), InvalidInput);
}

TEST_CASE("residual qber examples") {
  CHECK(residual_qber(ChannelUnitary::identity(), {0, 0, 0}) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(residual_qber(half_wave(pi / 4), {0, 0, 0}) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("identity channel from noiseless counts") {
  const auto recon = reconstruct(expected_counts(ChannelUnitary::identity(), Direction::Forward, 1.0, 6000));
  Rng rng(2);
  const auto res = optimize(recon, bb84_states(), {}, rng);
  CHECK(res.predicted_qber < 1e-6);
  CHECK(residual_qber(ChannelUnitary::identity(), res.angles) < 1e-6);
}

TEST_CASE("exact states through haar channels") {
  Rng channels(42), restarts(43);
  int good = 0;
  for (int i = 0; i < 100; ++i) {
    const auto u = haar_random_unitary(channels);
    const auto res = optimize(exact_forward(u), bb84_states(), {}, restarts);
    if (res.predicted_qber < 1e-6 && residual_qber(u, res.angles) < 1e-6) ++good;
  }
  CHECK(good >= 99);
}

TEST_CASE("cost and qber are affinely linked") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto u = haar_random_unitary(rng);
    const WavePlateAngles a(pi * uniform01(rng), pi * uniform01(rng), pi * uniform01(rng));
    const double e = residual_qber(u, a);
    CHECK(e == doctest::Approx(1.0 + cost(a, exact_forward(u), bb84_states(), {}) / 4.0).epsilon(1e-12));
    const double fs = 0.5 + 0.5 * uniform01(rng);
    if (fs < 0.51) continue;
    const double c = cost(a, exact_forward(u, fs), bb84_states(), {});
    CHECK(e == doctest::Approx((1.0 + c / 4.0 - (1.0 - fs)) / (2.0 * fs - 1.0)).epsilon(1e-10));
  }
}

TEST_CASE("optimizer never loses to its first start point") {
  Rng rng(6);
  for (int i = 0; i < 30; ++i) {
    const auto u = haar_random_unitary(rng);
    const auto counts = generate_counts(u, TrialConfig{Direction::Forward, 400, 0.95, 0.0, false, 0}, rng);
    const auto recon = reconstruct(counts);
    CompensationOptions opts;
    opts.previous_angles = WavePlateAngles(pi * uniform01(rng), pi * uniform01(rng), pi * uniform01(rng));
    const auto res = optimize(recon, bb84_states(), opts, rng);
    CHECK(res.cost <= cost(*opts.previous_angles, recon, bb84_states(), opts) + 1e-12);
    CHECK(res.cost <= cost({0, 0, 0}, recon, bb84_states(), opts) + 1e-12);
    CHECK(res.evaluations_used > 0);
  }
}

TEST_CASE("previous angles do not matter without a penalty") {
  Rng rng(7);
  CompensationOptions plain;
  for (int i = 0; i < 20; ++i) {
    const auto u = haar_random_unitary(rng);
    const auto recon = reconstruct(generate_counts(u, TrialConfig{Direction::Forward, 800, 1.0, 0.0, false, 0}, rng));
    Rng r1(100 + i), r2(100 + i);
    CompensationOptions moved;
    moved.previous_angles = WavePlateAngles(pi * uniform01(rng), pi * uniform01(rng), pi * uniform01(rng));
    const auto a = optimize(recon, bb84_states(), plain, r1);
    const auto b = optimize(recon, bb84_states(), moved, r2);
    CHECK(std::abs(a.predicted_qber - b.predicted_qber) < 1e-8);
  }
}

TEST_CASE("motion penalty keeps the plates near their last setting") {
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    const auto u = haar_random_unitary(rng);
    const auto exact = exact_forward(u);
    const auto first = optimize(exact, bb84_states(), {}, rng);
    CompensationOptions opts;
    opts.motion_penalty = 0.01;
    opts.previous_angles = first.angles;
    const auto again = optimize(exact, bb84_states(), opts, rng);
    CHECK(total_travel(again.angles, first.angles) < 1e-3);
    CHECK(again.predicted_qber < 1e-6);
  }
}

TEST_CASE("optimize is repeatable from a fixed stream") {
  Rng setup(9);
  const auto u = haar_random_unitary(setup);
  const auto recon = reconstruct(generate_counts(u, TrialConfig{Direction::Forward, 400, 1.0, 0.0, false, 0}, setup));
  Rng a(77), b(77);
  const auto x = optimize(recon, bb84_states(), {}, a);
  const auto y = optimize(recon, bb84_states(), {}, b);
  CHECK(x.angles == y.angles);
  CHECK(x.cost == y.cost);
}

TEST_CASE("forward and reversed orientations both align") {
  Rng rng(10);
  for (int i = 0; i < 20; ++i) {
    const auto u = haar_random_unitary(rng);
    for (Direction d : {Direction::Forward, Direction::Reversed}) {
      const auto recon = reconstruct(expected_counts(u, d, 1.0, 12000));
      const auto res = optimize(recon, bb84_states(), {}, rng);
      CHECK(residual_qber(u, res.angles, d) < 1e-6);
    }
  }
}

// The penalty-free cost compares each reconstruction itself with its target,
// so at N = 400 the estimates' own impurity (about 1.5 p.p. of fidelity) sits
// on top of the compensation error. The gap therefore exceeds 0.2 p.p.; this
// case pins that down rather than hiding it.
TEST_CASE("raw prediction overstates the residual at low N" * doctest::should_fail()) {
  double predicted = 0.0, actual = 0.0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const auto out = run_trial_detailed(TrialConfig{Direction::Forward, 400, 1.0, 0.0, false, 5000u + t});
    predicted += out.compensation.predicted_qber;
    actual += out.residual_qber;
  }
  CHECK(std::abs(predicted - actual) / trials < 0.002);
}

TEST_CASE("purified prediction tracks the true residual") {
  for (int n : {400, 1600}) {
    Rng rng(12 + n);
    double predicted = 0.0, actual = 0.0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
      const auto u = haar_random_unitary(rng);
      const auto recon = reconstruct(generate_counts(u, TrialConfig{Direction::Forward, n, 1.0, 0.0, false, 0}, rng));
      const auto res = optimize(recon, bb84_states(), {}, rng);
      predicted += predicted_residual_qber(res.angles, recon, bb84_states());
      actual += residual_qber(u, res.angles);
    }
    CHECK(predicted >= actual);
    CHECK((predicted - actual) / trials < (n == 400 ? 0.004 : 0.001));
  }
}

TEST_CASE("purified prediction ignores isotropic depolarization") {
  Rng rng(11);
  const auto u = haar_random_unitary(rng);
  const auto noisy = exact_forward(u, 0.9);
  const auto res = optimize(noisy, bb84_states(), {}, rng);
  CHECK(res.predicted_qber == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(predicted_residual_qber(res.angles, noisy, bb84_states()) < 1e-6);
}

TEST_CASE("mean residual falls with more detections") {
  SweepGrid grid;
  grid.n_values = {400, 1600, 6400};
  grid.fs_values = {1.0, 0.95};
  const auto sweep = run_sweep(grid, 500, 2024, 4);
  // Cells are ordered by n, then fs.
  for (std::size_t f = 0; f < 2; ++f) {
    const double e400 = *sweep.cells[f].mean_qber;
    const double e1600 = *sweep.cells[2 + f].mean_qber;
    const double e6400 = *sweep.cells[4 + f].mean_qber;
    CHECK(e1600 <= e400 + 0.0005);
    CHECK(e6400 <= e1600 + 0.0005);
  }
}
