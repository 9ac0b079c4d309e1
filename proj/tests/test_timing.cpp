#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "polalign/errors.hpp"
#include "polalign/montecarlo.hpp"
#include "polalign/nelder_mead.hpp"
#include "polalign/timing.hpp"

using namespace polalign;
using std::numbers::pi;

namespace {

// Euler parametrization Rz(a) Ry(b) Rz(c) covering SU(2).
ChannelUnitary euler(const std::array<double, 3>& x) {
  const Complex ea = std::polar(1.0, x[0] / 2), ec = std::polar(1.0, x[2] / 2);
  const double cb = std::cos(x[1] / 2), sb = std::sin(x[1] / 2);
  const Matrix2 rz_a{std::conj(ea), 0.0, 0.0, ea};
  const Matrix2 ry{cb, -sb, sb, cb};
  const Matrix2 rz_c{std::conj(ec), 0.0, 0.0, ec};
  return ChannelUnitary(rz_a * ry * rz_c);
}

// Direct evaluation of the largest linear-basis detection probability.
double brute_max_probability(const ChannelUnitary& u) {
  double best = 0.0;
  for (Label in : kBB84Labels) {
    const auto out = u.apply(canonical_state(in));
    for (Label m : kBB84Labels) best = std::max(best, 0.5 * fidelity_pure(canonical_state(m), out));
  }
  return best;
}

}  // namespace

TEST_CASE("aligned maximum probability") {
  CHECK(aligned_max_probability(ChannelUnitary::identity()) == doctest::Approx(0.5).epsilon(1e-15));
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto u = haar_random_unitary(rng);
    CHECK(aligned_max_probability(u) == doctest::Approx(brute_max_probability(u)).epsilon(1e-14));
  }
}

TEST_CASE("no rotation pushes the maximum below three eighths") {
  Rng rng(2);
  double lowest = 1.0;
  for (int i = 0; i < 10000; ++i) lowest = std::min(lowest, aligned_max_probability(haar_random_unitary(rng)));
  CHECK(lowest >= 0.375 - 1e-9);
}

TEST_CASE("worst case unitary") {
  const auto w = worst_case_unitary();
  CHECK(max_abs_diff(w.matrix().adjoint() * w.matrix(), Matrix2::identity()) < 1e-12);
  CHECK(std::abs(aligned_max_probability(w) - 0.375) < 1e-9);
  // The images of H and D sit at latitude +-45 degrees.
  const auto h = w.apply(canonical_state(Label::H)).bloch();
  const auto d = w.apply(canonical_state(Label::D)).bloch();
  CHECK(std::abs(h[1]) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(std::abs(d[1]) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
}

TEST_CASE("numerical minimax agrees with the construction") {
  Rng rng(3);
  auto f = [](const std::array<double, 3>& x) { return aligned_max_probability(euler(x)); };
  double best = 1.0;
  std::array<double, 3> arg{};
  for (int s = 0; s < 100; ++s) {
    const std::array<double, 3> start{2 * pi * uniform01(rng), pi * uniform01(rng), 2 * pi * uniform01(rng)};
    auto r = nelder_mead<3>(f, start, 0.3, 1e-15, 4000);
    // The objective is a maximum of smooth pieces; shrinking restarts from the
    // incumbent help the simplex settle into the kink.
    for (double edge : {0.05, 0.01, 0.002, 4e-4}) {
      const auto again = nelder_mead<3>(f, r.x, edge, 1e-16, 4000);
      if (again.value <= r.value) r = again;
    }
    if (r.value < best) {
      best = r.value;
      arg = r.x;
    }
  }
  CHECK(std::abs(best - aligned_max_probability(worst_case_unitary())) < 1e-6);
  CHECK(brute_max_probability(euler(arg)) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("misaligned model") {
  CHECK(misaligned_frequency_model() == 0.25);
  Rng rng(4);
  for (const auto& u : {ChannelUnitary::identity(), haar_random_unitary(rng)}) {
    const auto c = simulate_linear_counts(u, 100000, 1.0, false, rng);
    for (std::size_t n = 0; n < 4; ++n) {
      double row = 0.0;
      for (double x : c[n]) row += x;
      const double sd = std::sqrt(row * 0.25 * 0.75);
      for (double x : c[n]) CHECK(std::abs(x - row / 4) <= 3 * sd);
    }
  }
}

TEST_CASE("misaligned frequencies pass a chi-square test") {
  Rng rng(5);
  const auto c = simulate_linear_counts(worst_case_unitary(), 1000000, 1.0, false, rng);
  double chi2 = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double row = 0.0;
    for (double x : c[n]) row += x;
    for (double x : c[n]) chi2 += (x - row / 4) * (x - row / 4) / (row / 4);
  }
  // Four rows with three free cells each.
  const double p = boost::math::gamma_q(6.0, chi2 / 2.0);
  CHECK(p > 0.01);
}

TEST_CASE("classify aligned identity counts") {
  Rng rng(6);
  const auto v = classify(simulate_linear_counts(ChannelUnitary::identity(), 10000, 1.0, true, rng));
  CHECK(v.verdict == Verdict::PolarizationFrameMisaligned);
  CHECK(v.input == v.outcome);
  CHECK(v.max_conditional_frequency == doctest::Approx(0.5).epsilon(0.05));
  CHECK(v.lower <= v.max_conditional_frequency);
  CHECK(v.upper >= v.max_conditional_frequency);
  CHECK(v.total_counts == 10000.0);
}

TEST_CASE("classify shuffled counts") {
  Rng rng(7);
  const auto v = classify(simulate_linear_counts(ChannelUnitary::identity(), 10000, 1.0, false, rng));
  CHECK(v.verdict == Verdict::TimingMisaligned);
}

TEST_CASE("classify tiny samples") {
  Rng rng(8);
  const auto c = simulate_linear_counts(ChannelUnitary::identity(), 16, 1.0, true, rng);
  bool rows_ok = true;
  for (const auto& row : c) rows_ok = rows_ok && (row[0] + row[1] + row[2] + row[3] > 0);
  if (rows_ok) CHECK(classify(c, 0.99).verdict == Verdict::Inconclusive);

  LinearCounts handmade{};
  for (std::size_t n = 0; n < 4; ++n) {
    handmade[n][n] = 2;
    handmade[n][(n + 2) % 4] = 1;
    handmade[n][n ^ 1] = 1;
  }
  CHECK(classify(handmade, 0.99).verdict == Verdict::Inconclusive);
}

TEST_CASE("classify errors") {
  LinearCounts c{};
  c[0][0] = 5;
  c[1][1] = 5;
  c[2][2] = 5;
  CHECK_THROWS_AS(classify(c), InsufficientData);
  c[3][3] = 5;
  CHECK_THROWS_AS(classify(c, 1.0), InvalidInput);
  CHECK_THROWS_AS(classify(c, 0.0), InvalidInput);
}

// Every decisive verdict may still be wrong with probability up to one minus
// the confidence, so small samples are covered by the rate check below.
TEST_CASE("wrong verdicts stay within the confidence budget") {
  Rng channels(15), rng(16);
  const int trials = 20000;
  for (bool aligned : {false, true}) {
    int wrong = 0;
    for (int t = 0; t < trials; ++t) {
      const auto u = aligned ? worst_case_unitary() : haar_random_unitary(channels);
      const auto v = classify(simulate_linear_counts(u, 1000, 1.0, aligned, rng), 0.99);
      if (v.verdict == (aligned ? Verdict::TimingMisaligned : Verdict::PolarizationFrameMisaligned)) ++wrong;
    }
    // Binomial(20000, 0.01) stays below 260 with overwhelming probability.
    CHECK(wrong < 260);
  }
}

TEST_CASE("verdicts settle as N grows") {
  Rng channels(9);
  for (int truth = 0; truth < 20; ++truth) {
    const auto u = haar_random_unitary(channels);
    const bool aligned = truth % 2 == 0;
    Verdict settled = Verdict::Inconclusive;
    for (int n : {10000, 30000, 100000, 300000}) {
      Rng rng(derive_seed({77, static_cast<std::uint64_t>(truth)}));
      const auto v = classify(simulate_linear_counts(u, n, 1.0, aligned, rng));
      if (settled != Verdict::Inconclusive) CHECK(v.verdict == settled);
      if (v.verdict != Verdict::Inconclusive) settled = v.verdict;
    }
    CHECK(settled == (aligned ? Verdict::PolarizationFrameMisaligned : Verdict::TimingMisaligned));
  }
}

TEST_CASE("linear slice") {
  Rng rng(10);
  const auto u = haar_random_unitary(rng);
  const auto fwd = generate_counts(u, TrialConfig{Direction::Forward, 1000, 1.0, 0.0, false, 0}, rng);
  const auto s = linear_slice(fwd);
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t m = 0; m < 4; ++m) CHECK(s[n][m] == fwd.at(n, m));
  }
  const auto rev = generate_counts(u, TrialConfig{Direction::Reversed, 1000, 1.0, 0.0, false, 0}, rng);
  const auto r = linear_slice(rev);
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t m = 0; m < 4; ++m) CHECK(r[n][m] == rev.at(n, m));
  }
}

TEST_CASE("timing scramble in the full generator") {
  Rng s(11), b(12);
  const auto cm = generate_counts(worst_case_unitary(), TrialConfig{Direction::Forward, 30000, 1.0, 0.0, false, 0}, s,
                                  b, false);
  CHECK(classify(linear_slice(cm)).verdict == Verdict::TimingMisaligned);
  Rng s2(13), b2(14);
  const auto ok = generate_counts(worst_case_unitary(), TrialConfig{Direction::Forward, 300000, 1.0, 0.0, false, 0},
                                  s2, b2, true);
  CHECK(classify(linear_slice(ok)).verdict == Verdict::PolarizationFrameMisaligned);
}
