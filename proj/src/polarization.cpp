#include "polalign/polarization.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "polalign/errors.hpp"

namespace polalign {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInvSqrt2 = 0.70710678118654752440;
const Complex kI{0.0, 1.0};

// R(theta) diag(1, e^{i delta}) R(-theta), expanded.
Matrix2 plate(double theta, Complex phase) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const Complex off = c * s * (1.0 - phase);
  return {c * c + s * s * phase, off, off, s * s + c * c * phase};
}

}  // namespace

double max_abs_diff(const Matrix2& a, const Matrix2& b) {
  return std::max({std::abs(a.m00 - b.m00), std::abs(a.m01 - b.m01), std::abs(a.m10 - b.m10),
                   std::abs(a.m11 - b.m11)});
}

char label_char(Label l) {
  static constexpr char kChars[] = {'H', 'V', 'D', 'A', 'R', 'L'};
  return kChars[static_cast<int>(l)];
}

Label parse_label(std::string_view s) {
  if (s.size() == 1) {
    switch (s[0]) {
      case 'H': return Label::H;
      case 'V': return Label::V;
      case 'D': return Label::D;
      case 'A': return Label::A;
      case 'R': return Label::R;
      case 'L': return Label::L;
      default: break;
    }
  }
  throw InvalidInput("unknown polarization label '" + std::string(s) + "' (expected one of H,V,D,A,R,L)");
}

// ---------------------------------------------------------------------------
// PureState

PureState::PureState(Complex h, Complex v) : h_(h), v_(v) {
  const double norm = std::norm(h) + std::norm(v);
  if (!std::isfinite(norm) || std::abs(norm - 1.0) > kInvariantTol) {
    throw InvalidInput("pure state amplitudes are not unit norm");
  }
}

PureState PureState::normalized(Complex h, Complex v) {
  const double norm = std::sqrt(std::norm(h) + std::norm(v));
  if (!(norm > 0.0) || !std::isfinite(norm)) throw InvalidInput("cannot normalize a zero or non-finite vector");
  return {h / norm, v / norm, Unchecked{}};
}

Matrix2 PureState::projector() const {
  return {std::norm(h_), h_ * std::conj(v_), v_ * std::conj(h_), std::norm(v_)};
}

std::array<double, 3> PureState::bloch() const {
  const Complex hv = std::conj(h_) * v_;
  return {2.0 * hv.real(), 2.0 * hv.imag(), std::norm(h_) - std::norm(v_)};
}

// ---------------------------------------------------------------------------
// DensityMatrix

std::array<double, 2> hermitian_eigenvalues(const Matrix2& m) {
  const double a = m.m00.real();
  const double d = m.m11.real();
  const double mean = 0.5 * (a + d);
  const double half_gap = std::hypot(0.5 * (a - d), std::abs(m.m01));
  return {mean - half_gap, mean + half_gap};
}

DensityMatrix::DensityMatrix(const Matrix2& m) : m_(m) {
  if (std::abs(m.m00.imag()) > kInvariantTol || std::abs(m.m11.imag()) > kInvariantTol ||
      std::abs(m.m01 - std::conj(m.m10)) > kInvariantTol) {
    throw InvalidInput("density matrix is not Hermitian");
  }
  if (std::abs(m.trace() - 1.0) > kInvariantTol) throw InvalidInput("density matrix trace is not one");
  if (hermitian_eigenvalues(m)[0] < -kInvariantTol) throw InvalidInput("density matrix is not positive semidefinite");
}

DensityMatrix DensityMatrix::projector(const PureState& psi) { return {psi.projector(), Unchecked{}}; }

DensityMatrix DensityMatrix::maximally_mixed() { return {Matrix2{0.5, 0.0, 0.0, 0.5}, Unchecked{}}; }

DensityMatrix DensityMatrix::from_bloch(const std::array<double, 3>& s) {
  const auto [x, y, z] = s;
  if (x * x + y * y + z * z > 1.0 + kInvariantTol) throw InvalidInput("Bloch vector lies outside the unit ball");
  return DensityMatrix(Matrix2{0.5 * (1.0 + z), 0.5 * Complex{x, -y}, 0.5 * Complex{x, y}, 0.5 * (1.0 - z)});
}

std::array<double, 3> DensityMatrix::bloch() const {
  return {2.0 * m_.m10.real(), 2.0 * m_.m10.imag(), m_.m00.real() - m_.m11.real()};
}

std::array<double, 2> DensityMatrix::eigenvalues() const { return hermitian_eigenvalues(m_); }

double DensityMatrix::purity() const {
  return std::norm(m_.m00) + std::norm(m_.m11) + 2.0 * std::norm(m_.m01);
}

DensityMatrix make_density_unchecked(const Matrix2& m) { return {m, DensityMatrix::Unchecked{}}; }

// ---------------------------------------------------------------------------
// ChannelUnitary

ChannelUnitary::ChannelUnitary(const Matrix2& m) : m_(m) {
  if (max_abs_diff(m.adjoint() * m, Matrix2::identity()) > kInvariantTol) {
    throw InvalidInput("matrix is not unitary");
  }
}

PureState ChannelUnitary::apply(const PureState& psi) const {
  return {m_.m00 * psi.h_ + m_.m01 * psi.v_, m_.m10 * psi.h_ + m_.m11 * psi.v_, PureState::Unchecked{}};
}

DensityMatrix ChannelUnitary::conjugate(const DensityMatrix& rho) const {
  Matrix2 out = m_ * rho.m_ * m_.adjoint();
  // Restore exact Hermiticity lost to rounding.
  out.m00 = out.m00.real();
  out.m11 = out.m11.real();
  out.m10 = std::conj(out.m01);
  return {out, DensityMatrix::Unchecked{}};
}

// ---------------------------------------------------------------------------
// Angles

double reduce_angle(double theta) {
  double r = std::fmod(theta, kPi);
  if (r < 0.0) r += kPi;
  if (r >= kPi) r = 0.0;
  return r;
}

WavePlateAngles::WavePlateAngles(double t1, double t2, double t3) {
  if (!std::isfinite(t1) || !std::isfinite(t2) || !std::isfinite(t3)) {
    throw InvalidInput("wave plate angles must be finite");
  }
  theta1 = reduce_angle(t1);
  theta2 = reduce_angle(t2);
  theta3 = reduce_angle(t3);
}

double wrapped_difference(double a, double b) {
  double d = reduce_angle(a - b);
  if (d >= 0.5 * kPi) d -= kPi;
  return d;
}

double total_travel(const WavePlateAngles& to, const WavePlateAngles& from) {
  return std::abs(wrapped_difference(to.theta1, from.theta1)) + std::abs(wrapped_difference(to.theta2, from.theta2)) +
         std::abs(wrapped_difference(to.theta3, from.theta3));
}

// ---------------------------------------------------------------------------
// States and fidelities

PureState canonical_state(Label label) {
  switch (label) {
    case Label::H: return {1.0, 0.0};
    case Label::V: return {0.0, 1.0};
    case Label::D: return {kInvSqrt2, kInvSqrt2};
    case Label::A: return {kInvSqrt2, -kInvSqrt2};
    case Label::R: return {kInvSqrt2, kI * kInvSqrt2};
    case Label::L: return {kInvSqrt2, -kI * kInvSqrt2};
  }
  throw InvalidInput("unknown polarization label");
}

PureState canonical_state(std::string_view label) { return canonical_state(parse_label(label)); }

std::array<PureState, 4> bb84_states() {
  return {canonical_state(Label::H), canonical_state(Label::V), canonical_state(Label::D), canonical_state(Label::A)};
}

double fidelity_pure(const PureState& phi, const PureState& psi) {
  return std::norm(std::conj(phi.h()) * psi.h() + std::conj(phi.v()) * psi.v());
}

double expectation(const PureState& phi, const Matrix2& m) {
  const Complex h = phi.h();
  const Complex v = phi.v();
  const Complex val = std::conj(h) * (m.m00 * h + m.m01 * v) + std::conj(v) * (m.m10 * h + m.m11 * v);
  return val.real();
}

double fidelity_mixed(const PureState& phi, const DensityMatrix& rho) { return expectation(phi, rho.matrix()); }

DensityMatrix depolarize(const PureState& psi, double fs) {
  if (!(fs >= 0.5 && fs <= 1.0)) throw InvalidInput("signal fidelity must lie in [0.5, 1]");
  const Matrix2 p = psi.projector();
  const double w = 2.0 * fs - 1.0;
  const double mix = 1.0 - fs;
  Matrix2 out{w * p.m00.real() + mix, w * p.m01, 0.0, w * p.m11.real() + mix};
  out.m10 = std::conj(out.m01);
  return {out, DensityMatrix::Unchecked{}};
}

// ---------------------------------------------------------------------------
// Wave plates

ChannelUnitary quarter_wave(double theta) { return {plate(reduce_angle(theta), kI), ChannelUnitary::Unchecked{}}; }

ChannelUnitary half_wave(double theta) { return {plate(reduce_angle(theta), -1.0), ChannelUnitary::Unchecked{}}; }

Matrix2 compensation_matrix(double t1, double t2, double t3) {
  return plate(t3, kI) * plate(t2, -1.0) * plate(t1, kI);
}

ChannelUnitary compensation_unitary(const WavePlateAngles& angles) {
  return quarter_wave(angles.theta3) * half_wave(angles.theta2) * quarter_wave(angles.theta1);
}

ChannelUnitary haar_random_unitary(Rng& rng) {
  // Uniform point on S^3 in Hopf coordinates: |U_00|^2 is uniform on [0, 1]
  // and both phases are uniform. The global U(1) factor is dropped.
  const double u = uniform01(rng);
  const double phi1 = 2.0 * kPi * uniform01(rng);
  const double phi2 = 2.0 * kPi * uniform01(rng);
  const double a = std::sqrt(u);
  const double b = std::sqrt(1.0 - u);
  const Complex alpha = std::polar(a, phi1);
  const Complex beta = std::polar(b, phi2);
  return {Matrix2{alpha, -std::conj(beta), beta, std::conj(alpha)}, ChannelUnitary::Unchecked{}};
}

double qber_from_fidelities(std::span<const double, 4> f) {
  for (double x : f) {
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidInput("fidelities must lie in [0, 1]");
  }
  return 1.0 - (f[0] + f[1] + f[2] + f[3]) / 4.0;
}

double trace_norm_half(const Matrix2& m) {
  const auto ev = hermitian_eigenvalues(m);
  return 0.5 * (std::abs(ev[0]) + std::abs(ev[1]));
}

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  return trace_norm_half(a.matrix() - b.matrix());
}

double operator_fidelity(const ChannelUnitary& a, const ChannelUnitary& b) {
  return std::norm((a.matrix().adjoint() * b.matrix()).trace()) / 4.0;
}

}  // namespace polalign
