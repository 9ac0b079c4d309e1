#pragma once

#include <array>
#include <complex>
#include <span>
#include <string>
#include <string_view>

#include "polalign/random.hpp"

namespace polalign {

using Complex = std::complex<double>;

/// Tolerance for state and unitary invariant checks.
inline constexpr double kInvariantTol = 1e-12;

/// Plain 2x2 complex matrix, row-major.
struct Matrix2 {
  Complex m00{}, m01{}, m10{}, m11{};

  static constexpr Matrix2 identity() { return {1.0, 0.0, 0.0, 1.0}; }

  Matrix2 adjoint() const { return {std::conj(m00), std::conj(m10), std::conj(m01), std::conj(m11)}; }
  Complex trace() const { return m00 + m11; }
  Complex det() const { return m00 * m11 - m01 * m10; }

  friend Matrix2 operator*(const Matrix2& a, const Matrix2& b) {
    return {a.m00 * b.m00 + a.m01 * b.m10, a.m00 * b.m01 + a.m01 * b.m11,
            a.m10 * b.m00 + a.m11 * b.m10, a.m10 * b.m01 + a.m11 * b.m11};
  }
  friend Matrix2 operator+(const Matrix2& a, const Matrix2& b) {
    return {a.m00 + b.m00, a.m01 + b.m01, a.m10 + b.m10, a.m11 + b.m11};
  }
  friend Matrix2 operator-(const Matrix2& a, const Matrix2& b) {
    return {a.m00 - b.m00, a.m01 - b.m01, a.m10 - b.m10, a.m11 - b.m11};
  }
  friend Matrix2 operator*(Complex s, const Matrix2& a) { return {s * a.m00, s * a.m01, s * a.m10, s * a.m11}; }
  friend bool operator==(const Matrix2&, const Matrix2&) = default;
};

/// Largest entrywise modulus of a - b.
double max_abs_diff(const Matrix2& a, const Matrix2& b);

/// The six tomography eigenstates. H/V span Z, D/A span X, R/L span Y.
enum class Label { H, V, D, A, R, L };

inline constexpr std::array<Label, 4> kBB84Labels{Label::H, Label::V, Label::D, Label::A};
inline constexpr std::array<Label, 6> kSixLabels{Label::H, Label::V, Label::D, Label::A, Label::R, Label::L};

char label_char(Label l);
/// Throws InvalidInput on anything but one of "HVDARL".
Label parse_label(std::string_view s);

/// Unit-norm Jones vector in the {|H>, |V>} basis.
class PureState {
 public:
  /// Throws InvalidInput when |h|^2 + |v|^2 deviates from 1 by more than 1e-12.
  PureState(Complex h, Complex v);
  /// Scales any nonzero vector to unit norm.
  static PureState normalized(Complex h, Complex v);

  Complex h() const { return h_; }
  Complex v() const { return v_; }

  /// Projector |psi><psi| as a raw matrix.
  Matrix2 projector() const;
  /// Poincare/Bloch vector (<X>, <Y>, <Z>).
  std::array<double, 3> bloch() const;

 private:
  struct Unchecked {};
  PureState(Complex h, Complex v, Unchecked) : h_(h), v_(v) {}
  friend class ChannelUnitary;

  Complex h_, v_;
};

/// Hermitian, positive semidefinite, trace-one 2x2 matrix.
class DensityMatrix {
 public:
  /// Validates every invariant; throws InvalidInput on violation.
  explicit DensityMatrix(const Matrix2& m);

  static DensityMatrix projector(const PureState& psi);
  static DensityMatrix maximally_mixed();
  /// (I + s.sigma)/2 for |s| <= 1.
  static DensityMatrix from_bloch(const std::array<double, 3>& s);

  const Matrix2& matrix() const { return m_; }
  std::array<double, 3> bloch() const;
  /// Eigenvalues in ascending order.
  std::array<double, 2> eigenvalues() const;
  double purity() const;

 private:
  struct Unchecked {};
  DensityMatrix(const Matrix2& m, Unchecked) : m_(m) {}
  friend class ChannelUnitary;
  friend DensityMatrix depolarize(const PureState&, double);
  friend DensityMatrix make_density_unchecked(const Matrix2&);

  Matrix2 m_;
};

/// Builds a density matrix from a matrix the caller already guarantees to be
/// physical (internal fast path for iterative estimators).
DensityMatrix make_density_unchecked(const Matrix2& m);

/// A 2x2 unitary acting on polarization qubits.
class ChannelUnitary {
 public:
  /// Validates U^dagger U = I within 1e-12.
  explicit ChannelUnitary(const Matrix2& m);
  static ChannelUnitary identity() { return ChannelUnitary(Matrix2::identity(), Unchecked{}); }

  const Matrix2& matrix() const { return m_; }
  ChannelUnitary adjoint() const { return {m_.adjoint(), Unchecked{}}; }

  PureState apply(const PureState& psi) const;
  DensityMatrix conjugate(const DensityMatrix& rho) const;

  friend ChannelUnitary operator*(const ChannelUnitary& a, const ChannelUnitary& b) {
    return {a.m_ * b.m_, Unchecked{}};
  }

 private:
  struct Unchecked {};
  ChannelUnitary(const Matrix2& m, Unchecked) : m_(m) {}
  friend ChannelUnitary quarter_wave(double);
  friend ChannelUnitary half_wave(double);
  friend ChannelUnitary haar_random_unitary(Rng&);

  Matrix2 m_;
};

/// Reduces a physical plate rotation to [0, pi).
double reduce_angle(double theta);

/// Orientation of the quarter-, half-, quarter-wave plate stack, radians.
struct WavePlateAngles {
  double theta1 = 0.0, theta2 = 0.0, theta3 = 0.0;

  WavePlateAngles() = default;
  /// Throws InvalidInput on non-finite input; stores reduced angles.
  WavePlateAngles(double t1, double t2, double t3);

  std::array<double, 3> as_array() const { return {theta1, theta2, theta3}; }
  friend bool operator==(const WavePlateAngles&, const WavePlateAngles&) = default;
};

/// Signed shortest difference a - b modulo pi, in [-pi/2, pi/2).
double wrapped_difference(double a, double b);
/// Sum of |wrapped_difference| over the three plates.
double total_travel(const WavePlateAngles& to, const WavePlateAngles& from);

PureState canonical_state(Label label);
PureState canonical_state(std::string_view label);
std::array<PureState, 4> bb84_states();

/// |<phi|psi>|^2.
double fidelity_pure(const PureState& phi, const PureState& psi);
/// <phi|rho|phi>.
double fidelity_mixed(const PureState& phi, const DensityMatrix& rho);
/// Fidelity of a pure reference against a raw Hermitian matrix.
double expectation(const PureState& phi, const Matrix2& m);

/// (2 fs - 1)|psi><psi| + (1 - fs) I, fs in [0.5, 1].
DensityMatrix depolarize(const PureState& psi, double fs);

/// Plate with fast axis at theta: R(theta) diag(1, e^{i delta}) R(-theta).
ChannelUnitary quarter_wave(double theta);
ChannelUnitary half_wave(double theta);
/// Q(theta3) H(theta2) Q(theta1); the first quarter-wave plate acts first.
ChannelUnitary compensation_unitary(const WavePlateAngles& angles);
/// Same product without constructing the validated wrapper.
Matrix2 compensation_matrix(double t1, double t2, double t3);

/// Haar-distributed draw from U(2) (up to a global phase).
ChannelUnitary haar_random_unitary(Rng& rng);

/// E = 1 - mean(f) over the four BB84 fidelities.
double qber_from_fidelities(std::span<const double, 4> f);

double trace_distance(const DensityMatrix& a, const DensityMatrix& b);
/// Half the trace norm of a Hermitian matrix.
double trace_norm_half(const Matrix2& hermitian);
/// |tr(A^dagger B)|^2 / 4; one exactly when A and B agree up to phase.
double operator_fidelity(const ChannelUnitary& a, const ChannelUnitary& b);

/// Eigenvalues (ascending) of a Hermitian 2x2 matrix.
std::array<double, 2> hermitian_eigenvalues(const Matrix2& m);

}  // namespace polalign
