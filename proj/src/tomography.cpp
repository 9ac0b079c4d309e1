#include "polalign/tomography.hpp"

#include <cmath>
#include <numeric>

#include "polalign/errors.hpp"

namespace polalign {

namespace {

constexpr double kClipFloor = 1e-6;

struct Projectors {
  std::array<Matrix2, 6> p;
  Projectors() {
    for (std::size_t i = 0; i < 6; ++i) p[i] = canonical_state(kSixLabels[i]).projector();
  }
};

const Projectors& projectors() {
  static const Projectors instance;
  return instance;
}

std::array<double, 6> outcome_weights(const BasisWeights& w) { return {w.z, w.z, w.x, w.x, w.y, w.y}; }

// <phi_m|rho|phi_m> for the six fixed eigenstates, written out by hand.
std::array<double, 6> overlaps(const Matrix2& rho) {
  const double a = rho.m00.real();
  const double d = rho.m11.real();
  const double re = rho.m10.real();
  const double im = rho.m10.imag();
  const double mid = 0.5 * (a + d);
  return {a, d, mid + re, mid - re, mid + im, mid - im};
}

Matrix2 normalize_trace(const Matrix2& m) {
  const double tr = m.m00.real() + m.m11.real();
  Matrix2 out{m.m00.real() / tr, m.m01 / tr, 0.0, m.m11.real() / tr};
  out.m10 = std::conj(out.m01);
  return out;
}

OutcomeCounts row_counts(const CountMatrix& cm, std::size_t row) {
  OutcomeCounts c{};
  for (std::size_t j = 0; j < 6; ++j) c[j] = cm.at(row, j);
  return c;
}

OutcomeCounts col_counts(const CountMatrix& cm, std::size_t col) {
  OutcomeCounts c{};
  for (std::size_t i = 0; i < 6; ++i) c[i] = cm.at(i, col);
  return c;
}

// Linear inversion that leaves the Stokes component of an empty basis pair
// at zero; the likelihood carries no information along that axis.
Matrix2 stokes_initializer(const OutcomeCounts& n) {
  std::array<double, 3> s{};
  for (int b = 0; b < 3; ++b) {
    const double pair = n[2 * b] + n[2 * b + 1];
    s[b] = pair > 0.0 ? (n[2 * b] - n[2 * b + 1]) / pair : 0.0;
  }
  return {0.5 * (1.0 + s[0]), 0.5 * Complex{s[1], -s[2]}, 0.5 * Complex{s[1], s[2]}, 0.5 * (1.0 - s[0])};
}

constexpr const char* kBasisNames[] = {"Z", "X", "Y"};

}  // namespace

std::string_view direction_name(Direction d) { return d == Direction::Forward ? "forward" : "reversed"; }

Direction parse_direction(std::string_view s) {
  if (s == "forward") return Direction::Forward;
  if (s == "reversed") return Direction::Reversed;
  throw InvalidInput("unknown direction '" + std::string(s) + "' (expected forward or reversed)");
}

// ---------------------------------------------------------------------------
// CountMatrix

CountMatrix::CountMatrix(Direction direction) : direction_(direction), entries_(24, 0.0) {}

CountMatrix::CountMatrix(Direction direction, std::vector<double> entries)
    : direction_(direction), entries_(std::move(entries)) {
  if (entries_.size() != 24) throw InvalidInput("count matrix needs 24 entries");
  for (double v : entries_) {
    if (!std::isfinite(v) || v < 0.0) throw InvalidInput("counts must be finite and nonnegative");
  }
}

std::span<const Label> CountMatrix::row_labels() const {
  if (direction_ == Direction::Forward) return kBB84Labels;
  return kSixLabels;
}

std::span<const Label> CountMatrix::col_labels() const {
  if (direction_ == Direction::Forward) return kSixLabels;
  return kBB84Labels;
}

void CountMatrix::set(std::size_t row, std::size_t col, double value) {
  if (!std::isfinite(value) || value < 0.0) throw InvalidInput("counts must be finite and nonnegative");
  entries_.at(row * cols() + col) = value;
}

double CountMatrix::row_total(std::size_t row) const {
  double t = 0.0;
  for (std::size_t j = 0; j < cols(); ++j) t += at(row, j);
  return t;
}

double CountMatrix::col_total(std::size_t col) const {
  double t = 0.0;
  for (std::size_t i = 0; i < rows(); ++i) t += at(i, col);
  return t;
}

double CountMatrix::total() const { return std::accumulate(entries_.begin(), entries_.end(), 0.0); }

// ---------------------------------------------------------------------------
// Estimators

void BasisWeights::validate() const {
  if (!(z > 0.0 && x > 0.0 && y > 0.0)) throw InvalidInput("basis weights must be strictly positive");
  if (std::abs(z + x + y - 1.0) > 1e-9) throw InvalidInput("basis weights must sum to one");
}

Matrix2 linear_inversion(const OutcomeCounts& n) {
  std::array<double, 3> s{};  // z, x, y
  for (int b = 0; b < 3; ++b) {
    const double plus = n[2 * b];
    const double minus = n[2 * b + 1];
    if (!(plus + minus > 0.0)) {
      throw InsufficientData(std::string("no counts in the ") + kBasisNames[b] + " basis", kBasisNames[b]);
    }
    s[b] = (plus - minus) / (plus + minus);
  }
  const double z = s[0], x = s[1], y = s[2];
  return {0.5 * (1.0 + z), 0.5 * Complex{x, -y}, 0.5 * Complex{x, y}, 0.5 * (1.0 - z)};
}

DensityMatrix psd_projected(const Matrix2& m) {
  const double z = m.m00.real() - m.m11.real();
  const double x = 2.0 * m.m10.real();
  const double y = 2.0 * m.m10.imag();
  const double r = std::sqrt(x * x + y * y + z * z);
  const double lo = 0.5 * (1.0 - r);
  if (lo >= kClipFloor) return DensityMatrix(normalize_trace(m));
  // Eigenvalues become (1 + r)/2 and the floor; the Bloch direction is kept.
  const double hi = 0.5 * (1.0 + r);
  const double scale = (hi - kClipFloor) / (hi + kClipFloor) / r;
  return DensityMatrix::from_bloch({x * scale, y * scale, z * scale});
}

double log_likelihood(const OutcomeCounts& n, const BasisWeights& w, const Matrix2& rho) {
  const auto ov = overlaps(rho);
  const auto wm = outcome_weights(w);
  double ll = 0.0;
  for (std::size_t m = 0; m < 6; ++m) {
    if (n[m] > 0.0) ll += n[m] * std::log(wm[m] * ov[m]);
  }
  return ll;
}

MleReport mle_reconstruct_report(const OutcomeCounts& n, const BasisWeights& w, const MleOptions& opt) {
  w.validate();
  const double total = std::accumulate(n.begin(), n.end(), 0.0);
  if (total < 6.0) throw InsufficientData("fewer than 6 counts available for tomography");

  const auto& proj = projectors().p;

  Matrix2 rho = psd_projected(stokes_initializer(n)).matrix();
  double ll = log_likelihood(n, w, rho);
  double eps = opt.dilution;

  MleReport report{make_density_unchecked(rho), ll, 0, {}};
  if (opt.keep_history) report.history.push_back(ll);

  double delta = 0.0;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const auto ov = overlaps(rho);
    Matrix2 r{};
    for (std::size_t m = 0; m < 6; ++m) {
      if (n[m] > 0.0) r = r + Complex{n[m] / (total * ov[m])} * proj[m];
    }

    // A step that lowers the likelihood is retried with a smaller dilution.
    Matrix2 next;
    double next_ll;
    for (;;) {
      const Matrix2 step = Matrix2::identity() + Complex{eps} * r;
      next = normalize_trace(step * rho * step);
      next_ll = log_likelihood(n, w, next);
      if (next_ll >= ll || eps < 1e-8) break;
      eps *= 0.5;
    }
    delta = next_ll - ll;
    if (delta < 0.0) {
      // No improving step exists at this resolution: we are at the optimum.
      report.iterations = it;
      return report;
    }
    rho = next;
    ll = next_ll;
    report.state = make_density_unchecked(rho);
    report.log_likelihood = ll;
    report.iterations = it;
    if (opt.keep_history) report.history.push_back(ll);
    if (delta < opt.tolerance * total) return report;
  }
  throw ConvergenceError("likelihood iteration did not converge within " + std::to_string(opt.max_iterations) +
                             " iterations",
                         report.state, delta);
}

DensityMatrix mle_reconstruct(const OutcomeCounts& n, const BasisWeights& w, const MleOptions& opt) {
  return mle_reconstruct_report(n, w, opt).state;
}

ReconstructionSet reconstruct_forward(const CountMatrix& cm, const BasisWeights& w, const MleOptions& opt) {
  if (cm.direction() != Direction::Forward) throw InvalidInput("reconstruct_forward needs a forward count matrix");
  for (std::size_t b = 0; b < 3; ++b) {
    if (!(cm.col_total(2 * b) + cm.col_total(2 * b + 1) > 0.0)) {
      throw InsufficientData(std::string("no outcomes recorded in the ") + kBasisNames[b] + " basis", kBasisNames[b]);
    }
  }
  std::array<DensityMatrix, 4> states{DensityMatrix::maximally_mixed(), DensityMatrix::maximally_mixed(),
                                      DensityMatrix::maximally_mixed(), DensityMatrix::maximally_mixed()};
  for (std::size_t row = 0; row < 4; ++row) {
    const std::string name(1, label_char(kBB84Labels[row]));
    try {
      states[row] = mle_reconstruct(row_counts(cm, row), w, opt);
    } catch (const InsufficientData& e) {
      throw InsufficientData("input row " + name + ": " + e.what(), e.where().empty() ? name : e.where());
    }
  }
  return {Direction::Forward, states};
}

ReconstructionSet reconstruct_reversed(const CountMatrix& cm, const BasisWeights& w, const MleOptions& opt) {
  if (cm.direction() != Direction::Reversed) throw InvalidInput("reconstruct_reversed needs a reversed count matrix");
  for (std::size_t b = 0; b < 3; ++b) {
    if (!(cm.row_total(2 * b) + cm.row_total(2 * b + 1) > 0.0)) {
      throw InsufficientData(std::string("no inputs prepared in the ") + kBasisNames[b] + " basis", kBasisNames[b]);
    }
  }
  std::array<DensityMatrix, 4> states{DensityMatrix::maximally_mixed(), DensityMatrix::maximally_mixed(),
                                      DensityMatrix::maximally_mixed(), DensityMatrix::maximally_mixed()};
  for (std::size_t col = 0; col < 4; ++col) {
    const std::string name(1, label_char(kBB84Labels[col]));
    if (!(cm.col_total(col) > 0.0)) {
      throw InsufficientData("outcome column " + name + " has no counts", name);
    }
    try {
      states[col] = mle_reconstruct(col_counts(cm, col), w, opt);
    } catch (const InsufficientData& e) {
      throw InsufficientData("outcome column " + name + ": " + e.what(), e.where().empty() ? name : e.where());
    }
  }
  return {Direction::Reversed, states};
}

ReconstructionSet reconstruct(const CountMatrix& cm, const BasisWeights& w, const MleOptions& opt) {
  return cm.direction() == Direction::Forward ? reconstruct_forward(cm, w, opt) : reconstruct_reversed(cm, w, opt);
}

}  // namespace polalign
