#pragma once

#include <algorithm>
#include <array>
#include <cstddef>

namespace polalign {

template <std::size_t Dim>
struct SimplexResult {
  std::array<double, Dim> x{};
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead downhill simplex with the standard coefficients
/// (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
///
/// The initial simplex is `start` plus one vertex displaced by `edge` along
/// each axis. Converged means the spread between the best and worst vertex
/// values fell below `tolerance` before `max_evaluations` were spent.
template <std::size_t Dim, class F>
SimplexResult<Dim> nelder_mead(F&& f, const std::array<double, Dim>& start, double edge, double tolerance,
                               int max_evaluations) {
  using Point = std::array<double, Dim>;
  constexpr std::size_t N = Dim + 1;

  std::array<Point, N> pts{};
  std::array<double, N> val{};
  int evals = 0;
  auto eval = [&](const Point& p) {
    ++evals;
    return f(p);
  };

  pts[0] = start;
  val[0] = eval(start);
  for (std::size_t i = 0; i < Dim; ++i) {
    pts[i + 1] = start;
    pts[i + 1][i] += edge;
    val[i + 1] = eval(pts[i + 1]);
  }

  std::array<std::size_t, N> order{};
  auto sort = [&] {
    for (std::size_t i = 0; i < N; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return val[a] < val[b]; });
  };
  auto along = [](const Point& from, const Point& to, double t) {
    Point p{};
    for (std::size_t k = 0; k < Dim; ++k) p[k] = from[k] + t * (to[k] - from[k]);
    return p;
  };

  bool converged = false;
  sort();
  while (true) {
    const std::size_t best = order[0];
    const std::size_t worst = order[Dim];
    const std::size_t second = order[Dim - 1];
    if (val[worst] - val[best] < tolerance) {
      converged = true;
      break;
    }
    if (evals >= max_evaluations) break;

    Point centroid{};
    for (std::size_t i = 0; i < Dim; ++i) {
      for (std::size_t k = 0; k < Dim; ++k) centroid[k] += pts[order[i]][k];
    }
    for (auto& c : centroid) c /= static_cast<double>(Dim);

    const Point refl = along(centroid, pts[worst], -1.0);
    const double f_refl = eval(refl);
    if (f_refl < val[best]) {
      const Point exp = along(centroid, pts[worst], -2.0);
      const double f_exp = eval(exp);
      if (f_exp < f_refl) {
        pts[worst] = exp;
        val[worst] = f_exp;
      } else {
        pts[worst] = refl;
        val[worst] = f_refl;
      }
    } else if (f_refl < val[second]) {
      pts[worst] = refl;
      val[worst] = f_refl;
    } else {
      const bool outside = f_refl < val[worst];
      const Point con = outside ? along(centroid, refl, 0.5) : along(centroid, pts[worst], 0.5);
      const double f_con = eval(con);
      if (f_con < (outside ? f_refl : val[worst])) {
        pts[worst] = con;
        val[worst] = f_con;
      } else {
        for (std::size_t i = 1; i < N; ++i) {
          const std::size_t j = order[i];
          pts[j] = along(pts[best], pts[j], 0.5);
          val[j] = eval(pts[j]);
        }
      }
    }
    sort();
  }

  return {pts[order[0]], val[order[0]], evals, converged};
}

}  // namespace polalign
