#pragma once

// Independent reference implementations used only by the tests. None of them call the
// library routine they are checking.

#include "mmos/data_model.hpp"
#include "mmos/random.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace oracle {

using mmos::Matrix;

inline double cosine(const double* u, const double* v, std::ptrdiff_t d) {
  double dot = 0, uu = 0, vv = 0;
  for (std::ptrdiff_t i = 0; i < d; ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0 && vv == 0) return 0.0;
  if (uu == 0 || vv == 0) return 1.0;
  double c = 1.0 - dot / std::sqrt(uu * vv);
  return c < 0 ? 0 : (c > 2 ? 2 : c);
}

inline double sqeuclid(const double* u, const double* v, std::ptrdiff_t d) {
  double s = 0;
  for (std::ptrdiff_t i = 0; i < d; ++i) s += (u[i] - v[i]) * (u[i] - v[i]);
  return s;
}

/// Enumerates every monotonic path from (0,0) to (n-1,m-1) with steps (1,0), (0,1), (1,1).
/// Returns the minimal cost, and among minimal-cost paths the fewest cells; normalised
/// divides by that cell count.
inline double dtw_brute_force(const Matrix& a, const Matrix& b, bool use_cosine, bool normalise) {
  const std::ptrdiff_t n = a.rows(), m = b.rows(), d = a.cols();
  double best_cost = std::numeric_limits<double>::infinity();
  long best_len = 0;
  std::function<void(std::ptrdiff_t, std::ptrdiff_t, double, long)> walk = [&](std::ptrdiff_t i, std::ptrdiff_t j,
                                                                                 double cost, long len) {
    const double local = use_cosine ? cosine(&a(i, 0), &b(j, 0), d) : sqeuclid(&a(i, 0), &b(j, 0), d);
    cost += local;
    ++len;
    if (i == n - 1 && j == m - 1) {
      if (cost < best_cost || (cost == best_cost && len < best_len)) {
        best_cost = cost;
        best_len = len;
      }
      return;
    }
    if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, cost, len);
    if (i + 1 < n) walk(i + 1, j, cost, len);
    if (j + 1 < m) walk(i, j + 1, cost, len);
  };
  walk(0, 0, 0.0, 0);
  return normalise ? best_cost / static_cast<double>(best_len) : best_cost;
}

/// Centre pad/crop written from the rule: before = floor(diff / 2), remainder after.
inline Matrix centre_pad(const Matrix& frames, std::ptrdiff_t target) {
  Matrix out = Matrix::Zero(target, frames.cols());
  const std::ptrdiff_t n = frames.rows();
  if (n <= target) {
    const std::ptrdiff_t before = (target - n) / 2;
    for (std::ptrdiff_t t = 0; t < n; ++t) out.row(before + t) = frames.row(t);
  } else {
    const std::ptrdiff_t before = (n - target) / 2;
    for (std::ptrdiff_t t = 0; t < target; ++t) out.row(t) = frames.row(before + t);
  }
  return out;
}

/// Filter-then-argmin, else argmax, over a plain distance row.
inline std::size_t semi_hard(const std::vector<double>& dist_from_anchor, const std::vector<int>& labels,
                             std::size_t anchor, std::size_t positive) {
  const double d_ap = dist_from_anchor[positive];
  std::vector<std::size_t> negatives;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] != labels[anchor]) negatives.push_back(n);
  }
  std::vector<std::size_t> harder;
  for (std::size_t n : negatives) {
    if (dist_from_anchor[n] > d_ap) harder.push_back(n);
  }
  if (!harder.empty()) {
    std::size_t best = harder[0];
    for (std::size_t n : harder) {
      if (dist_from_anchor[n] < dist_from_anchor[best]) best = n;
    }
    return best;
  }
  std::size_t best = negatives.at(0);
  for (std::size_t n : negatives) {
    if (dist_from_anchor[n] > dist_from_anchor[best]) best = n;
  }
  return best;
}

/// Central finite differences of `f` at `x` (in place, restored afterwards).
inline std::vector<double> finite_differences(std::vector<double*> coords, const std::function<double()>& f,
                                              double step = 1e-5) {
  std::vector<double> out;
  out.reserve(coords.size());
  for (double* c : coords) {
    const double saved = *c;
    *c = saved + step;
    const double up = f();
    *c = saved - step;
    const double down = f();
    *c = saved;
    out.push_back((up - down) / (2 * step));
  }
  return out;
}

inline double relative_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-7});
  return std::abs(a - b) / scale;
}

inline Matrix random_matrix(std::ptrdiff_t rows, std::ptrdiff_t cols, mmos::Rng& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (std::ptrdiff_t k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

}  // namespace oracle
