#pragma once

#include "mmos/data_model.hpp"
#include "mmos/error.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace mmos {

/// Counts cosine evaluations that hit the zero-vector convention.
struct CosineDiagnostics {
  std::uint64_t zero_vector_cases = 0;
};

/// 1 - cos(u, v), clamped to [0, 2]. A zero vector is at distance 1 from any nonzero vector
/// and 0 from another zero vector.
double cosine_distance(std::span<const double> u, std::span<const double> v,
                       CosineDiagnostics* diagnostics = nullptr);

double squared_euclidean(std::span<const double> u, std::span<const double> v);

inline std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline std::span<const double> row_span(const Matrix& m, std::ptrdiff_t row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

struct DistanceMatrix {
  Matrix values;
  std::vector<std::size_t> row_ids;
  std::vector<std::size_t> col_ids;
};

/// All-pairs squared Euclidean distances between the rows of `batch`, via
/// |a|^2 + |b|^2 - 2 a.b. Negative round-off is clamped to 0 and the diagonal is exactly 0.
DistanceMatrix pairwise_squared_euclidean(const Matrix& batch);

/// Cross distances between the rows of `rows` and the rows of `cols`, same expansion.
DistanceMatrix cross_squared_euclidean(const Matrix& rows, const Matrix& cols);

/// Index of the smallest `distance(i)` for i in [0, count); ties go to the lowest index.
template <class DistanceFn>
std::size_t argmin_index(std::size_t count, DistanceFn&& distance) {
  if (count == 0) throw InvalidInput("nearest_neighbor: empty candidate list");
  std::size_t best = 0;
  double best_distance = distance(std::size_t{0});
  for (std::size_t i = 1; i < count; ++i) {
    const double d = distance(i);
    if (d < best_distance) {
      best_distance = d;
      best = i;
    }
  }
  return best;
}

/// Nearest candidate to `query` under `dist(query, candidate)`; ties go to the lowest index.
template <class Query, class Candidate, class Dist>
std::size_t nearest_neighbor(const Query& query, std::span<const Candidate> candidates, Dist&& dist) {
  return argmin_index(candidates.size(), [&](std::size_t i) { return dist(query, candidates[i]); });
}

}  // namespace mmos
