#include "mmos/dtw.hpp"

#include "mmos/error.hpp"

#include <limits>
#include <string>
#include <vector>

namespace mmos {

double local_frame_distance(std::span<const double> u, std::span<const double> v, LocalDistance kind,
                            CosineDiagnostics* diagnostics) {
  switch (kind) {
    case LocalDistance::cosine:
      return cosine_distance(u, v, diagnostics);
    case LocalDistance::squared_euclidean:
      return squared_euclidean(u, v);
  }
  throw InvalidInput("local_frame_distance: unknown distance kind");
}

namespace {

struct Cell {
  double cost = std::numeric_limits<double>::infinity();
  long length = 0;
};

bool better(const Cell& lhs, const Cell& rhs) {
  return lhs.cost < rhs.cost || (lhs.cost == rhs.cost && lhs.length < rhs.length);
}

}  // namespace

double dtw_distance(const FeatureSequence& a, const FeatureSequence& b, const DtwConfig& cfg,
                    CosineDiagnostics* diagnostics) {
  if (a.frame_count() < 1 || b.frame_count() < 1) throw InvalidInput("dtw_distance: empty sequence");
  if (a.dim() != b.dim()) {
    throw InvalidInput("dtw_distance: frame dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                       std::to_string(b.dim()) + ")");
  }
  if (a.dim() < 1) throw InvalidInput("dtw_distance: zero-dimension frames");

  const auto rows = static_cast<std::size_t>(a.frame_count());
  const auto cols = static_cast<std::size_t>(b.frame_count());
  // Two rolling rows of the (rows x cols) table.
  std::vector<Cell> previous(cols);
  std::vector<Cell> current(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto u = row_span(a.frames, static_cast<std::ptrdiff_t>(i));
    for (std::size_t j = 0; j < cols; ++j) {
      const double local =
          local_frame_distance(u, row_span(b.frames, static_cast<std::ptrdiff_t>(j)), cfg.local_distance, diagnostics);
      Cell best;
      if (i == 0 && j == 0) {
        best = {0.0, 0};
      } else {
        if (i > 0 && j > 0) best = previous[j - 1];
        if (i > 0 && better(previous[j], best)) best = previous[j];
        if (j > 0 && better(current[j - 1], best)) best = current[j - 1];
      }
      current[j] = {best.cost + local, best.length + 1};
    }
    std::swap(previous, current);
  }
  const Cell& end = previous[cols - 1];
  return cfg.normalize_by_path_length ? end.cost / static_cast<double>(end.length) : end.cost;
}

}  // namespace mmos
