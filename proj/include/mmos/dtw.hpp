#pragma once

#include "mmos/data_model.hpp"
#include "mmos/metric.hpp"

#include <span>

namespace mmos {

enum class LocalDistance { cosine, squared_euclidean };

struct DtwConfig {
  LocalDistance local_distance = LocalDistance::cosine;
  bool normalize_by_path_length = true;
};

double local_frame_distance(std::span<const double> u, std::span<const double> v, LocalDistance kind,
                            CosineDiagnostics* diagnostics = nullptr);

/// Minimum accumulated local cost over monotonic alignments of `a` and `b` using the steps
/// (1,0), (0,1), (1,1) with unit weights.
///
/// With `normalize_by_path_length` the cost is divided by the number of cells on the optimal
/// path; among equal-cost paths the shortest one is taken.
double dtw_distance(const FeatureSequence& a, const FeatureSequence& b, const DtwConfig& cfg = {},
                    CosineDiagnostics* diagnostics = nullptr);

}  // namespace mmos
