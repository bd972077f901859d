#include "mmos/metric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mmos {

namespace {

void check_dims(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw InvalidInput(std::string(op) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                       std::to_string(b) + ")");
  }
}

}  // namespace

double cosine_distance(std::span<const double> u, std::span<const double> v, CosineDiagnostics* diagnostics) {
  check_dims(u.size(), v.size(), "cosine_distance");
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) {
    if (diagnostics != nullptr) ++diagnostics->zero_vector_cases;
    return (uu == 0.0 && vv == 0.0) ? 0.0 : 1.0;
  }
  return std::clamp(1.0 - dot / (std::sqrt(uu) * std::sqrt(vv)), 0.0, 2.0);
}

double squared_euclidean(std::span<const double> u, std::span<const double> v) {
  check_dims(u.size(), v.size(), "squared_euclidean");
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double diff = u[i] - v[i];
    sum += diff * diff;
  }
  return sum;
}

DistanceMatrix cross_squared_euclidean(const Matrix& rows, const Matrix& cols) {
  check_dims(static_cast<std::size_t>(rows.cols()), static_cast<std::size_t>(cols.cols()),
             "cross_squared_euclidean");
  const Vector row_norms = rows.rowwise().squaredNorm();
  const Vector col_norms = cols.rowwise().squaredNorm();
  DistanceMatrix out;
  out.values = -2.0 * rows * cols.transpose();
  out.values.colwise() += row_norms;
  out.values.rowwise() += col_norms.transpose();
  out.values = out.values.cwiseMax(0.0);
  out.row_ids.resize(static_cast<std::size_t>(rows.rows()));
  out.col_ids.resize(static_cast<std::size_t>(cols.rows()));
  for (std::size_t i = 0; i < out.row_ids.size(); ++i) out.row_ids[i] = i;
  for (std::size_t j = 0; j < out.col_ids.size(); ++j) out.col_ids[j] = j;
  return out;
}

DistanceMatrix pairwise_squared_euclidean(const Matrix& batch) {
  DistanceMatrix out = cross_squared_euclidean(batch, batch);
  // The two triangles come from different accumulation orders; average them so the
  // matrix is exactly symmetric.
  out.values = (0.5 * (out.values + out.values.transpose())).eval();
  out.values.diagonal().setZero();
  return out;
}

}  // namespace mmos
