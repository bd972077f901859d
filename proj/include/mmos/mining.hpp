#pragma once

#include "mmos/data_model.hpp"
#include "mmos/metric.hpp"
#include "mmos/random.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mmos {

enum class MiningStrategy { online_semi_hard, offline_batch };

struct TripletLossConfig {
  double margin = 0.5;
  MiningStrategy strategy = MiningStrategy::online_semi_hard;
  /// Offline only: use every (anchor, positive, negative) combination instead of one sampled
  /// negative per anchor-positive pair.
  bool exhaustive_offline = false;
};

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// p classes x k items, in class-major order.
struct BalancedBatch {
  std::vector<std::size_t> items;  // indices into the source dataset
  std::vector<int> class_ids;      // class of each item, aligned with `items`
  int p = 0;
  int k = 0;
};

/// pk (pk - k) (k - 1): ordered anchor-positive pairs times negatives. Throws for p < 1 or k < 2.
std::uint64_t count_valid_triplets(int p, int k);

/// max(0, m + d_ap - d_an).
double triplet_hinge_loss(double d_ap, double d_an, double margin);

/// Semi-hard negative for the (anchor, positive) pair: among items of another class with
/// D(a, n) > D(a, p), the one with the smallest D(a, n); if there is none, the one with the
/// largest D(a, n). Ties go to the lowest index.
std::size_t select_semi_hard_negative(std::size_t anchor, std::size_t positive, const DistanceMatrix& distances,
                                      std::span<const int> class_ids);

struct TripletBatchLoss {
  double loss = 0.0;
  Matrix gradient;  // d loss / d embeddings, same shape as the embeddings
  std::size_t triplets = 0;
  std::size_t active_triplets = 0;
};

/// Mean hinge loss over every ordered anchor-positive pair of a balanced batch, each paired
/// with its semi-hard negative under squared Euclidean distance.
TripletBatchLoss online_batch_loss(const Matrix& embeddings, std::span<const int> class_ids, double margin);

/// Mean hinge loss over an explicit triplet list (the three-tower formulation: every
/// embedding receives the gradient of each role it plays).
TripletBatchLoss triplet_list_loss(const Matrix& embeddings, std::span<const Triplet> triplets, double margin);

/// Offline triplets for a balanced batch: every ordered anchor-positive pair with one negative
/// drawn uniformly from the other classes (or all negatives when `exhaustive`). Uses no
/// distance information.
std::vector<Triplet> generate_offline_triplets(std::span<const int> class_ids, std::uint64_t seed,
                                               bool exhaustive = false);

/// Samples p classes without replacement, then k items of each without replacement.
BalancedBatch sample_balanced_batch(std::span<const int> labels, int p, int k, Rng& rng);
BalancedBatch sample_balanced_batch(std::span<const int> labels, int p, int k, std::uint64_t seed);

}  // namespace mmos
