#include "mmos/mining.hpp"

#include "mmos/error.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace mmos {

std::uint64_t count_valid_triplets(int p, int k) {
  if (p < 1) throw InvalidInput("count_valid_triplets: p must be >= 1");
  if (k < 2) throw InvalidInput("count_valid_triplets: k must be >= 2 so that positives exist");
  const auto pk = static_cast<std::uint64_t>(p) * static_cast<std::uint64_t>(k);
  return pk * (pk - static_cast<std::uint64_t>(k)) * static_cast<std::uint64_t>(k - 1);
}

double triplet_hinge_loss(double d_ap, double d_an, double margin) { return std::max(0.0, margin + d_ap - d_an); }

std::size_t select_semi_hard_negative(std::size_t anchor, std::size_t positive, const DistanceMatrix& distances,
                                      std::span<const int> class_ids) {
  const Matrix& d = distances.values;
  if (static_cast<std::size_t>(d.rows()) != class_ids.size() || anchor >= class_ids.size() ||
      positive >= class_ids.size()) {
    throw InvalidInput("select_semi_hard_negative: indices or labels do not match the distance matrix");
  }
  const double d_ap = d(static_cast<std::ptrdiff_t>(anchor), static_cast<std::ptrdiff_t>(positive));
  const int anchor_class = class_ids[anchor];
  constexpr auto none = static_cast<std::size_t>(-1);
  std::size_t semi_hard = none;
  std::size_t farthest = none;
  for (std::size_t n = 0; n < class_ids.size(); ++n) {
    if (class_ids[n] == anchor_class) continue;
    const double d_an = d(static_cast<std::ptrdiff_t>(anchor), static_cast<std::ptrdiff_t>(n));
    if (d_an > d_ap && (semi_hard == none || d_an < d(static_cast<std::ptrdiff_t>(anchor), static_cast<std::ptrdiff_t>(semi_hard)))) {
      semi_hard = n;
    }
    if (farthest == none || d_an > d(static_cast<std::ptrdiff_t>(anchor), static_cast<std::ptrdiff_t>(farthest))) {
      farthest = n;
    }
  }
  if (farthest == none) throw InvalidInput("select_semi_hard_negative: batch has no negative for the anchor");
  return semi_hard != none ? semi_hard : farthest;
}

namespace {

// Verifies p >= 2 classes with the same count k >= 2 each.
void check_balanced(std::span<const int> class_ids) {
  std::map<int, std::size_t> counts;
  for (int c : class_ids) ++counts[c];
  if (counts.size() < 2) throw InvalidInput("triplet batch: need at least 2 classes");
  const std::size_t k = counts.begin()->second;
  if (k < 2) throw InvalidInput("triplet batch: need at least 2 items per class");
  for (const auto& [cls, n] : counts) {
    if (n != k) {
      throw InvalidInput("triplet batch: unbalanced (class " + std::to_string(cls) + " has " + std::to_string(n) +
                         " items, expected " + std::to_string(k) + ")");
    }
  }
}

void accumulate(const Matrix& e, const Triplet& t, double margin, double weight, TripletBatchLoss& out,
                double d_ap, double d_an) {
  const double l = triplet_hinge_loss(d_ap, d_an, margin);
  ++out.triplets;
  if (l <= 0.0) return;
  ++out.active_triplets;
  out.loss += weight * l;
  const auto a = static_cast<std::ptrdiff_t>(t.anchor);
  const auto p = static_cast<std::ptrdiff_t>(t.positive);
  const auto n = static_cast<std::ptrdiff_t>(t.negative);
  // l = m + |f_a - f_p|^2 - |f_a - f_n|^2
  out.gradient.row(a) += weight * 2.0 * (e.row(n) - e.row(p));
  out.gradient.row(p) += weight * 2.0 * (e.row(p) - e.row(a));
  out.gradient.row(n) += weight * 2.0 * (e.row(a) - e.row(n));
}

}  // namespace

TripletBatchLoss online_batch_loss(const Matrix& embeddings, std::span<const int> class_ids, double margin) {
  if (static_cast<std::size_t>(embeddings.rows()) != class_ids.size()) {
    throw InvalidInput("online_batch_loss: embedding rows and labels differ in length");
  }
  if (margin < 0.0) throw InvalidInput("online_batch_loss: margin must be >= 0");
  check_balanced(class_ids);
  const DistanceMatrix distances = pairwise_squared_euclidean(embeddings);
  std::vector<Triplet> triplets;
  for (std::size_t a = 0; a < class_ids.size(); ++a) {
    for (std::size_t p = 0; p < class_ids.size(); ++p) {
      if (p == a || class_ids[p] != class_ids[a]) continue;
      triplets.push_back({a, p, select_semi_hard_negative(a, p, distances, class_ids)});
    }
  }
  TripletBatchLoss out;
  out.gradient = Matrix::Zero(embeddings.rows(), embeddings.cols());
  const double weight = 1.0 / static_cast<double>(triplets.size());
  for (const Triplet& t : triplets) {
    const auto a = static_cast<std::ptrdiff_t>(t.anchor);
    accumulate(embeddings, t, margin, weight, out, distances.values(a, static_cast<std::ptrdiff_t>(t.positive)),
               distances.values(a, static_cast<std::ptrdiff_t>(t.negative)));
  }
  return out;
}

TripletBatchLoss triplet_list_loss(const Matrix& embeddings, std::span<const Triplet> triplets, double margin) {
  if (triplets.empty()) throw InvalidInput("triplet_list_loss: no triplets");
  if (margin < 0.0) throw InvalidInput("triplet_list_loss: margin must be >= 0");
  TripletBatchLoss out;
  out.gradient = Matrix::Zero(embeddings.rows(), embeddings.cols());
  const double weight = 1.0 / static_cast<double>(triplets.size());
  const auto rows = static_cast<std::size_t>(embeddings.rows());
  for (const Triplet& t : triplets) {
    if (t.anchor >= rows || t.positive >= rows || t.negative >= rows) {
      throw InvalidInput("triplet_list_loss: triplet index out of range");
    }
    const auto a = static_cast<std::ptrdiff_t>(t.anchor);
    const double d_ap = (embeddings.row(a) - embeddings.row(static_cast<std::ptrdiff_t>(t.positive))).squaredNorm();
    const double d_an = (embeddings.row(a) - embeddings.row(static_cast<std::ptrdiff_t>(t.negative))).squaredNorm();
    accumulate(embeddings, t, margin, weight, out, d_ap, d_an);
  }
  return out;
}

std::vector<Triplet> generate_offline_triplets(std::span<const int> class_ids, std::uint64_t seed, bool exhaustive) {
  check_balanced(class_ids);
  Rng rng{seed};
  std::vector<Triplet> triplets;
  std::vector<std::size_t> negatives;
  for (std::size_t a = 0; a < class_ids.size(); ++a) {
    negatives.clear();
    for (std::size_t n = 0; n < class_ids.size(); ++n) {
      if (class_ids[n] != class_ids[a]) negatives.push_back(n);
    }
    for (std::size_t p = 0; p < class_ids.size(); ++p) {
      if (p == a || class_ids[p] != class_ids[a]) continue;
      if (exhaustive) {
        for (std::size_t n : negatives) triplets.push_back({a, p, n});
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, negatives.size() - 1);
        triplets.push_back({a, p, negatives[pick(rng)]});
      }
    }
  }
  return triplets;
}

BalancedBatch sample_balanced_batch(std::span<const int> labels, int p, int k, Rng& rng) {
  if (p < 1 || k < 1) throw InvalidInput("sample_balanced_batch: p and k must be positive");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<int> eligible;
  for (const auto& [cls, members] : by_class) {
    if (members.size() >= static_cast<std::size_t>(k)) eligible.push_back(cls);
  }
  if (eligible.size() < static_cast<std::size_t>(p)) {
    throw InvalidInput("sample_balanced_batch: only " + std::to_string(eligible.size()) + " classes have >= " +
                       std::to_string(k) + " items, need " + std::to_string(p));
  }
  std::shuffle(eligible.begin(), eligible.end(), rng);
  BalancedBatch batch;
  batch.p = p;
  batch.k = k;
  for (int c = 0; c < p; ++c) {
    const int cls = eligible[static_cast<std::size_t>(c)];
    std::vector<std::size_t> members = by_class[cls];
    std::shuffle(members.begin(), members.end(), rng);
    for (int j = 0; j < k; ++j) {
      batch.items.push_back(members[static_cast<std::size_t>(j)]);
      batch.class_ids.push_back(cls);
    }
  }
  return batch;
}

BalancedBatch sample_balanced_batch(std::span<const int> labels, int p, int k, std::uint64_t seed) {
  Rng rng{seed};
  return sample_balanced_batch(labels, p, k, rng);
}

}  // namespace mmos
