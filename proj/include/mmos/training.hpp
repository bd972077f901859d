#pragma once

#include "mmos/mining.hpp"
#include "mmos/network.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <vector>

namespace mmos {

/// Background training data: one flattened example per row.
struct LabelledSet {
  Matrix inputs;
  std::vector<int> labels;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  std::optional<double> validation_accuracy;
  double learning_rate = 0.0;
};

struct TrainingResult {
  NetworkParams params;
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  bool stopped_early = false;
};

/// One-shot validation accuracy of candidate parameters; higher is better.
using Validator = std::function<double(const NetworkParams&)>;

struct ClassifierOptions {
  int max_epochs = 100;
  int batch_size = 200;
  int patience = 5;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::set<int> forbidden_classes;  // one-shot classes; training refuses if any label is among them
  Validator validate;
};

struct SiameseOptions {
  int max_epochs = 100;
  int p = 128;
  int k = 8;
  int steps_per_epoch = 0;  // 0: ceil(examples / (p * k))
  int patience = 5;
  TripletLossConfig loss;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::set<int> forbidden_classes;
  Validator validate;
};

/// Softmax classifier on the background classes. Labels are mapped to [0, C) in ascending
/// order; the network's final layer must be affine with C units. With a validator, training stops
/// after `patience` epochs without improvement and returns the best parameters.
TrainingResult train_classifier(const LabelledSet& data, const NetworkSpec& spec, const ClassifierOptions& options);

/// Triplet training on balanced p x k batches; the embedding is the network's final layer.
/// Online: semi-hard negatives mined from the batch embeddings. Offline: negatives drawn
/// without looking at distances.
TrainingResult train_siamese(const LabelledSet& data, const NetworkSpec& spec, const SiameseOptions& options);

/// One JSON object per line: epoch, loss, validation_accuracy (or null), lr.
void write_training_log(std::ostream& out, const std::vector<EpochRecord>& log);

}  // namespace mmos
