#include "mmos/training.hpp"

#include "mmos/error.hpp"
#include "mmos/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

namespace mmos {

namespace {

void check_background_only(const LabelledSet& data, const std::set<int>& forbidden) {
  if (static_cast<std::size_t>(data.inputs.rows()) != data.labels.size()) {
    throw InvalidInput("training: input rows and labels differ in length");
  }
  if (data.labels.empty()) throw InvalidInput("training: empty training set");
  std::set<int> leaked;
  for (int label : data.labels) {
    if (forbidden.count(label)) leaked.insert(label);
  }
  if (!leaked.empty()) {
    std::string list;
    for (int c : leaked) list += (list.empty() ? "" : ", ") + std::to_string(c);
    throw LeakageError("training data contains one-shot classes: " + list);
  }
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<std::ptrdiff_t>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<std::ptrdiff_t>(i)) = m.row(static_cast<std::ptrdiff_t>(rows[i]));
  return out;
}

// Tracks the best validation score and decides when to stop.
class EarlyStopping {
 public:
  EarlyStopping(const Validator& validate, int patience) : validate_(validate), patience_(patience) {}

  // Returns the validation accuracy when a validator is set.
  std::optional<double> observe(const NetworkParams& params, int epoch) {
    if (!validate_) {
      best_ = params;
      best_epoch_ = epoch;
      return std::nullopt;
    }
    const double accuracy = validate_(params);
    if (!best_score_ || accuracy > *best_score_) {
      best_score_ = accuracy;
      best_ = params;
      best_epoch_ = epoch;
      stale_ = 0;
    } else {
      ++stale_;
    }
    return accuracy;
  }

  bool should_stop() const { return validate_ && stale_ >= patience_; }
  NetworkParams take_best() { return std::move(best_); }
  int best_epoch() const { return best_epoch_; }

 private:
  const Validator& validate_;
  int patience_;
  std::optional<double> best_score_;
  NetworkParams best_;
  int best_epoch_ = 0;
  int stale_ = 0;
};

}  // namespace

TrainingResult train_classifier(const LabelledSet& data, const NetworkSpec& spec, const ClassifierOptions& options) {
  check_background_only(data, options.forbidden_classes);
  if (options.max_epochs < 1 || options.batch_size < 1) throw ConfigError("train_classifier: epochs and batch size must be >= 1");

  std::map<int, int> label_index;
  for (int label : data.labels) label_index.emplace(label, 0);
  int next = 0;
  for (auto& [label, index] : label_index) index = next++;
  const LayerSpec& head = spec.layers.back();
  if (head.kind != LayerKind::affine || head.units != static_cast<int>(label_index.size())) {
    throw ConfigError("train_classifier: final layer must be affine with " + std::to_string(label_index.size()) +
                      " units (one per background class)");
  }
  std::vector<int> targets;
  targets.reserve(data.labels.size());
  for (int label : data.labels) targets.push_back(label_index.at(label));

  TrainingResult result;
  NetworkParams params = init_params(spec, derive_seed(options.seed, 1));
  AdamState adam = make_adam_state(params, options.adam);
  Rng rng = make_rng(options.seed, 2);
  EarlyStopping stopping(options.validate, options.patience);

  std::vector<std::size_t> order(data.labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(options.batch_size);
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    adam.completed_epochs = epoch - 1;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(batch, order.size() - start));
      std::vector<int> batch_targets;
      batch_targets.reserve(rows.size());
      for (std::size_t r : rows) batch_targets.push_back(targets[r]);
      const Activations acts = forward(params, spec, gather_rows(data.inputs, rows));
      const LossAndGradient ce = softmax_cross_entropy(acts.result(), batch_targets);
      if (!std::isfinite(ce.loss)) throw TrainingDiverged("train_classifier: non-finite loss in epoch " + std::to_string(epoch));
      const Gradients grads = backward(params, spec, acts, ce.gradient);
      adam_step(params, grads.params, adam);
      loss_sum += ce.loss;
      ++steps;
    }
    EpochRecord record{epoch, loss_sum / steps, std::nullopt, adam.learning_rate()};
    record.validation_accuracy = stopping.observe(params, epoch);
    result.log.push_back(record);
    if (stopping.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }
  result.best_epoch = stopping.best_epoch();
  result.params = stopping.take_best();
  return result;
}

TrainingResult train_siamese(const LabelledSet& data, const NetworkSpec& spec, const SiameseOptions& options) {
  check_background_only(data, options.forbidden_classes);
  if (options.max_epochs < 1) throw ConfigError("train_siamese: epochs must be >= 1");
  if (options.p < 2 || options.k < 2) throw ConfigError("train_siamese: need p >= 2 classes and k >= 2 examples per batch");
  if (spec.embedding_layer + 1 != spec.layers.size()) {
    throw ConfigError("train_siamese: the embedding must be the network's final layer");
  }
  const std::size_t batch_size = static_cast<std::size_t>(options.p) * static_cast<std::size_t>(options.k);
  const int steps_per_epoch = options.steps_per_epoch > 0
                                  ? options.steps_per_epoch
                                  : static_cast<int>((data.labels.size() + batch_size - 1) / batch_size);

  TrainingResult result;
  NetworkParams params = init_params(spec, derive_seed(options.seed, 1));
  AdamState adam = make_adam_state(params, options.adam);
  Rng rng = make_rng(options.seed, 2);
  EarlyStopping stopping(options.validate, options.patience);

  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    adam.completed_epochs = epoch - 1;
    double loss_sum = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const BalancedBatch batch = sample_balanced_batch(data.labels, options.p, options.k, rng);
      const Activations acts = forward(params, spec, gather_rows(data.inputs, batch.items));
      TripletBatchLoss loss;
      if (options.loss.strategy == MiningStrategy::online_semi_hard) {
        loss = online_batch_loss(acts.result(), batch.class_ids, options.loss.margin);
      } else {
        const auto triplets = generate_offline_triplets(batch.class_ids, rng(), options.loss.exhaustive_offline);
        loss = triplet_list_loss(acts.result(), triplets, options.loss.margin);
      }
      if (!std::isfinite(loss.loss)) throw TrainingDiverged("train_siamese: non-finite loss in epoch " + std::to_string(epoch));
      const Gradients grads = backward(params, spec, acts, loss.gradient);
      adam_step(params, grads.params, adam);
      loss_sum += loss.loss;
    }
    EpochRecord record{epoch, loss_sum / steps_per_epoch, std::nullopt, adam.learning_rate()};
    record.validation_accuracy = stopping.observe(params, epoch);
    result.log.push_back(record);
    if (stopping.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }
  result.best_epoch = stopping.best_epoch();
  result.params = stopping.take_best();
  return result;
}

void write_training_log(std::ostream& out, const std::vector<EpochRecord>& log) {
  for (const auto& r : log) {
    nlohmann::json line = {{"epoch", r.epoch}, {"loss", r.loss}, {"lr", r.learning_rate}};
    line["validation_accuracy"] = r.validation_accuracy ? nlohmann::json(*r.validation_accuracy) : nlohmann::json(nullptr);
    out << line.dump() << '\n';
  }
}

}  // namespace mmos
