#pragma once

#include "mmos/datasets.hpp"
#include "mmos/dtw.hpp"
#include "mmos/oneshot_eval.hpp"
#include "mmos/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mmos {

enum class ModelKind { dtw_pixels, ffnn_classifier, cnn_classifier, siamese_offline, siamese_online };
enum class Modality { speech, vision };

std::string to_string(ModelKind kind);
ModelKind parse_model(const std::string& text);
std::string to_string(Modality modality);
bool is_neural(ModelKind kind);

/// Everything needed to train a model and rebuild its networks.
struct ModelConfig {
  ModelKind kind = ModelKind::dtw_pixels;
  double margin = 0.5;
  int p = 0;  // 0: 128 online / 32 offline, capped by the background data
  int k = 0;  // 0: 8 online / 2 offline, capped by the background data
  bool exhaustive_offline = false;
  AdamConfig adam;
  int max_epochs = 100;
  int batch_size = 200;
  int patience = 5;
  int steps_per_epoch = 0;
  int hidden_units = 128;
  int embedding_units = 64;
  int validation_episodes = 200;  // 0 disables early stopping
  bool full_architectures = false;
  bool normalize_embeddings = false;
  DtwConfig dtw;
};

struct TrainedModel {
  ModelConfig config;
  NetworkSpec speech_spec;
  NetworkSpec vision_spec;
  NetworkParams speech;
  NetworkParams vision;
  std::vector<EpochRecord> speech_log;
  std::vector<EpochRecord> vision_log;
};

LabelledSet speech_training_set(const Dataset& data);
LabelledSet vision_training_set(const Dataset& data);
Matrix speech_inputs(const Dataset& data);
Matrix vision_inputs(const Dataset& data);

/// Network architecture for one modality; deterministic in the config and dataset shape.
NetworkSpec build_spec(const ModelConfig& config, Modality modality, const DatasetManifest& manifest);

/// p and k after defaults and capping to what the background split can supply.
std::pair<int, int> resolve_batch_shape(const ModelConfig& config, const Dataset& background, Modality modality);

/// Trains both modality networks on the background split, early-stopping on one-shot
/// accuracy over the validation split when it exists.
TrainedModel train_model(const LoadedData& data, const ModelConfig& config, std::uint64_t seed);

/// Networks with freshly initialised (untrained) weights.
TrainedModel untrained_model(const LoadedData& data, const ModelConfig& config, std::uint64_t seed);

/// DTW over speech and cosine over pixels.
class DirectFeatureMatcher final : public Matcher {
 public:
  DirectFeatureMatcher(const Dataset& data, DtwConfig dtw);
  double speech_distance(std::size_t a, std::size_t b) const override;
  double image_distance(std::size_t a, std::size_t b) const override;

 private:
  const Dataset* data_;
  DtwConfig dtw_;
  Matrix pixels_;
};

enum class EmbeddingDistance { cosine, squared_euclidean };

/// Nearest-neighbour distances between precomputed embeddings.
class EmbeddingMatcher final : public Matcher {
 public:
  EmbeddingMatcher(Matrix speech, Matrix vision, EmbeddingDistance distance);
  double speech_distance(std::size_t a, std::size_t b) const override;
  double image_distance(std::size_t a, std::size_t b) const override;

 private:
  double distance(const Matrix& m, std::size_t a, std::size_t b) const;

  Matrix speech_;
  Matrix vision_;
  EmbeddingDistance distance_;
};

/// Classifier embeddings compare by cosine, Siamese embeddings by squared Euclidean distance.
EmbeddingDistance embedding_distance_for(ModelKind kind);

/// Matcher over `data` for a model; `model` may be null only for dtw-pixels.
std::shared_ptr<const Matcher> make_matcher(const Dataset& data, const ModelConfig& config, const TrainedModel* model);

nlohmann::json to_json(const ModelConfig& config);
/// Inverse of to_json; missing keys keep their defaults. Throws ConfigError on bad values.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Writes speech.ckpt, vision.ckpt and model.json (config, seed) into `dir`.
void write_model(const std::filesystem::path& dir, const TrainedModel& model, std::uint64_t seed);
/// Rebuilds the networks described by <dir>/model.json for `manifest` and loads their weights.
TrainedModel read_model(const std::filesystem::path& dir, const DatasetManifest& manifest);

struct ReportRow {
  std::string model;
  EvalReport report;
  double wall_time_s = 0.0;
};

/// Fixed columns: task, model, ways, shots, seed_count, episodes, mean_accuracy,
/// ci95_halfwidth, wall_time_s. Without `include_timing` the wall time is written as 0 so
/// reruns are byte-identical.
void write_csv(std::ostream& out, std::span<const ReportRow> rows, bool include_timing);
/// Human-readable table: model, task, mean +- CI in percent.
void print_table(std::ostream& out, std::span<const ReportRow> rows);

}  // namespace mmos
