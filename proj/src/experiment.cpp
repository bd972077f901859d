#include "mmos/experiment.hpp"

#include "mmos/error.hpp"
#include "mmos/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

namespace mmos {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::dtw_pixels: return "dtw-pixels";
    case ModelKind::ffnn_classifier: return "ffnn-classifier";
    case ModelKind::cnn_classifier: return "cnn-classifier";
    case ModelKind::siamese_offline: return "siamese-offline";
    case ModelKind::siamese_online: return "siamese-online";
  }
  return "unknown";
}

ModelKind parse_model(const std::string& text) {
  for (ModelKind k : {ModelKind::dtw_pixels, ModelKind::ffnn_classifier, ModelKind::cnn_classifier,
                      ModelKind::siamese_offline, ModelKind::siamese_online}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown model '" + text + "'");
}

std::string to_string(Modality modality) { return modality == Modality::speech ? "speech" : "vision"; }

bool is_neural(ModelKind kind) { return kind != ModelKind::dtw_pixels; }

namespace {

bool is_siamese(ModelKind kind) { return kind == ModelKind::siamese_offline || kind == ModelKind::siamese_online; }

}  // namespace

Matrix speech_inputs(const Dataset& data) {
  if (data.audio.empty()) return {};
  Matrix out(static_cast<std::ptrdiff_t>(data.audio.size()), data.audio.front().frames.size());
  for (std::size_t i = 0; i < data.audio.size(); ++i) {
    const Vector row = sequence_to_input(data.audio[i]);
    if (row.size() != out.cols()) throw InvalidInput("speech inputs: sequences differ in shape; canonicalise first");
    out.row(static_cast<std::ptrdiff_t>(i)) = row.transpose();
  }
  return out;
}

Matrix vision_inputs(const Dataset& data) {
  if (data.images.empty()) return {};
  Matrix out(static_cast<std::ptrdiff_t>(data.images.size()), data.images.front().pixels.size());
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const Vector row = flatten(data.images[i]);
    if (row.size() != out.cols()) throw InvalidInput("vision inputs: images differ in size");
    out.row(static_cast<std::ptrdiff_t>(i)) = row.transpose();
  }
  return out;
}

LabelledSet speech_training_set(const Dataset& data) { return {speech_inputs(data), data.audio_labels()}; }
LabelledSet vision_training_set(const Dataset& data) { return {vision_inputs(data), data.image_labels()}; }

NetworkSpec build_spec(const ModelConfig& config, Modality modality, const DatasetManifest& manifest) {
  if (!is_neural(config.kind)) throw ConfigError(to_string(config.kind) + " has no network");
  const ModalityInfo& mod = manifest.modality;
  const Shape input = modality == Modality::speech ? Shape{1, mod.feature_dim, mod.frames}
                                                   : Shape{1, mod.image_height, mod.image_width};
  std::set<int> speech_classes, image_classes;
  for (const auto& c : manifest.classes_in(Split::background_train)) {
    speech_classes.insert(c.id);
    image_classes.insert(c.image_class);
  }
  const int classes = static_cast<int>(modality == Modality::speech ? speech_classes.size() : image_classes.size());

  switch (config.kind) {
    case ModelKind::ffnn_classifier:
      return config.full_architectures ? presets::ffnn(input, classes)
                                       : presets::small_ffnn_classifier(input, classes, config.hidden_units, 2);
    case ModelKind::cnn_classifier:
      if (config.full_architectures) {
        return modality == Modality::speech ? presets::speech_cnn(mod.feature_dim, mod.frames, classes)
                                            : presets::vision_cnn(mod.image_height, mod.image_width, classes);
      }
      return presets::small_cnn_classifier(input, classes, 16, config.hidden_units);
    case ModelKind::siamese_offline:
    case ModelKind::siamese_online:
      if (config.full_architectures) {
        return modality == Modality::speech ? presets::speech_cnn(mod.feature_dim, mod.frames, 0)
                                            : presets::vision_cnn(mod.image_height, mod.image_width, 0);
      }
      return presets::small_siamese_cnn(input, 16, config.hidden_units, config.embedding_units);
    case ModelKind::dtw_pixels:
      break;
  }
  throw ConfigError("unsupported model");
}

std::pair<int, int> resolve_batch_shape(const ModelConfig& config, const Dataset& background, Modality modality) {
  const bool online = config.kind == ModelKind::siamese_online;
  int p = config.p > 0 ? config.p : (online ? 128 : 32);
  int k = config.k > 0 ? config.k : (online ? 8 : 2);
  std::map<int, int> counts;
  for (int label : modality == Modality::speech ? background.audio_labels() : background.image_labels()) ++counts[label];
  int smallest = counts.empty() ? 0 : std::numeric_limits<int>::max();
  for (const auto& [cls, n] : counts) smallest = std::min(smallest, n);
  k = std::min(k, smallest);
  p = std::min(p, static_cast<int>(counts.size()));
  if (p < 2 || k < 2) {
    throw ConfigError("background " + to_string(modality) + " data cannot form triplet batches (p=" + std::to_string(p) +
                      ", k=" + std::to_string(k) + ")");
  }
  return {p, k};
}

namespace {

Matrix maybe_normalise(Matrix m, bool normalise) {
  if (normalise) {
    for (std::ptrdiff_t i = 0; i < m.rows(); ++i) {
      const double norm = m.row(i).norm();
      if (norm > 0.0) m.row(i) /= norm;
    }
  }
  return m;
}

Validator make_validator(const LoadedData& data, const ModelConfig& config, Modality modality, const NetworkSpec& spec,
                         std::uint64_t seed) {
  const auto it = data.splits.find(Split::background_validation);
  if (config.validation_episodes < 1 || it == data.splits.end() || it->second.audio.empty()) return {};
  const Dataset* validation = &it->second;
  const Matrix inputs = modality == Modality::speech ? speech_inputs(*validation) : vision_inputs(*validation);

  EvalOptions options;
  options.task = modality == Modality::speech ? TaskKind::unimodal_speech : TaskKind::unimodal_vision;
  const int available = static_cast<int>(modality == Modality::speech ? validation->classes.size()
                                                                       : validation->image_classes().size());
  options.constraints.ways = std::min(modality == Modality::speech ? 11 : 10, available);
  options.constraints.query_speaker_unseen = false;
  // no class may run out of items however the queries fall
  std::map<int, int> per_class;
  if (modality == Modality::speech) {
    for (const auto& s : validation->audio) ++per_class[s.class_id];
  } else {
    for (int c : validation->image_labels()) ++per_class[c];
  }
  int smallest = std::numeric_limits<int>::max();
  for (const auto& [c, n] : per_class) smallest = std::min(smallest, n);
  if (smallest < 2) return {};
  options.constraints.queries = std::min(options.constraints.queries, smallest - 1);
  options.episodes = config.validation_episodes;
  options.seeds = 1;
  options.base_seed = seed;
  const EmbeddingDistance distance = embedding_distance_for(config.kind);
  const bool normalise = config.normalize_embeddings;

  return [=](const NetworkParams& params) {
    const Matrix embedded = maybe_normalise(embed(params, spec, inputs), normalise);
    auto matcher = modality == Modality::speech ? std::make_shared<EmbeddingMatcher>(embedded, Matrix(), distance)
                                                : std::make_shared<EmbeddingMatcher>(Matrix(), embedded, distance);
    return evaluate(*validation, [&](std::size_t, std::uint64_t) { return matcher; }, options).mean_accuracy;
  };
}

std::set<int> one_shot_classes(const DatasetManifest& manifest, Modality modality) {
  std::set<int> out;
  for (const auto& c : manifest.classes_in(Split::one_shot_test)) out.insert(modality == Modality::speech ? c.id : c.image_class);
  return out;
}

TrainingResult train_one(const LoadedData& data, const ModelConfig& config, Modality modality, const NetworkSpec& spec,
                         std::uint64_t seed) {
  const Dataset& background = data.split(Split::background_train);
  const LabelledSet train = modality == Modality::speech ? speech_training_set(background) : vision_training_set(background);
  Validator validate = make_validator(data, config, modality, spec, derive_seed(seed, 3));
  const std::set<int> forbidden = one_shot_classes(data.manifest, modality);

  if (config.kind == ModelKind::ffnn_classifier || config.kind == ModelKind::cnn_classifier) {
    ClassifierOptions options;
    options.max_epochs = config.max_epochs;
    options.batch_size = config.batch_size;
    options.patience = config.patience;
    options.adam = config.adam;
    options.seed = seed;
    options.forbidden_classes = forbidden;
    options.validate = std::move(validate);
    return train_classifier(train, spec, options);
  }
  SiameseOptions options;
  std::tie(options.p, options.k) = resolve_batch_shape(config, background, modality);
  options.max_epochs = config.max_epochs;
  options.steps_per_epoch = config.steps_per_epoch;
  options.patience = config.patience;
  options.loss.margin = config.margin;
  options.loss.strategy =
      config.kind == ModelKind::siamese_online ? MiningStrategy::online_semi_hard : MiningStrategy::offline_batch;
  options.loss.exhaustive_offline = config.exhaustive_offline;
  options.adam = config.adam;
  options.seed = seed;
  options.forbidden_classes = forbidden;
  options.validate = std::move(validate);
  return train_siamese(train, spec, options);
}

}  // namespace

TrainedModel untrained_model(const LoadedData& data, const ModelConfig& config, std::uint64_t seed) {
  TrainedModel model;
  model.config = config;
  model.speech_spec = build_spec(config, Modality::speech, data.manifest);
  model.vision_spec = build_spec(config, Modality::vision, data.manifest);
  model.speech = init_params(model.speech_spec, derive_seed(seed, 11));
  model.vision = init_params(model.vision_spec, derive_seed(seed, 12));
  return model;
}

TrainedModel train_model(const LoadedData& data, const ModelConfig& config, std::uint64_t seed) {
  TrainedModel model;
  model.config = config;
  model.speech_spec = build_spec(config, Modality::speech, data.manifest);
  model.vision_spec = build_spec(config, Modality::vision, data.manifest);
  TrainingResult speech = train_one(data, config, Modality::speech, model.speech_spec, derive_seed(seed, 11));
  TrainingResult vision = train_one(data, config, Modality::vision, model.vision_spec, derive_seed(seed, 12));
  model.speech = std::move(speech.params);
  model.vision = std::move(vision.params);
  model.speech_log = std::move(speech.log);
  model.vision_log = std::move(vision.log);
  return model;
}

DirectFeatureMatcher::DirectFeatureMatcher(const Dataset& data, DtwConfig dtw)
    : data_(&data), dtw_(dtw), pixels_(vision_inputs(data)) {}

double DirectFeatureMatcher::speech_distance(std::size_t a, std::size_t b) const {
  return dtw_distance(data_->audio.at(a), data_->audio.at(b), dtw_);
}

double DirectFeatureMatcher::image_distance(std::size_t a, std::size_t b) const {
  return cosine_distance(row_span(pixels_, static_cast<std::ptrdiff_t>(a)), row_span(pixels_, static_cast<std::ptrdiff_t>(b)));
}

EmbeddingMatcher::EmbeddingMatcher(Matrix speech, Matrix vision, EmbeddingDistance distance)
    : speech_(std::move(speech)), vision_(std::move(vision)), distance_(distance) {}

double EmbeddingMatcher::distance(const Matrix& m, std::size_t a, std::size_t b) const {
  if (a >= static_cast<std::size_t>(m.rows()) || b >= static_cast<std::size_t>(m.rows())) {
    throw InvalidInput("embedding matcher: item index out of range");
  }
  const auto u = row_span(m, static_cast<std::ptrdiff_t>(a));
  const auto v = row_span(m, static_cast<std::ptrdiff_t>(b));
  return distance_ == EmbeddingDistance::cosine ? cosine_distance(u, v) : squared_euclidean(u, v);
}

double EmbeddingMatcher::speech_distance(std::size_t a, std::size_t b) const { return distance(speech_, a, b); }
double EmbeddingMatcher::image_distance(std::size_t a, std::size_t b) const { return distance(vision_, a, b); }

EmbeddingDistance embedding_distance_for(ModelKind kind) {
  return is_siamese(kind) ? EmbeddingDistance::squared_euclidean : EmbeddingDistance::cosine;
}

std::shared_ptr<const Matcher> make_matcher(const Dataset& data, const ModelConfig& config, const TrainedModel* model) {
  if (!is_neural(config.kind)) return std::make_shared<DirectFeatureMatcher>(data, config.dtw);
  if (model == nullptr) throw ConfigError(to_string(config.kind) + " needs trained networks");
  return std::make_shared<EmbeddingMatcher>(
      maybe_normalise(embed(model->speech, model->speech_spec, speech_inputs(data)), config.normalize_embeddings),
      maybe_normalise(embed(model->vision, model->vision_spec, vision_inputs(data)), config.normalize_embeddings),
      embedding_distance_for(config.kind));
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"model", to_string(c.kind)},
          {"margin", c.margin},
          {"p", c.p},
          {"k", c.k},
          {"exhaustive_offline", c.exhaustive_offline},
          {"lr", c.adam.base_learning_rate},
          {"decay", c.adam.decay},
          {"epochs", c.max_epochs},
          {"batch_size", c.batch_size},
          {"patience", c.patience},
          {"steps_per_epoch", c.steps_per_epoch},
          {"hidden_units", c.hidden_units},
          {"embedding_units", c.embedding_units},
          {"validation_episodes", c.validation_episodes},
          {"full_architectures", c.full_architectures},
          {"normalize_embeddings", c.normalize_embeddings},
          {"dtw_local_distance", c.dtw.local_distance == LocalDistance::cosine ? "cosine" : "squared-euclidean"},
          {"dtw_normalize", c.dtw.normalize_by_path_length}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.kind = parse_model(j.at("model"));
    c.margin = j.value("margin", c.margin);
    c.p = j.value("p", c.p);
    c.k = j.value("k", c.k);
    c.exhaustive_offline = j.value("exhaustive_offline", c.exhaustive_offline);
    c.adam.base_learning_rate = j.value("lr", c.adam.base_learning_rate);
    c.adam.decay = j.value("decay", c.adam.decay);
    c.max_epochs = j.value("epochs", c.max_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patience = j.value("patience", c.patience);
    c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
    c.hidden_units = j.value("hidden_units", c.hidden_units);
    c.embedding_units = j.value("embedding_units", c.embedding_units);
    c.validation_episodes = j.value("validation_episodes", c.validation_episodes);
    c.full_architectures = j.value("full_architectures", c.full_architectures);
    c.normalize_embeddings = j.value("normalize_embeddings", c.normalize_embeddings);
    const std::string local = j.value("dtw_local_distance", std::string("cosine"));
    if (local != "cosine" && local != "squared-euclidean") throw ConfigError("unknown DTW local distance '" + local + "'");
    c.dtw.local_distance = local == "cosine" ? LocalDistance::cosine : LocalDistance::squared_euclidean;
    c.dtw.normalize_by_path_length = j.value("dtw_normalize", c.dtw.normalize_by_path_length);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  return c;
}

void write_model(const std::filesystem::path& dir, const TrainedModel& model, std::uint64_t seed) {
  if (!is_neural(model.config.kind)) throw ConfigError(to_string(model.config.kind) + " has no weights to save");
  std::filesystem::create_directories(dir);
  write_checkpoint(dir / "speech.ckpt", model.speech_spec, model.speech);
  write_checkpoint(dir / "vision.ckpt", model.vision_spec, model.vision);
  const nlohmann::json j = {{"format", "mmos-model"},
                            {"config", to_json(model.config)},
                            {"seed", seed},
                            {"speech_network", model.speech_spec.canonical()},
                            {"vision_network", model.vision_spec.canonical()}};
  std::ofstream out(dir / "model.json");
  out << j.dump(2) << '\n';
  if (!out) throw InvalidInput("cannot write " + (dir / "model.json").string());
}

TrainedModel read_model(const std::filesystem::path& dir, const DatasetManifest& manifest) {
  std::ifstream in(dir / "model.json");
  if (!in) throw ConfigError("no model.json in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError((dir / "model.json").string() + ": " + e.what());
  }
  if (j.value("format", "") != "mmos-model") throw ConfigError((dir / "model.json").string() + ": not a model description");
  TrainedModel model;
  model.config = model_config_from_json(j.at("config"));
  model.speech_spec = build_spec(model.config, Modality::speech, manifest);
  model.vision_spec = build_spec(model.config, Modality::vision, manifest);
  model.speech = read_checkpoint(dir / "speech.ckpt", model.speech_spec);
  model.vision = read_checkpoint(dir / "vision.ckpt", model.vision_spec);
  return model;
}

void write_csv(std::ostream& out, std::span<const ReportRow> rows, bool include_timing) {
  out << "task,model,ways,shots,seed_count,episodes,mean_accuracy,ci95_halfwidth,wall_time_s\n";
  for (const auto& row : rows) {
    const EvalReport& r = row.report;
    std::ostringstream line;
    line << to_string(r.task) << ',' << row.model << ',' << r.ways << ',' << r.shots << ',' << r.seeds.size() << ','
         << r.episodes << ',' << std::fixed << std::setprecision(6) << r.mean_accuracy << ',' << r.ci95_halfwidth << ','
         << std::setprecision(3) << (include_timing ? row.wall_time_s : 0.0) << '\n';
    out << line.str();
  }
}

void print_table(std::ostream& out, std::span<const ReportRow> rows) {
  out << std::left << std::setw(18) << "Model" << std::setw(20) << "Task" << std::setw(8) << "Ways" << std::setw(8)
      << "Shots" << "Accuracy\n";
  for (const auto& row : rows) {
    const EvalReport& r = row.report;
    std::ostringstream acc;
    acc << std::fixed << std::setprecision(2) << 100.0 * r.mean_accuracy << "% +- " << 100.0 * r.ci95_halfwidth;
    out << std::left << std::setw(18) << row.model << std::setw(20) << to_string(r.task) << std::setw(8) << r.ways
        << std::setw(8) << r.shots << acc.str() << '\n';
  }
}

}  // namespace mmos
