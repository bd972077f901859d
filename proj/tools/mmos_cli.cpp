// mmos: generate synthetic data, train models and run one-shot evaluations.

#include "mmos/datasets.hpp"
#include "mmos/error.hpp"
#include "mmos/experiment.hpp"
#include "mmos/oneshot_eval.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode {
  kOk = 0,
  kOtherError = 1,
  kConfigError = 2,
  kFormatError = 3,
  kConsistencyError = 4,
  kLeakageError = 5,
  kDivergence = 6,
  kSamplingError = 7,
  kInvalidInput = 8,
};

std::string default_data_dir() {
  const char* env = std::getenv("MMOS_DATA_DIR");
  return env != nullptr && *env != '\0' ? env : "data";
}

struct EvalArgs {
  std::string manifest;
  std::string checkpoints;
  bool train = false;
  bool untrained = false;
  std::vector<std::string> tasks{"cross-modal"};
  int ways = 0;  // 0: 11 for speech-driven tasks, 10 for vision
  int shots = 1;
  int matching_size = 0;
  int episodes = 400;
  int queries = 10;
  int seeds = 10;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string rule = "nearest";
  bool allow_seen_speakers = false;
  std::string out;
  bool timing = false;
};

void add_model_options(CLI::App* app, mmos::ModelConfig& cfg, std::string& model, std::string& dtw_local,
                       bool& dtw_raw) {
  app->add_option("--model", model, "dtw-pixels | ffnn-classifier | cnn-classifier | siamese-offline | siamese-online");
  app->add_option("--margin", cfg.margin, "triplet margin m")->check(CLI::NonNegativeNumber);
  app->add_option("--p", cfg.p, "classes per triplet batch (0: default)")->check(CLI::NonNegativeNumber);
  app->add_option("--k", cfg.k, "items per class in a triplet batch (0: default)")->check(CLI::NonNegativeNumber);
  app->add_flag("--exhaustive-offline", cfg.exhaustive_offline, "offline Siamese: use every negative");
  app->add_option("--lr", cfg.adam.base_learning_rate, "Adam base learning rate")->check(CLI::PositiveNumber);
  app->add_option("--decay", cfg.adam.decay, "learning-rate decay per epoch")->check(CLI::PositiveNumber);
  app->add_option("--epochs", cfg.max_epochs, "maximum training epochs")->check(CLI::PositiveNumber);
  app->add_option("--batch-size", cfg.batch_size, "classifier batch size")->check(CLI::PositiveNumber);
  app->add_option("--patience", cfg.patience, "early-stopping patience (epochs)")->check(CLI::PositiveNumber);
  app->add_option("--steps-per-epoch", cfg.steps_per_epoch, "Siamese steps per epoch (0: one pass)")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--hidden", cfg.hidden_units, "hidden units of desk-scale networks")->check(CLI::PositiveNumber);
  app->add_option("--embedding", cfg.embedding_units, "Siamese embedding size")->check(CLI::PositiveNumber);
  app->add_option("--validation-episodes", cfg.validation_episodes, "episodes per validation pass (0: no early stopping)")
      ->check(CLI::NonNegativeNumber);
  app->add_flag("--full-architectures", cfg.full_architectures, "use the full-scale network presets");
  app->add_flag("--normalize-embeddings", cfg.normalize_embeddings, "L2-normalise embeddings before matching");
  app->add_option("--dtw-local", dtw_local, "DTW frame distance: cosine | squared-euclidean");
  app->add_flag("--dtw-unnormalized", dtw_raw, "do not divide DTW cost by path length");
}

void finish_model_config(mmos::ModelConfig& cfg, const std::string& model, const std::string& dtw_local, bool dtw_raw) {
  cfg.kind = mmos::parse_model(model);
  if (dtw_local != "cosine" && dtw_local != "squared-euclidean") {
    throw mmos::ConfigError("unknown DTW local distance '" + dtw_local + "'");
  }
  cfg.dtw.local_distance = dtw_local == "cosine" ? mmos::LocalDistance::cosine : mmos::LocalDistance::squared_euclidean;
  cfg.dtw.normalize_by_path_length = !dtw_raw;
}

fs::path manifest_path(const std::string& given) {
  return given.empty() ? fs::path(default_data_dir()) / "manifest.json" : fs::path(given);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw mmos::InvalidInput("cannot write " + path.string());
}

int run_gen_synth(const mmos::SyntheticConfig& cfg, const std::string& out) {
  const fs::path dir = out.empty() ? fs::path(default_data_dir()) : fs::path(out);
  const auto manifest = mmos::write_dataset(mmos::generate_synthetic_pairs(cfg), dir);
  std::cout << "wrote " << manifest.string() << '\n';
  return kOk;
}

int run_train(const mmos::ModelConfig& cfg, const std::string& manifest, const std::string& out, std::uint64_t seed) {
  if (!mmos::is_neural(cfg.kind)) throw mmos::ConfigError(mmos::to_string(cfg.kind) + " needs no training");
  const auto data = mmos::load_dataset(manifest_path(manifest));
  const mmos::TrainedModel model = mmos::train_model(data, cfg, seed);
  const fs::path dir = out.empty() ? fs::path("model-" + mmos::to_string(cfg.kind)) : fs::path(out);
  mmos::write_model(dir, model, seed);
  for (const auto& [name, log] : {std::pair{"speech", &model.speech_log}, std::pair{"vision", &model.vision_log}}) {
    std::ofstream log_out(dir / (std::string(name) + "-train.jsonl"));
    mmos::write_training_log(log_out, *log);
    const auto& last = log->back();
    std::cout << name << ": " << log->size() << " epochs, final loss " << last.loss;
    if (last.validation_accuracy) std::cout << ", validation accuracy " << *last.validation_accuracy;
    std::cout << '\n';
  }
  std::cout << "wrote " << dir.string() << '\n';
  return kOk;
}

int run_eval(const mmos::ModelConfig& cfg, const EvalArgs& args) {
  const fs::path manifest = manifest_path(args.manifest);
  const auto data = mmos::load_dataset(manifest);
  const mmos::Dataset& test = data.split(mmos::Split::one_shot_test);
  if (mmos::is_neural(cfg.kind) && static_cast<int>(args.train) + static_cast<int>(args.untrained) +
                                           static_cast<int>(!args.checkpoints.empty()) != 1) {
    throw mmos::ConfigError("a neural model needs exactly one of --checkpoints, --train or --untrained");
  }

  mmos::ModelConfig model_cfg = cfg;
  std::shared_ptr<const mmos::TrainedModel> loaded;
  if (!args.checkpoints.empty()) {
    loaded = std::make_shared<mmos::TrainedModel>(mmos::read_model(args.checkpoints, data.manifest));
    if (loaded->config.kind != cfg.kind) {
      throw mmos::ConfigError("checkpoints hold a " + mmos::to_string(loaded->config.kind) + " model, not " +
                              mmos::to_string(cfg.kind));
    }
    model_cfg = loaded->config;
  }

  // One matcher per seed; built lazily and reused across tasks.
  std::map<std::size_t, std::shared_ptr<const mmos::Matcher>> matchers;
  const mmos::MatcherFactory factory = [&](std::size_t index, std::uint64_t seed) {
    auto& slot = matchers[index];
    if (!slot) {
      if (!mmos::is_neural(model_cfg.kind)) {
        slot = mmos::make_matcher(test, model_cfg, nullptr);
      } else if (loaded) {
        slot = mmos::make_matcher(test, model_cfg, loaded.get());
      } else {
        const auto model = args.train ? mmos::train_model(data, model_cfg, seed) : mmos::untrained_model(data, model_cfg, seed);
        slot = mmos::make_matcher(test, model_cfg, &model);
      }
    }
    return slot;
  };

  std::vector<mmos::ReportRow> rows;
  json resolved_tasks = json::array();
  for (const auto& task_name : args.tasks) {
    mmos::EvalOptions options;
    options.task = mmos::parse_task(task_name);
    options.constraints.ways = args.ways > 0 ? args.ways : (options.task == mmos::TaskKind::unimodal_vision ? 10 : 11);
    options.constraints.shots = args.shots;
    options.constraints.matching_size = args.matching_size;
    options.constraints.queries = args.queries;
    options.constraints.query_speaker_unseen = !args.allow_seen_speakers;
    options.episodes = args.episodes;
    options.seeds = args.seeds;
    options.base_seed = args.seed;
    options.threads = args.threads;
    if (args.rule != "nearest" && args.rule != "class-mean") throw mmos::ConfigError("unknown k-shot rule '" + args.rule + "'");
    options.rule = args.rule == "nearest" ? mmos::KShotRule::nearest_item : mmos::KShotRule::class_mean;

    const auto start = std::chrono::steady_clock::now();
    mmos::ReportRow row{mmos::to_string(model_cfg.kind), mmos::evaluate(test, factory, options), 0.0};
    row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(row);
  }

  mmos::print_table(std::cout, rows);
  if (!args.out.empty()) {
    std::ostringstream csv;
    mmos::write_csv(csv, rows, args.timing);
    write_text(args.out, csv.str());

    json report = {{"format", "mmos-report"}, {"version", 1}};
    json config = {{"model", mmos::to_json(model_cfg)},
                   {"manifest", manifest.string()},
                   {"weights", !args.checkpoints.empty() ? "checkpoints" : args.train ? "trained-per-seed"
                                                                  : args.untrained   ? "untrained"
                                                                                     : "none"},
                   {"ways", args.ways},
                   {"shots", args.shots},
                   {"matching_size", args.matching_size},
                   {"episodes", args.episodes},
                   {"queries", args.queries},
                   {"seeds", args.seeds},
                   {"base_seed", args.seed},
                   {"rule", args.rule},
                   {"query_speaker_unseen", !args.allow_seen_speakers}};
    if (!args.checkpoints.empty()) config["checkpoints"] = args.checkpoints;
    if (data.manifest.generator) config["dataset_seed"] = data.manifest.generator->seed;
    report["config"] = config;
    json rows_json = json::array();
    for (const auto& row : rows) {
      json r = {{"model", row.model}, {"report", mmos::to_json(row.report)}};
      if (args.timing) r["wall_time_s"] = row.wall_time_s;
      rows_json.push_back(r);
    }
    report["rows"] = rows_json;
    fs::path json_path = args.out;
    json_path.replace_extension(".json");
    write_text(json_path, report.dump(2) + "\n");
  }
  return kOk;
}

int run_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<mmos::ReportRow> rows;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw mmos::ConfigError("cannot open report " + path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw mmos::ConfigError(path + ": " + e.what());
    }
    if (j.value("format", "") != "mmos-report") throw mmos::ConfigError(path + ": not an evaluation report");
    for (const auto& r : j.at("rows")) {
      rows.push_back({r.at("model").get<std::string>(), mmos::report_from_json(r.at("report")), r.value("wall_time_s", 0.0)});
    }
  }
  mmos::print_table(std::cout, rows);
  if (!out.empty()) {
    std::ostringstream csv;
    mmos::write_csv(csv, rows, false);
    write_text(out, csv.str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal one-shot learning experiments"};
  app.set_config("--config", "", "INI file with one section per subcommand; flags override it");
  app.require_subcommand(1);

  mmos::SyntheticConfig synth;
  std::string synth_out;
  auto* gen = app.add_subcommand("gen-synth", "write a synthetic paired speech-image dataset");
  gen->add_option("--out", synth_out, "output directory (default: $MMOS_DATA_DIR or ./data)");
  gen->add_option("--seed", synth.seed, "generator seed");
  gen->add_option("--sigma", synth.noise, "audio noise standard deviation")->check(CLI::NonNegativeNumber);
  gen->add_option("--tau", synth.speaker_offset, "speaker offset standard deviation")->check(CLI::NonNegativeNumber);
  gen->add_option("--image-noise", synth.image_noise, "image noise standard deviation")->check(CLI::NonNegativeNumber);
  gen->add_option("--background-classes", synth.background_classes, "background training classes");
  gen->add_option("--validation-classes", synth.validation_classes, "background validation classes");
  gen->add_option("--background-speakers", synth.background_speakers, "speakers in background training");
  gen->add_option("--validation-speakers", synth.validation_speakers, "speakers in background validation");
  gen->add_option("--speakers", synth.oneshot_speakers, "speakers in the one-shot split");
  gen->add_option("--instances", synth.instances_per_speaker, "utterances per class and speaker");
  gen->add_option("--images-per-class", synth.images_per_class, "images per image class");
  gen->add_option("--feature-dim", synth.feature_dim, "speech feature dimension");
  gen->add_option("--frames", synth.frames, "canonical utterance length");
  gen->add_option("--image-height", synth.image_height, "image height");
  gen->add_option("--image-width", synth.image_width, "image width");
  gen->add_option("--rank", synth.prototype_rank, "rank of the shared prototype basis (0: independent prototypes)");
  gen->add_option("--prototype-scale", synth.prototype_scale, "audio prototype scale");
  gen->add_option("--image-prototype-scale", synth.image_prototype_scale, "image prototype contrast");
  gen->add_option("--warp", synth.time_warp, "relative utterance length variation");
  gen->add_option("--shift", synth.image_shift, "maximum image translation in pixels");
  gen->add_option("--smoothing", synth.prototype_smoothing, "prototype smoothing width");

  mmos::ModelConfig train_cfg;
  std::string train_model = "siamese-online", train_manifest, train_out, train_dtw = "cosine";
  bool train_dtw_raw = false;
  std::uint64_t train_seed = 0;
  auto* train = app.add_subcommand("train", "train a model on the background split and save checkpoints");
  add_model_options(train, train_cfg, train_model, train_dtw, train_dtw_raw);
  train->add_option("--manifest", train_manifest, "dataset manifest (default: $MMOS_DATA_DIR/manifest.json)");
  train->add_option("--out", train_out, "checkpoint directory");
  train->add_option("--seed", train_seed, "training seed");

  mmos::ModelConfig eval_cfg;
  std::string eval_model = "dtw-pixels", eval_dtw = "cosine";
  bool eval_dtw_raw = false;
  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "run one-shot episodes and report accuracy");
  add_model_options(eval, eval_cfg, eval_model, eval_dtw, eval_dtw_raw);
  eval->add_option("--manifest", eval_args.manifest, "dataset manifest (default: $MMOS_DATA_DIR/manifest.json)");
  eval->add_option("--checkpoints", eval_args.checkpoints, "directory written by `mmos train`");
  eval->add_flag("--train", eval_args.train, "train a fresh model for every seed");
  eval->add_flag("--untrained", eval_args.untrained, "use randomly initialised networks");
  eval->add_option("--task", eval_args.tasks, "unimodal-speech | unimodal-vision | cross-modal | speaker-invariance");
  eval->add_option("--ways", eval_args.ways, "classes per episode (0: 11, or 10 for vision)")->check(CLI::NonNegativeNumber);
  eval->add_option("--shots", eval_args.shots, "support items per class")->check(CLI::PositiveNumber);
  eval->add_option("--matching-size", eval_args.matching_size, "matching-set size (0: one per image class)")
      ->check(CLI::NonNegativeNumber);
  eval->add_option("--episodes", eval_args.episodes, "episodes per seed")->check(CLI::PositiveNumber);
  eval->add_option("--queries", eval_args.queries, "queries per episode")->check(CLI::PositiveNumber);
  eval->add_option("--seeds", eval_args.seeds, "repetitions")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_args.seed, "base seed");
  eval->add_option("--threads", eval_args.threads, "worker threads for episode scoring")->check(CLI::PositiveNumber);
  eval->add_option("--rule", eval_args.rule, "k-shot rule: nearest | class-mean");
  eval->add_flag("--allow-seen-speakers", eval_args.allow_seen_speakers, "let query speakers appear in the support set");
  eval->add_option("--out", eval_args.out, "CSV path; a JSON report is written next to it");
  eval->add_flag("--timing", eval_args.timing, "record wall time (makes reports run-dependent)");

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "combine JSON reports into one table and CSV");
  report->add_option("reports", report_inputs, "JSON reports written by `mmos eval`")->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "combined CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) return run_gen_synth(synth, synth_out);
    if (*train) {
      finish_model_config(train_cfg, train_model, train_dtw, train_dtw_raw);
      return run_train(train_cfg, train_manifest, train_out, train_seed);
    }
    if (*eval) {
      finish_model_config(eval_cfg, eval_model, eval_dtw, eval_dtw_raw);
      return run_eval(eval_cfg, eval_args);
    }
    if (*report) return run_report(report_inputs, report_out);
  } catch (const mmos::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const mmos::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kFormatError;
  } catch (const mmos::ConsistencyError& e) {
    std::cerr << "consistency error: " << e.what() << '\n';
    return kConsistencyError;
  } catch (const mmos::LeakageError& e) {
    std::cerr << "leakage error: " << e.what() << '\n';
    return kLeakageError;
  } catch (const mmos::TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const mmos::SamplingError& e) {
    std::cerr << "sampling error: " << e.what() << '\n';
    return kSamplingError;
  } catch (const mmos::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOtherError;
  }
  return kOtherError;
}
