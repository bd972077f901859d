#pragma once

#include "mmos/datasets.hpp"
#include "mmos/metric.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mmos {

enum class TaskKind { unimodal_speech, unimodal_vision, cross_modal, speaker_invariance };

std::string to_string(TaskKind task);
TaskKind parse_task(const std::string& text);

/// How K > 1 shots per class are aggregated when classifying.
enum class KShotRule { nearest_item, class_mean };

struct EpisodeConstraints {
  int ways = 11;
  int shots = 1;
  int matching_size = 0;  // 0: one image per image class covered by the episode
  int queries = 10;
  bool query_speaker_unseen = true;
};

inline constexpr std::size_t kNoItem = static_cast<std::size_t>(-1);

/// Source indices into a Dataset. Vision-only episodes leave `audio` as kNoItem.
struct SupportItem {
  std::size_t audio = kNoItem;
  std::size_t image = kNoItem;
  int class_id = 0;

  friend bool operator==(const SupportItem&, const SupportItem&) = default;
};

struct Episode {
  TaskKind task = TaskKind::cross_modal;
  int ways = 0;
  int shots = 0;
  std::vector<SupportItem> support;
  std::vector<std::size_t> matching;  // image indices
  std::vector<std::size_t> queries;   // audio indices; image indices for unimodal_vision

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Support of `ways` spoken classes x `shots` pairs, a matching set of one unseen image per
/// image class, and `queries` spoken queries not in the support. With `query_speaker_unseen`
/// no query speaker appears in the support. Used for cross-modal and unimodal speech tasks.
Episode sample_episode(const Dataset& data, const EpisodeConstraints& constraints, std::uint64_t seed);

/// Image-only episode: `ways` image classes x `shots` support images and image queries.
Episode sample_vision_episode(const Dataset& data, const EpisodeConstraints& constraints, std::uint64_t seed);

/// Adversarial single-query episode: every support item shares the query's speaker except the
/// one of the query's class, which comes from another speaker.
Episode sample_speaker_invariance_episode(const Dataset& data, const EpisodeConstraints& constraints,
                                          std::uint64_t seed);

/// Checks the structural invariants of `episode` against `data`; throws SamplingError.
void validate_episode(const Dataset& data, const Episode& episode, const EpisodeConstraints& constraints);

/// Within-modality distances between items of one Dataset, addressed by source index.
/// Implementations must be safe to call concurrently.
class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual double speech_distance(std::size_t query_audio, std::size_t other_audio) const = 0;
  virtual double image_distance(std::size_t image_a, std::size_t image_b) const = 0;
};

/// Predicted class for a query given its distance to each support item.
int classify_one_shot(std::span<const int> support_classes, const std::function<double(std::size_t)>& distance_to,
                      KShotRule rule = KShotRule::nearest_item);

/// Two-stage retrieval: nearest support item to the query in the query modality, then the
/// matching item nearest to that support item's image. Ties go to the lowest index.
std::size_t cross_modal_match(std::size_t support_count, std::size_t matching_count,
                              const std::function<double(std::size_t)>& query_to_support,
                              const std::function<double(std::size_t, std::size_t)>& support_image_to_matching);

/// Number of correctly answered queries in `episode`.
std::size_t score_episode(const Dataset& data, const Episode& episode, const Matcher& matcher,
                          KShotRule rule = KShotRule::nearest_item);

struct EvalOptions {
  TaskKind task = TaskKind::cross_modal;
  EpisodeConstraints constraints;
  int episodes = 400;
  int seeds = 10;
  std::uint64_t base_seed = 0;
  unsigned threads = 1;
  KShotRule rule = KShotRule::nearest_item;
};

struct EvalReport {
  TaskKind task = TaskKind::cross_modal;
  int ways = 0;
  int shots = 0;
  int matching_size = 0;
  int episodes = 0;
  int queries_per_episode = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed_accuracy;
  double mean_accuracy = 0.0;
  double ci95_halfwidth = 0.0;
  std::string episode_policy;
};

/// Builds the Matcher for one seed (e.g. a model trained with that seed).
using MatcherFactory = std::function<std::shared_ptr<const Matcher>(std::size_t seed_index, std::uint64_t seed)>;

/// Seed for the i-th repetition of a run started from `base_seed`.
std::uint64_t seed_for_repetition(std::uint64_t base_seed, std::size_t index);

/// Per seed: accuracy over episodes x queries trials with freshly sampled episodes; then the
/// mean over seeds and a Student-t 95% half-width. Results do not depend on `threads`.
EvalReport evaluate(const Dataset& data, const MatcherFactory& factory, const EvalOptions& options);

/// t(0.975, n - 1) * sd / sqrt(n); 0 for fewer than two values.
double ci95_halfwidth(std::span<const double> values);

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

/// Distances from class labels only: 0 within a class, 1 otherwise. Speech labels compare by
/// class id; images compare by image class.
class OracleMatcher final : public Matcher {
 public:
  explicit OracleMatcher(const Dataset& data) : data_(&data) {}
  double speech_distance(std::size_t a, std::size_t b) const override;
  double image_distance(std::size_t a, std::size_t b) const override;

 private:
  const Dataset* data_;
};

}  // namespace mmos
