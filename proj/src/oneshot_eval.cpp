#include "mmos/oneshot_eval.hpp"

#include "mmos/error.hpp"
#include "mmos/random.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <set>
#include <thread>

namespace mmos {

std::string to_string(TaskKind task) {
  switch (task) {
    case TaskKind::unimodal_speech: return "unimodal-speech";
    case TaskKind::unimodal_vision: return "unimodal-vision";
    case TaskKind::cross_modal: return "cross-modal";
    case TaskKind::speaker_invariance: return "speaker-invariance";
  }
  return "unknown";
}

TaskKind parse_task(const std::string& text) {
  for (TaskKind t : {TaskKind::unimodal_speech, TaskKind::unimodal_vision, TaskKind::cross_modal,
                     TaskKind::speaker_invariance}) {
    if (to_string(t) == text) return t;
  }
  throw ConfigError("unknown task '" + text + "'");
}

namespace {

std::vector<int> audio_class_ids(const Dataset& data) {
  std::set<int> ids;
  for (const auto& a : data.audio) ids.insert(a.class_id);
  return {ids.begin(), ids.end()};
}

std::vector<int> choose_classes(std::vector<int> available, int ways, const char* what, Rng& rng) {
  if (ways < 1) throw SamplingError("episode: ways must be >= 1");
  if (available.size() < static_cast<std::size_t>(ways)) {
    throw SamplingError(std::string("episode: need ") + std::to_string(ways) + " " + what + " classes, dataset has " +
                        std::to_string(available.size()));
  }
  std::shuffle(available.begin(), available.end(), rng);
  available.resize(static_cast<std::size_t>(ways));
  return available;
}

template <class T>
T pick(const std::vector<T>& items, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, items.size() - 1);
  return items[dist(rng)];
}

// One unseen image per image class of the episode, in random order.
std::vector<std::size_t> sample_matching(const Dataset& data, const std::vector<int>& classes,
                                         const std::vector<SupportItem>& support, int matching_size, Rng& rng) {
  std::set<int> image_classes;
  for (int c : classes) image_classes.insert(data.image_class_of(c));
  if (matching_size != 0 && static_cast<std::size_t>(matching_size) != image_classes.size()) {
    throw SamplingError("episode: matching size " + std::to_string(matching_size) + " but the episode covers " +
                        std::to_string(image_classes.size()) + " image classes (one matching item per class)");
  }
  std::set<std::size_t> used;
  for (const auto& s : support) used.insert(s.image);
  std::map<int, std::vector<std::size_t>> candidates;
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const int cls = data.images[i].class_id;
    if (image_classes.count(cls) && !used.count(i)) candidates[cls].push_back(i);
  }
  std::vector<std::size_t> matching;
  for (int cls : image_classes) {
    const auto it = candidates.find(cls);
    if (it == candidates.end()) {
      throw SamplingError("episode: no image of class " + std::to_string(cls) + " outside the support set");
    }
    matching.push_back(pick(it->second, rng));
  }
  std::shuffle(matching.begin(), matching.end(), rng);
  return matching;
}

std::size_t support_image_for(const Dataset& data, std::size_t audio) {
  if (data.paired_image.size() != data.audio.size()) throw SamplingError("episode: dataset has no audio-image pairing");
  return data.paired_image[audio];
}

}  // namespace

Episode sample_episode(const Dataset& data, const EpisodeConstraints& constraints, std::uint64_t seed) {
  if (constraints.shots < 1 || constraints.queries < 1) throw SamplingError("episode: shots and queries must be >= 1");
  Rng rng{seed};
  Episode ep;
  ep.task = TaskKind::cross_modal;
  ep.ways = constraints.ways;
  ep.shots = constraints.shots;
  const auto classes = choose_classes(audio_class_ids(data), constraints.ways, "spoken", rng);

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.audio.size(); ++i) by_class[data.audio[i].class_id].push_back(i);

  // Queries are drawn first (class uniform with replacement, items without replacement); the
  // support then avoids their items and, when required, their speakers.
  std::map<int, std::vector<std::size_t>> remaining = by_class;
  for (auto& [cls, items] : remaining) std::shuffle(items.begin(), items.end(), rng);
  std::uniform_int_distribution<std::size_t> class_pick(0, classes.size() - 1);
  std::set<int> query_speakers;
  std::set<std::size_t> query_items;
  for (int q = 0; q < constraints.queries; ++q) {
    const int cls = classes[class_pick(rng)];
    auto& pool = remaining[cls];
    if (pool.empty()) throw SamplingError("episode: class " + std::to_string(cls) + " has too few items for the queries");
    const std::size_t item = pool.back();
    pool.pop_back();
    ep.queries.push_back(item);
    query_items.insert(item);
    query_speakers.insert(data.audio[item].speaker_id);
  }

  for (int cls : classes) {
    std::vector<std::size_t> candidates;
    for (std::size_t i : by_class[cls]) {
      if (query_items.count(i)) continue;
      if (constraints.query_speaker_unseen && query_speakers.count(data.audio[i].speaker_id)) continue;
      candidates.push_back(i);
    }
    if (candidates.size() < static_cast<std::size_t>(constraints.shots)) {
      throw SamplingError("episode: class " + std::to_string(cls) + " has " + std::to_string(candidates.size()) +
                          (constraints.query_speaker_unseen ? " items from speakers other than the query speakers"
                                                            : " items left after the queries") +
                          ", need " + std::to_string(constraints.shots));
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    for (int s = 0; s < constraints.shots; ++s) {
      const std::size_t a = candidates[static_cast<std::size_t>(s)];
      ep.support.push_back({a, support_image_for(data, a), cls});
    }
  }
  ep.matching = sample_matching(data, classes, ep.support, constraints.matching_size, rng);
  return ep;
}

Episode sample_vision_episode(const Dataset& data, const EpisodeConstraints& constraints, std::uint64_t seed) {
  if (constraints.shots < 1 || constraints.queries < 1) throw SamplingError("episode: shots and queries must be >= 1");
  Rng rng{seed};
  Episode ep;
  ep.task = TaskKind::unimodal_vision;
  ep.ways = constraints.ways;
  ep.shots = constraints.shots;
  const auto classes = choose_classes(data.image_classes(), constraints.ways, "image", rng);

  std::map<int, std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < data.images.size(); ++i) pools[data.images[i].class_id].push_back(i);
  for (int cls : classes) {
    auto& pool = pools[cls];
    std::shuffle(pool.begin(), pool.end(), rng);
    if (pool.size() < static_cast<std::size_t>(constraints.shots) + 1) {
      throw SamplingError("episode: image class " + std::to_string(cls) + " needs more than " +
                          std::to_string(constraints.shots) + " images");
    }
    for (int s = 0; s < constraints.shots; ++s) {
      ep.support.push_back({kNoItem, pool.back(), cls});
      pool.pop_back();
    }
  }
  std::uniform_int_distribution<std::size_t> class_pick(0, classes.size() - 1);
  for (int q = 0; q < constraints.queries; ++q) {
    const int cls = classes[class_pick(rng)];
    auto& pool = pools[cls];
    if (pool.empty()) throw SamplingError("episode: image class " + std::to_string(cls) + " has too few images for the queries");
    ep.queries.push_back(pool.back());
    pool.pop_back();
  }
  return ep;
}

Episode sample_speaker_invariance_episode(const Dataset& data, const EpisodeConstraints& constraints,
                                          std::uint64_t seed) {
  if (constraints.shots < 1) throw SamplingError("episode: shots must be >= 1");
  Rng rng{seed};
  Episode ep;
  ep.task = TaskKind::speaker_invariance;
  ep.ways = constraints.ways;
  ep.shots = constraints.shots;
  const auto classes = choose_classes(audio_class_ids(data), constraints.ways, "spoken", rng);
  const auto shots = static_cast<std::size_t>(constraints.shots);

  // (class, speaker) -> items
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.audio.size(); ++i) {
    cells[{data.audio[i].class_id, data.audio[i].speaker_id}].push_back(i);
    by_class[data.audio[i].class_id].push_back(i);
  }
  auto other_speaker_items = [&](int cls, int speaker) {
    std::vector<std::size_t> out;
    for (std::size_t i : by_class[cls]) {
      if (data.audio[i].speaker_id != speaker) out.push_back(i);
    }
    return out;
  };

  std::vector<std::size_t> candidates;
  for (int cls : classes) {
    for (std::size_t q : by_class[cls]) {
      const int speaker = data.audio[q].speaker_id;
      const bool covered = std::all_of(classes.begin(), classes.end(), [&](int other) {
        if (other == cls) return true;
        const auto it = cells.find({other, speaker});
        return it != cells.end() && it->second.size() >= shots;
      });
      if (covered && other_speaker_items(cls, speaker).size() >= shots) candidates.push_back(q);
    }
  }
  if (candidates.empty()) {
    throw SamplingError("speaker-invariance episode: no speaker has every other class plus a different-speaker "
                        "instance of the query class");
  }
  const std::size_t query = pick(candidates, rng);
  const int query_class = data.audio[query].class_id;
  const int query_speaker = data.audio[query].speaker_id;
  ep.queries.push_back(query);

  for (int cls : classes) {
    std::vector<std::size_t> pool =
        cls == query_class ? other_speaker_items(cls, query_speaker) : cells.at({cls, query_speaker});
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t s = 0; s < shots; ++s) ep.support.push_back({pool[s], support_image_for(data, pool[s]), cls});
  }
  ep.matching = sample_matching(data, classes, ep.support, constraints.matching_size, rng);
  return ep;
}

void validate_episode(const Dataset& data, const Episode& ep, const EpisodeConstraints& constraints) {
  auto fail = [](const std::string& what) { throw SamplingError("invalid episode: " + what); };
  const bool vision = ep.task == TaskKind::unimodal_vision;
  std::map<int, int> per_class;
  for (const auto& s : ep.support) ++per_class[s.class_id];
  if (per_class.size() != static_cast<std::size_t>(ep.ways)) fail("support does not cover exactly L classes");
  for (const auto& [cls, n] : per_class) {
    if (n != ep.shots) fail("class " + std::to_string(cls) + " has " + std::to_string(n) + " support items, expected K");
  }
  std::set<std::size_t> support_audio, support_images;
  std::set<int> support_speakers;
  for (const auto& s : ep.support) {
    if (!vision) {
      if (data.audio.at(s.audio).class_id != s.class_id) fail("support audio class mismatch");
      if (data.images.at(s.image).class_id != data.image_class_of(s.class_id)) fail("support pair classes disagree");
      support_audio.insert(s.audio);
      support_speakers.insert(data.audio[s.audio].speaker_id);
    } else if (data.images.at(s.image).class_id != s.class_id) {
      fail("support image class mismatch");
    }
    support_images.insert(s.image);
  }
  for (std::size_t q : ep.queries) {
    if (vision) {
      if (support_images.count(q)) fail("query image is in the support set");
      if (!per_class.count(data.images.at(q).class_id)) fail("query image class not in the support set");
    } else {
      if (support_audio.count(q)) fail("query is in the support set");
      if (!per_class.count(data.audio.at(q).class_id)) fail("query class not in the support set");
    }
  }
  if (ep.task == TaskKind::speaker_invariance) {
    if (ep.queries.size() != 1) fail("speaker-invariance episodes have one query");
    const auto& query = data.audio[ep.queries.front()];
    for (const auto& s : ep.support) {
      const bool same = data.audio[s.audio].speaker_id == query.speaker_id;
      if (s.class_id == query.class_id && same) fail("matching-class support item shares the query speaker");
      if (s.class_id != query.class_id && !same) fail("non-matching support item from another speaker");
    }
  } else if (!vision && constraints.query_speaker_unseen) {
    for (std::size_t q : ep.queries) {
      if (support_speakers.count(data.audio[q].speaker_id)) fail("query speaker appears in the support set");
    }
  }
  if (!vision) {
    std::set<int> matching_classes;
    for (std::size_t m : ep.matching) {
      if (support_images.count(m)) fail("matching item is a support image");
      matching_classes.insert(data.images.at(m).class_id);
    }
    if (matching_classes.size() != ep.matching.size()) fail("matching set repeats an image class");
  }
}

int classify_one_shot(std::span<const int> support_classes, const std::function<double(std::size_t)>& distance_to,
                      KShotRule rule) {
  if (support_classes.empty()) throw InvalidInput("classify_one_shot: empty support set");
  if (rule == KShotRule::nearest_item) return support_classes[argmin_index(support_classes.size(), distance_to)];

  // Class-mean: average distance to each class's support items; ties go to the class whose
  // first support item comes first.
  std::vector<int> order;
  std::map<int, std::pair<double, int>> totals;
  for (std::size_t i = 0; i < support_classes.size(); ++i) {
    auto [it, inserted] = totals.try_emplace(support_classes[i], 0.0, 0);
    if (inserted) order.push_back(support_classes[i]);
    it->second.first += distance_to(i);
    ++it->second.second;
  }
  const std::size_t best = argmin_index(order.size(), [&](std::size_t c) {
    const auto& [sum, n] = totals.at(order[c]);
    return sum / n;
  });
  return order[best];
}

std::size_t cross_modal_match(std::size_t support_count, std::size_t matching_count,
                              const std::function<double(std::size_t)>& query_to_support,
                              const std::function<double(std::size_t, std::size_t)>& support_image_to_matching) {
  if (support_count == 0 || matching_count == 0) throw InvalidInput("cross_modal_match: empty support or matching set");
  const std::size_t retrieved = argmin_index(support_count, query_to_support);
  return argmin_index(matching_count, [&](std::size_t j) { return support_image_to_matching(retrieved, j); });
}

std::size_t score_episode(const Dataset& data, const Episode& ep, const Matcher& matcher, KShotRule rule) {
  std::vector<int> support_classes;
  support_classes.reserve(ep.support.size());
  for (const auto& s : ep.support) support_classes.push_back(s.class_id);

  std::size_t correct = 0;
  for (std::size_t q : ep.queries) {
    switch (ep.task) {
      case TaskKind::unimodal_speech: {
        const int predicted = classify_one_shot(
            support_classes, [&](std::size_t i) { return matcher.speech_distance(q, ep.support[i].audio); }, rule);
        correct += predicted == data.audio[q].class_id;
        break;
      }
      case TaskKind::unimodal_vision: {
        const int predicted = classify_one_shot(
            support_classes, [&](std::size_t i) { return matcher.image_distance(q, ep.support[i].image); }, rule);
        correct += predicted == data.images[q].class_id;
        break;
      }
      case TaskKind::cross_modal:
      case TaskKind::speaker_invariance: {
        const std::size_t j = cross_modal_match(
            ep.support.size(), ep.matching.size(),
            [&](std::size_t i) { return matcher.speech_distance(q, ep.support[i].audio); },
            [&](std::size_t i, std::size_t m) { return matcher.image_distance(ep.support[i].image, ep.matching[m]); });
        correct += data.images[ep.matching[j]].class_id == data.image_class_of(data.audio[q].class_id);
        break;
      }
    }
  }
  return correct;
}

double OracleMatcher::speech_distance(std::size_t a, std::size_t b) const {
  return data_->audio.at(a).class_id == data_->audio.at(b).class_id ? 0.0 : 1.0;
}

double OracleMatcher::image_distance(std::size_t a, std::size_t b) const {
  return data_->images.at(a).class_id == data_->images.at(b).class_id ? 0.0 : 1.0;
}

std::uint64_t seed_for_repetition(std::uint64_t base_seed, std::size_t index) {
  return derive_seed(base_seed, 1000 + index);
}

double ci95_halfwidth(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  return boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(n));
}

EvalReport evaluate(const Dataset& data, const MatcherFactory& factory, const EvalOptions& options) {
  if (options.episodes < 1 || options.seeds < 1 || options.constraints.queries < 1) {
    throw ConfigError("evaluate: episodes, queries and seeds must be >= 1");
  }
  EvalReport report;
  report.task = options.task;
  report.ways = options.constraints.ways;
  report.shots = options.constraints.shots;
  report.matching_size = options.constraints.matching_size;
  report.episodes = options.episodes;
  report.queries_per_episode = options.constraints.queries;
  report.episode_policy = "resampled per seed";
  if (options.task == TaskKind::speaker_invariance) report.episode_policy += "; one query per adversarial episode";

  // Speaker-invariance episodes carry one query each, so the trial count comes from sampling
  // episodes x queries of them.
  const bool single_query = options.task == TaskKind::speaker_invariance;
  const std::size_t episode_count =
      static_cast<std::size_t>(options.episodes) * (single_query ? static_cast<std::size_t>(options.constraints.queries) : 1);
  const std::size_t trials = static_cast<std::size_t>(options.episodes) * static_cast<std::size_t>(options.constraints.queries);

  auto sample = [&](std::uint64_t seed) {
    switch (options.task) {
      case TaskKind::unimodal_vision: return sample_vision_episode(data, options.constraints, seed);
      case TaskKind::speaker_invariance: return sample_speaker_invariance_episode(data, options.constraints, seed);
      case TaskKind::unimodal_speech:
      case TaskKind::cross_modal: {
        Episode ep = sample_episode(data, options.constraints, seed);
        ep.task = options.task;
        return ep;
      }
    }
    throw ConfigError("evaluate: unknown task");
  };

  for (std::size_t s = 0; s < static_cast<std::size_t>(options.seeds); ++s) {
    const std::uint64_t seed = seed_for_repetition(options.base_seed, s);
    const std::shared_ptr<const Matcher> matcher = factory(s, seed);
    const unsigned workers = std::max(1U, std::min<unsigned>(options.threads, static_cast<unsigned>(episode_count)));
    std::vector<std::size_t> correct(workers, 0);
    std::vector<std::exception_ptr> errors(workers);
    auto run = [&](unsigned w) {
      try {
        for (std::size_t e = w; e < episode_count; e += workers) {
          const Episode ep = sample(derive_seed(seed, e));
          correct[w] += score_episode(data, ep, *matcher, options.rule);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    };
    if (workers == 1) {
      run(0);
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
      for (auto& t : pool) t.join();
    }
    for (const auto& err : errors) {
      if (err) {
        try {
          std::rethrow_exception(err);
        } catch (const Error& e) {
          throw SamplingError("evaluate (" + to_string(options.task) + ", seed index " + std::to_string(s) +
                              "): " + e.what());
        }
      }
    }
    const std::size_t total = std::accumulate(correct.begin(), correct.end(), std::size_t{0});
    report.seeds.push_back(seed);
    report.per_seed_accuracy.push_back(static_cast<double>(total) / static_cast<double>(trials));
  }
  report.mean_accuracy = std::accumulate(report.per_seed_accuracy.begin(), report.per_seed_accuracy.end(), 0.0) /
                         static_cast<double>(report.per_seed_accuracy.size());
  report.ci95_halfwidth = ci95_halfwidth(report.per_seed_accuracy);
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"task", to_string(r.task)},
          {"ways", r.ways},
          {"shots", r.shots},
          {"matching_size", r.matching_size},
          {"episodes", r.episodes},
          {"queries_per_episode", r.queries_per_episode},
          {"seeds", r.seeds},
          {"per_seed_accuracy", r.per_seed_accuracy},
          {"mean_accuracy", r.mean_accuracy},
          {"ci95_halfwidth", r.ci95_halfwidth},
          {"episode_policy", r.episode_policy}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.task = parse_task(j.at("task"));
    r.ways = j.at("ways");
    r.shots = j.at("shots");
    r.matching_size = j.value("matching_size", 0);
    r.episodes = j.at("episodes");
    r.queries_per_episode = j.at("queries_per_episode");
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.per_seed_accuracy = j.at("per_seed_accuracy").get<std::vector<double>>();
    r.mean_accuracy = j.at("mean_accuracy");
    r.ci95_halfwidth = j.at("ci95_halfwidth");
    r.episode_policy = j.value("episode_policy", "");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed evaluation report: ") + e.what());
  }
  return r;
}

}  // namespace mmos
