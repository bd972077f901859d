#include "mmos/error.hpp"
#include "mmos/oneshot_eval.hpp"
#include "mmos/random.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

using namespace mmos;

namespace {

SyntheticConfig eval_config() {
  SyntheticConfig cfg;
  cfg.background_classes = 2;
  cfg.validation_classes = 0;
  cfg.validation_speakers = 0;
  cfg.background_speakers = 1;
  cfg.oneshot_speakers = 16;
  cfg.instances_per_speaker = 2;
  cfg.images_per_class = 12;
  cfg.feature_dim = 2;
  cfg.frames = 3;
  cfg.image_height = 2;
  cfg.image_width = 2;
  return cfg;
}

const Dataset& oneshot_data() {
  static const GeneratedData data = generate_synthetic_pairs(eval_config());
  return data.splits.at(Split::one_shot_test);
}

// Pseudo-random but fixed distances: a hash of the unordered pair.
class RandomMatcher final : public Matcher {
 public:
  explicit RandomMatcher(std::uint64_t salt) : salt_(salt) {}
  double speech_distance(std::size_t a, std::size_t b) const override { return hash(1, a, b); }
  double image_distance(std::size_t a, std::size_t b) const override { return hash(2, a, b); }

 private:
  double hash(std::uint64_t kind, std::size_t a, std::size_t b) const {
    const std::uint64_t lo = std::min(a, b), hi = std::max(a, b);
    const std::uint64_t h = derive_seed(derive_seed(salt_ ^ kind, lo), hi);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }
  std::uint64_t salt_;
};

}  // namespace

TEST_CASE("task names round trip") {
  for (TaskKind t : {TaskKind::unimodal_speech, TaskKind::unimodal_vision, TaskKind::cross_modal,
                     TaskKind::speaker_invariance}) {
    CHECK(parse_task(to_string(t)) == t);
  }
  CHECK_THROWS_AS(parse_task("bogus"), ConfigError);
}

TEST_CASE("standard episode structure") {
  const Dataset& d = oneshot_data();
  EpisodeConstraints c;
  const Episode ep = sample_episode(d, c, 42);
  CHECK(ep.support.size() == 11);
  CHECK(ep.matching.size() == 10);
  CHECK(ep.queries.size() == 10);
  std::set<int> matching_classes;
  for (std::size_t m : ep.matching) matching_classes.insert(d.images[m].class_id);
  CHECK(matching_classes.size() == 10);
  CHECK_NOTHROW(validate_episode(d, ep, c));
  CHECK(sample_episode(d, c, 42) == ep);
  CHECK_FALSE(sample_episode(d, c, 43) == ep);

  c.shots = 5;
  const Episode five = sample_episode(d, c, 7);
  CHECK(five.support.size() == 55);
  CHECK_NOTHROW(validate_episode(d, five, c));
}

TEST_CASE("episodes keep query speakers out of the support") {
  const Dataset& d = oneshot_data();
  EpisodeConstraints c;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Episode ep = sample_episode(d, c, seed);
    std::set<int> support_speakers;
    for (const auto& s : ep.support) support_speakers.insert(d.audio[s.audio].speaker_id);
    for (std::size_t q : ep.queries) CHECK_FALSE(support_speakers.count(d.audio[q].speaker_id));
    std::set<std::size_t> support_images;
    for (const auto& s : ep.support) support_images.insert(s.image);
    for (std::size_t m : ep.matching) CHECK_FALSE(support_images.count(m));
  }
}

TEST_CASE("impossible constraints raise SamplingError") {
  const Dataset& d = oneshot_data();
  EpisodeConstraints c;
  c.ways = 12;
  CHECK_THROWS_AS(sample_episode(d, c, 1), SamplingError);
  c.ways = 11;
  c.matching_size = 11;
  CHECK_THROWS_AS(sample_episode(d, c, 1), SamplingError);
}

TEST_CASE("speaker-invariance episode structure") {
  const Dataset& d = oneshot_data();
  EpisodeConstraints c;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Episode ep = sample_speaker_invariance_episode(d, c, seed);
    REQUIRE(ep.queries.size() == 1);
    const auto& q = d.audio[ep.queries[0]];
    int same_speaker = 0;
    for (const auto& s : ep.support) {
      const bool same = d.audio[s.audio].speaker_id == q.speaker_id;
      same_speaker += same;
      if (s.class_id == q.class_id) CHECK_FALSE(same);
    }
    CHECK(same_speaker == c.ways - 1);
    CHECK_NOTHROW(validate_episode(d, ep, c));
  }
  CHECK(sample_speaker_invariance_episode(d, c, 5) == sample_speaker_invariance_episode(d, c, 5));
}

TEST_CASE("vision episode structure") {
  const Dataset& d = oneshot_data();
  EpisodeConstraints c;
  c.ways = 10;
  const Episode ep = sample_vision_episode(d, c, 3);
  CHECK(ep.support.size() == 10);
  CHECK(ep.queries.size() == 10);
  CHECK_NOTHROW(validate_episode(d, ep, c));
}

TEST_CASE("one-shot classification") {
  const std::vector<int> classes{3, 5, 7};
  CHECK(classify_one_shot(classes, [](std::size_t i) { return i == 1 ? 0.0 : 1.0; }) == 5);
  const std::vector<int> two{1, 2};
  CHECK(classify_one_shot(two, [](std::size_t i) { return i == 0 ? 0.1 : 5.0; }) == 1);
  CHECK(classify_one_shot(two, [](std::size_t) { return 1.0; }) == 1);

  // K = 2: nearest item vs class mean disagree
  const std::vector<int> k2{1, 1, 2, 2};
  const std::vector<double> dist{0.1, 5.0, 1.0, 1.0};
  auto f = [&](std::size_t i) { return dist[i]; };
  CHECK(classify_one_shot(k2, f, KShotRule::nearest_item) == 1);
  CHECK(classify_one_shot(k2, f, KShotRule::class_mean) == 2);

  Rng rng{9};
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> cls(8);
    std::vector<double> dd(8);
    for (int i = 0; i < 8; ++i) {
      cls[i] = i;
      dd[i] = u(rng);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < 8; ++i) {
      if (dd[i] < dd[best]) best = i;
    }
    CHECK(classify_one_shot(cls, [&](std::size_t i) { return dd[i]; }) == cls[best]);
  }
}

TEST_CASE("cross-modal two-stage match") {
  // stage 1 goes wrong: the query is nearest to support item 2 (another class), whose image is
  // nearest to matching item 0.
  const std::vector<double> to_support{0.5, 0.9, 0.1};
  const Matrix image_dist = (Matrix(3, 3) << 0.8, 0.2, 0.9,  //
                             0.3, 0.9, 0.1,                  //
                             0.05, 0.7, 0.6)
                                .finished();
  const auto j = cross_modal_match(
      3, 3, [&](std::size_t i) { return to_support[i]; },
      [&](std::size_t i, std::size_t m) { return image_dist(static_cast<std::ptrdiff_t>(i), static_cast<std::ptrdiff_t>(m)); });
  CHECK(j == 0);

  Rng rng{4};
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> qs(6);
    Matrix im(6, 5);
    for (auto& v : qs) v = u(rng);
    for (std::ptrdiff_t k = 0; k < im.size(); ++k) im.data()[k] = u(rng);
    std::size_t s = 0;
    for (std::size_t i = 1; i < 6; ++i) {
      if (qs[i] < qs[s]) s = i;
    }
    std::size_t best = 0;
    for (std::size_t m = 1; m < 5; ++m) {
      if (im(s, m) < im(s, best)) best = m;
    }
    CHECK(cross_modal_match(
              6, 5, [&](std::size_t i) { return qs[i]; },
              [&](std::size_t i, std::size_t m) { return im(static_cast<std::ptrdiff_t>(i), static_cast<std::ptrdiff_t>(m)); }) == best);
  }
}

TEST_CASE("oracle distances give perfect accuracy") {
  const Dataset& d = oneshot_data();
  const auto factory = [&](std::size_t, std::uint64_t) { return std::make_shared<OracleMatcher>(d); };
  EvalOptions opt;
  opt.episodes = 30;
  opt.seeds = 3;
  for (TaskKind t : {TaskKind::cross_modal, TaskKind::unimodal_speech, TaskKind::speaker_invariance}) {
    opt.task = t;
    const auto r = evaluate(d, factory, opt);
    CHECK(r.mean_accuracy == 1.0);
    CHECK(r.ci95_halfwidth == 0.0);
  }
  opt.task = TaskKind::unimodal_vision;
  opt.constraints.ways = 10;
  CHECK(evaluate(d, factory, opt).mean_accuracy == 1.0);
}

TEST_CASE("random distances give chance accuracy") {
  const Dataset& d = oneshot_data();
  const auto factory = [](std::size_t, std::uint64_t seed) { return std::make_shared<RandomMatcher>(seed); };
  EvalOptions opt;
  opt.episodes = 400;
  opt.seeds = 3;
  opt.base_seed = 11;
  const double trials = 400.0 * 10 * 3;

  opt.task = TaskKind::cross_modal;
  auto r = evaluate(d, factory, opt);
  CHECK(std::abs(r.mean_accuracy - 0.10) < 3 * std::sqrt(0.1 * 0.9 / trials));

  opt.task = TaskKind::unimodal_speech;
  r = evaluate(d, factory, opt);
  const double p = 1.0 / 11;
  CHECK(std::abs(r.mean_accuracy - p) < 3 * std::sqrt(p * (1 - p) / trials));
}

TEST_CASE("evaluation does not depend on the thread count") {
  const Dataset& d = oneshot_data();
  const auto factory = [](std::size_t, std::uint64_t seed) { return std::make_shared<RandomMatcher>(seed); };
  EvalOptions opt;
  opt.episodes = 50;
  opt.seeds = 2;
  const auto one = evaluate(d, factory, opt);
  opt.threads = 4;
  const auto four = evaluate(d, factory, opt);
  CHECK(one.per_seed_accuracy == four.per_seed_accuracy);
  CHECK(one.seeds == four.seeds);
}

TEST_CASE("confidence interval") {
  const std::vector<double> two{0.0, 1.0};
  // t(0.975, 1) = 12.7062; sd = 0.70711; sqrt(2) = 1.41421
  CHECK(ci95_halfwidth(two) == doctest::Approx(6.35310).epsilon(1e-5));
  const std::vector<double> same{0.4, 0.4, 0.4};
  CHECK(ci95_halfwidth(same) == 0.0);
  const std::vector<double> one{0.7};
  CHECK(ci95_halfwidth(one) == 0.0);
  const std::vector<double> ten{0.5, 0.6, 0.55, 0.52, 0.58, 0.61, 0.49, 0.57, 0.54, 0.53};
  // t(0.975, 9) = 2.262157
  double mean = 0, ss = 0;
  for (double v : ten) mean += v / 10;
  for (double v : ten) ss += (v - mean) * (v - mean);
  CHECK(ci95_halfwidth(ten) == doctest::Approx(2.262157 * std::sqrt(ss / 9) / std::sqrt(10.0)).epsilon(1e-6));
}

TEST_CASE("report JSON round trip") {
  EvalReport r;
  r.task = TaskKind::speaker_invariance;
  r.ways = 11;
  r.shots = 1;
  r.episodes = 400;
  r.queries_per_episode = 10;
  r.seeds = {1, 2};
  r.per_seed_accuracy = {0.25, 0.5};
  r.mean_accuracy = 0.375;
  r.ci95_halfwidth = 1.5;
  r.episode_policy = "x";
  const auto back = report_from_json(to_json(r));
  CHECK(back.task == r.task);
  CHECK(back.seeds == r.seeds);
  CHECK(back.per_seed_accuracy == r.per_seed_accuracy);
  CHECK(back.mean_accuracy == r.mean_accuracy);
  CHECK_THROWS_AS(report_from_json(nlohmann::json::object()), ConfigError);
}
