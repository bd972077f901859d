#include "mmos/datasets.hpp"

#include "binary_io.hpp"
#include "mmos/error.hpp"
#include "mmos/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace mmos {

using nlohmann::json;

std::string to_string(Split split) {
  switch (split) {
    case Split::background_train: return "background-train";
    case Split::background_validation: return "background-validation";
    case Split::one_shot_test: return "one-shot-test";
  }
  return "unknown";
}

Split parse_split(const std::string& text) {
  for (Split s : {Split::background_train, Split::background_validation, Split::one_shot_test}) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown split tag '" + text + "'");
}

const ClassInfo& Dataset::class_info(int class_id) const {
  for (const auto& c : classes) {
    if (c.id == class_id) return c;
  }
  throw InvalidInput("class id " + std::to_string(class_id) + " is not in this split's class table");
}

std::vector<int> Dataset::audio_labels() const {
  std::vector<int> out;
  out.reserve(audio.size());
  for (const auto& a : audio) out.push_back(a.class_id);
  return out;
}

std::vector<int> Dataset::image_labels() const {
  std::vector<int> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(img.class_id);
  return out;
}

std::vector<int> Dataset::image_classes() const {
  std::set<int> distinct;
  for (const auto& img : images) distinct.insert(img.class_id);
  return {distinct.begin(), distinct.end()};
}

std::vector<ClassInfo> DatasetManifest::classes_in(Split split) const {
  std::vector<ClassInfo> out;
  std::copy_if(classes.begin(), classes.end(), std::back_inserter(out),
               [split](const ClassInfo& c) { return c.split == split; });
  return out;
}

const Dataset& LoadedData::split(Split s) const {
  const auto it = splits.find(s);
  if (it == splits.end()) throw ConfigError("dataset has no " + to_string(s) + " split");
  return it->second;
}

// ---------------------------------------------------------------------------------------------
// IDX

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::uint8_t pixel_byte(double p) {
  if (!(p >= 0.0 && p <= 255.0) || p != std::floor(p)) {
    throw InvalidInput("IDX images: pixel " + std::to_string(p) + " is not an integer in [0, 255]");
  }
  return static_cast<std::uint8_t>(p);
}

}  // namespace

std::vector<ImageGrid> decode_idx_images(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "IDX images");
  if (const auto magic = r.u32_be(); magic != kIdxImageMagic) {
    r.fail_at("wrong magic 0x" + [&] {
      std::ostringstream s;
      s << std::hex << magic;
      return s.str();
    }() + " (expected 0x803)", 0);
  }
  const std::uint32_t count = r.u32_be();
  const std::uint32_t rows = r.u32_be();
  const std::uint32_t cols = r.u32_be();
  const std::uint64_t per_image = std::uint64_t{rows} * cols;
  if (count > 0 && (rows == 0 || cols == 0)) r.fail("zero image dimension");
  if (per_image > (std::uint64_t{1} << 24)) r.fail("image dimension overflow");
  if (per_image * count > r.remaining()) {
    r.fail("truncated payload: " + std::to_string(count) + " images of " + std::to_string(rows) + "x" +
           std::to_string(cols) + " need " + std::to_string(per_image * count) + " bytes, have " +
           std::to_string(r.remaining()));
  }
  std::vector<ImageGrid> images;
  images.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto payload = r.bytes(static_cast<std::size_t>(per_image));
    ImageGrid img;
    img.pixels.resize(rows, cols);
    for (std::size_t k = 0; k < payload.size(); ++k) img.pixels.data()[k] = payload[k];
    images.push_back(std::move(img));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after payload");
  return images;
}

std::vector<int> decode_idx_labels(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "IDX labels");
  if (r.u32_be() != kIdxLabelMagic) r.fail_at("wrong magic (expected 0x801)", 0);
  const std::uint32_t count = r.u32_be();
  const auto payload = r.bytes(count);
  if (r.remaining() != 0) r.fail("trailing bytes after payload");
  return {payload.begin(), payload.end()};
}

std::vector<ImageGrid> read_idx_images(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  try {
    return decode_idx_images(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

std::vector<int> read_idx_labels(const std::filesystem::path& path, std::optional<std::size_t> expected_count) {
  const auto bytes = detail::read_file_bytes(path.string());
  std::vector<int> labels;
  try {
    labels = decode_idx_labels(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
  if (expected_count && labels.size() != *expected_count) {
    throw ConsistencyError(path.string() + ": " + std::to_string(labels.size()) + " labels for " +
                           std::to_string(*expected_count) + " images");
  }
  return labels;
}

std::vector<std::uint8_t> encode_idx_images(std::span<const ImageGrid> images) {
  detail::ByteWriter w;
  w.u32_be(kIdxImageMagic);
  w.u32_be(static_cast<std::uint32_t>(images.size()));
  const auto rows = images.empty() ? 0 : images.front().height();
  const auto cols = images.empty() ? 0 : images.front().width();
  w.u32_be(static_cast<std::uint32_t>(rows));
  w.u32_be(static_cast<std::uint32_t>(cols));
  for (const auto& img : images) {
    if (img.height() != rows || img.width() != cols) throw InvalidInput("IDX images: images differ in size");
    for (std::ptrdiff_t k = 0; k < img.pixels.size(); ++k) w.byte(pixel_byte(img.pixels.data()[k]));
  }
  return w.data();
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const int> labels) {
  detail::ByteWriter w;
  w.u32_be(kIdxLabelMagic);
  w.u32_be(static_cast<std::uint32_t>(labels.size()));
  for (int label : labels) {
    if (label < 0 || label > 255) throw InvalidInput("IDX labels: label " + std::to_string(label) + " outside [0, 255]");
    w.byte(static_cast<std::uint8_t>(label));
  }
  return w.data();
}

void write_idx_images(const std::filesystem::path& path, std::span<const ImageGrid> images) {
  detail::write_file_bytes(path.string(), encode_idx_images(images));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels) {
  detail::write_file_bytes(path.string(), encode_idx_labels(labels));
}

// ---------------------------------------------------------------------------------------------
// FSA1

std::vector<FeatureSequence> decode_feature_archive(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "feature archive");
  if (!r.tag_equals("FSA1")) r.fail_at("bad magic (expected \"FSA1\")", 0);
  const std::uint32_t count = r.u32_le();
  std::vector<FeatureSequence> out;
  out.reserve(std::min<std::size_t>(count, r.remaining() / 16));
  for (std::uint32_t i = 0; i < count; ++i) {
    FeatureSequence seq;
    seq.class_id = r.i32_le();
    seq.speaker_id = r.i32_le();
    const std::uint32_t frames = r.u32_le();
    const std::uint32_t dim = r.u32_le();
    const std::uint64_t values = std::uint64_t{frames} * dim;
    if (values * 4 > r.remaining()) {
      r.fail("truncated item " + std::to_string(i) + " (" + std::to_string(frames) + "x" + std::to_string(dim) + ")");
    }
    seq.frames.resize(frames, dim);
    for (std::uint64_t k = 0; k < values; ++k) {
      const std::size_t at = r.offset();
      const float v = r.f32_le();
      if (!std::isfinite(v)) r.fail_at("non-finite value in item " + std::to_string(i), at);
      seq.frames.data()[k] = v;
    }
    out.push_back(std::move(seq));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last item");
  return out;
}

std::vector<std::uint8_t> encode_feature_archive(std::span<const FeatureSequence> sequences) {
  detail::ByteWriter w;
  w.tag("FSA1");
  w.u32_le(static_cast<std::uint32_t>(sequences.size()));
  for (const auto& seq : sequences) {
    w.i32_le(seq.class_id);
    w.i32_le(seq.speaker_id);
    w.u32_le(static_cast<std::uint32_t>(seq.frame_count()));
    w.u32_le(static_cast<std::uint32_t>(seq.dim()));
    for (std::ptrdiff_t k = 0; k < seq.frames.size(); ++k) {
      const double v = seq.frames.data()[k];
      if (!std::isfinite(v)) throw InvalidInput("feature archive: non-finite value");
      w.f32_le(static_cast<float>(v));
    }
  }
  return w.data();
}

std::vector<FeatureSequence> read_feature_archive(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  try {
    return decode_feature_archive(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

void write_feature_archive(const std::filesystem::path& path, std::span<const FeatureSequence> sequences) {
  detail::write_file_bytes(path.string(), encode_feature_archive(sequences));
}

// ---------------------------------------------------------------------------------------------
// Pairing and split checks

std::vector<std::size_t> pair_examples(const Dataset& data, std::uint64_t seed) {
  Rng rng{seed};
  std::map<int, std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < data.images.size(); ++i) pools[data.images[i].class_id].push_back(i);
  for (auto& [cls, pool] : pools) std::shuffle(pool.begin(), pool.end(), rng);
  std::map<int, std::size_t> consumed;

  std::vector<std::size_t> paired(data.audio.size());
  for (std::size_t i = 0; i < data.audio.size(); ++i) {
    const int image_class = data.image_class_of(data.audio[i].class_id);
    const auto it = pools.find(image_class);
    if (it == pools.end() || it->second.empty()) {
      throw ConsistencyError("pairing: no image of class " + std::to_string(image_class) + " for audio item " +
                             std::to_string(i));
    }
    const auto& pool = it->second;
    std::size_t& used = consumed[image_class];
    if (used < pool.size()) {
      paired[i] = pool[used++];
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      paired[i] = pool[pick(rng)];
    }
  }
  return paired;
}

SplitCheck enforce_disjoint_splits(const DatasetManifest& manifest) {
  SplitCheck check;
  std::set<int> seen;
  for (const auto& c : manifest.classes) {
    if (!seen.insert(c.id).second) throw ConfigError("manifest: class id " + std::to_string(c.id) + " listed twice");
  }
  std::set<int> background_audio, background_image, oneshot_audio, oneshot_image;
  for (const auto& c : manifest.classes) {
    if (c.split == Split::one_shot_test) {
      oneshot_audio.insert(c.id);
      oneshot_image.insert(c.image_class);
    } else {
      background_audio.insert(c.id);
      background_image.insert(c.image_class);
    }
  }
  if (background_audio.empty()) check.warnings.push_back("manifest has no background classes");

  std::vector<std::string> offenders;
  for (int id : background_audio) {
    if (oneshot_audio.count(id)) offenders.push_back("audio class " + std::to_string(id));
  }
  for (int id : background_image) {
    if (oneshot_image.count(id)) offenders.push_back("image class " + std::to_string(id));
  }
  if (!offenders.empty()) {
    std::string message = "background and one-shot splits share classes:";
    for (const auto& o : offenders) message += " " + o + ";";
    message.pop_back();
    throw LeakageError(message);
  }
  return check;
}

// ---------------------------------------------------------------------------------------------
// Synthetic generator

namespace {

const char* const kDigitNames[] = {"zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"};

Matrix gaussian(std::ptrdiff_t rows, std::ptrdiff_t cols, double sd, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (std::ptrdiff_t k = 0; k < m.size(); ++k) m.data()[k] = sd * dist(rng);
  return m;
}

// Separable Gaussian blur: along rows (time) only for audio fields, both axes for images.
// The result is rescaled to unit variance.
Matrix smooth_field(const Matrix& field, double sigma, bool both_axes) {
  if (sigma <= 0.0) return field;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel;
  for (int i = -radius; i <= radius; ++i) kernel.push_back(std::exp(-0.5 * i * i / (sigma * sigma)));
  auto blur_rows = [&](const Matrix& in) {
    Matrix out = Matrix::Zero(in.rows(), in.cols());
    for (std::ptrdiff_t r = 0; r < in.rows(); ++r) {
      double weight = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const std::ptrdiff_t src = r + i;
        if (src < 0 || src >= in.rows()) continue;
        out.row(r) += kernel[static_cast<std::size_t>(i + radius)] * in.row(src);
        weight += kernel[static_cast<std::size_t>(i + radius)];
      }
      out.row(r) /= weight;
    }
    return out;
  };
  Matrix out = blur_rows(field);
  if (both_axes) out = blur_rows(out.transpose()).transpose();
  const double mean = out.mean();
  const double sd = std::sqrt((out.array() - mean).square().mean());
  return sd > 0.0 ? Matrix((out.array() - mean) / sd) : out;
}

// Unit-variance field: a random combination of `basis`, or i.i.d. noise when the basis is empty.
Matrix draw_prototype(const std::vector<Matrix>& basis, std::ptrdiff_t rows, std::ptrdiff_t cols, Rng& rng) {
  if (basis.empty()) return gaussian(rows, cols, 1.0, rng);
  std::normal_distribution<double> coeff(0.0, 1.0);
  Matrix proto = Matrix::Zero(rows, cols);
  for (const auto& b : basis) proto += coeff(rng) * b;
  return proto / std::sqrt(static_cast<double>(basis.size()));
}

// Linear resampling of `proto` along time to `length` frames.
Matrix resample_frames(const Matrix& proto, std::ptrdiff_t length) {
  const std::ptrdiff_t n = proto.rows();
  if (length == n) return proto;
  Matrix out(length, proto.cols());
  for (std::ptrdiff_t t = 0; t < length; ++t) {
    const double pos = length == 1 ? 0.0 : static_cast<double>(t) * static_cast<double>(n - 1) / static_cast<double>(length - 1);
    const auto lo = static_cast<std::ptrdiff_t>(std::floor(pos));
    const std::ptrdiff_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    out.row(t) = (1.0 - frac) * proto.row(lo) + frac * proto.row(hi);
  }
  return out;
}

// Translates `img` by (dy, dx); uncovered pixels take the neutral value 0.5.
Matrix shift_image(const Matrix& img, int dy, int dx) {
  Matrix out = Matrix::Constant(img.rows(), img.cols(), 0.5);
  for (std::ptrdiff_t r = 0; r < img.rows(); ++r) {
    for (std::ptrdiff_t c = 0; c < img.cols(); ++c) {
      const std::ptrdiff_t sr = r - dy, sc = c - dx;
      if (sr >= 0 && sr < img.rows() && sc >= 0 && sc < img.cols()) out(r, c) = img(sr, sc);
    }
  }
  return out;
}

double quantise_pixel(double p) { return std::round(std::clamp(p, 0.0, 1.0) * 255.0) / 255.0; }

void check_config(const SyntheticConfig& cfg) {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string("synthetic config: ") + name + " must be >= 1");
  };
  if (cfg.background_classes < 2) throw ConfigError("synthetic config: background_classes must be >= 2");
  positive(cfg.background_speakers, "background_speakers");
  positive(cfg.oneshot_speakers, "oneshot_speakers");
  positive(cfg.instances_per_speaker, "instances_per_speaker");
  positive(cfg.images_per_class, "images_per_class");
  positive(cfg.feature_dim, "feature_dim");
  positive(cfg.frames, "frames");
  positive(cfg.image_height, "image_height");
  positive(cfg.image_width, "image_width");
  if (cfg.validation_classes < 0 || cfg.validation_speakers < 0 || cfg.prototype_rank < 0) {
    throw ConfigError("synthetic config: counts must be non-negative");
  }
  if (cfg.validation_classes > 0 && cfg.validation_speakers < 1) {
    throw ConfigError("synthetic config: validation classes need validation speakers");
  }
  if (!(cfg.time_warp >= 0.0 && cfg.time_warp < 1.0)) throw ConfigError("synthetic config: time_warp must be in [0, 1)");
  if (!(cfg.prototype_smoothing >= 0.0)) throw ConfigError("synthetic config: prototype_smoothing must be >= 0");
  if (cfg.image_shift < 0) throw ConfigError("synthetic config: image_shift must be >= 0");
  if (!(cfg.noise >= 0.0) || !(cfg.image_noise >= 0.0) || !(cfg.speaker_offset >= 0.0) ||
      !(cfg.prototype_scale >= 0.0) || !(cfg.image_prototype_scale >= 0.0)) {
    throw ConfigError("synthetic config: scales must be >= 0");
  }
}

}  // namespace

GeneratedData generate_synthetic_pairs(const SyntheticConfig& cfg) {
  check_config(cfg);
  GeneratedData out;
  DatasetManifest& manifest = out.manifest;
  manifest.generator = cfg;
  manifest.modality = {cfg.feature_dim, cfg.frames, cfg.image_height, cfg.image_width, 255.0, false};
  manifest.pairing_seed = derive_seed(cfg.seed, 7);

  // Class table: spoken digits 0-9 plus "oh" (aliased to image 0), then background and
  // validation classes with their own ids.
  for (int d = 0; d < 10; ++d) manifest.classes.push_back({d, kDigitNames[d], d, Split::one_shot_test});
  manifest.classes.push_back({10, "oh", 0, Split::one_shot_test});
  int next_id = 11;
  for (int i = 0; i < cfg.background_classes; ++i, ++next_id) {
    manifest.classes.push_back({next_id, "background-" + std::to_string(i), next_id, Split::background_train});
  }
  for (int i = 0; i < cfg.validation_classes; ++i, ++next_id) {
    manifest.classes.push_back({next_id, "validation-" + std::to_string(i), next_id, Split::background_validation});
  }

  std::map<Split, std::vector<int>> speakers;
  int next_speaker = 0;
  for (auto [split, count] : {std::pair{Split::one_shot_test, cfg.oneshot_speakers},
                              std::pair{Split::background_train, cfg.background_speakers},
                              std::pair{Split::background_validation, cfg.validation_speakers}}) {
    for (int i = 0; i < count; ++i, ++next_speaker) {
      speakers[split].push_back(next_speaker);
      manifest.speakers[next_speaker] = split;
    }
  }

  Rng basis_rng = make_rng(cfg.seed, 1);
  std::vector<Matrix> audio_basis;
  std::vector<Matrix> image_basis;
  for (int r = 0; r < cfg.prototype_rank; ++r) {
    audio_basis.push_back(smooth_field(gaussian(cfg.frames, cfg.feature_dim, 1.0, basis_rng), cfg.prototype_smoothing, false));
    image_basis.push_back(smooth_field(gaussian(cfg.image_height, cfg.image_width, 1.0, basis_rng), cfg.prototype_smoothing, true));
  }

  Rng proto_rng = make_rng(cfg.seed, 2);
  std::map<int, Matrix> audio_proto;
  std::map<int, Matrix> image_proto;
  for (const auto& c : manifest.classes) {
    audio_proto[c.id] = cfg.prototype_scale * draw_prototype(audio_basis, cfg.frames, cfg.feature_dim, proto_rng);
    if (!image_proto.count(c.image_class)) {
      Matrix field = draw_prototype(image_basis, cfg.image_height, cfg.image_width, proto_rng);
      image_proto[c.image_class] = (0.5 + 0.25 * cfg.image_prototype_scale * field.array()).cwiseMax(0.0).cwiseMin(1.0).matrix();
    }
  }

  Rng offset_rng = make_rng(cfg.seed, 3);
  std::map<int, Vector> offsets;
  for (const auto& [id, split] : manifest.speakers) {
    offsets[id] = Vector(cfg.feature_dim);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (std::ptrdiff_t f = 0; f < cfg.feature_dim; ++f) offsets[id](f) = cfg.speaker_offset * dist(offset_rng);
  }

  std::uint64_t stream = 10;
  for (Split split : {Split::background_train, Split::background_validation, Split::one_shot_test}) {
    Dataset& data = out.splits[split];
    data.classes = manifest.classes_in(split);
    Rng rng = make_rng(cfg.seed, stream++);
    for (const auto& c : data.classes) {
      for (int speaker : speakers[split]) {
        for (int n = 0; n < cfg.instances_per_speaker; ++n) {
          FeatureSequence seq;
          seq.class_id = c.id;
          seq.speaker_id = speaker;
          std::ptrdiff_t length = cfg.frames;
          if (cfg.time_warp > 0.0) {
            std::uniform_real_distribution<double> stretch(1.0 - cfg.time_warp, 1.0 + cfg.time_warp);
            length = std::max<std::ptrdiff_t>(1, std::lround(cfg.frames * stretch(rng)));
          }
          seq.frames = resample_frames(audio_proto[c.id], length) + gaussian(length, cfg.feature_dim, cfg.noise, rng);
          seq.frames.rowwise() += offsets[speaker].transpose();
          seq.frames = seq.frames.cast<float>().cast<double>();
          data.audio.push_back(std::move(seq));
        }
      }
    }
    std::set<int> image_classes;
    for (const auto& c : data.classes) image_classes.insert(c.image_class);
    for (int image_class : image_classes) {
      for (int n = 0; n < cfg.images_per_class; ++n) {
        ImageGrid img;
        img.class_id = image_class;
        int dy = 0, dx = 0;
        if (cfg.image_shift > 0) {
          std::uniform_int_distribution<int> shift(-cfg.image_shift, cfg.image_shift);
          dy = shift(rng);
          dx = shift(rng);
        }
        img.pixels = (shift_image(image_proto[image_class], dy, dx) +
                      gaussian(cfg.image_height, cfg.image_width, cfg.image_noise, rng))
                         .unaryExpr(&quantise_pixel);
        data.images.push_back(std::move(img));
      }
    }
    if (!data.audio.empty()) data.paired_image = pair_examples(data, manifest.pairing_seed + static_cast<std::uint64_t>(split));
  }
  enforce_disjoint_splits(manifest);
  return out;
}

// ---------------------------------------------------------------------------------------------
// Manifest (JSON)

namespace {

json synthetic_to_json(const SyntheticConfig& c) {
  return {{"background_classes", c.background_classes},
          {"validation_classes", c.validation_classes},
          {"background_speakers", c.background_speakers},
          {"validation_speakers", c.validation_speakers},
          {"oneshot_speakers", c.oneshot_speakers},
          {"instances_per_speaker", c.instances_per_speaker},
          {"images_per_class", c.images_per_class},
          {"feature_dim", c.feature_dim},
          {"frames", c.frames},
          {"image_height", c.image_height},
          {"image_width", c.image_width},
          {"prototype_rank", c.prototype_rank},
          {"prototype_scale", c.prototype_scale},
          {"image_prototype_scale", c.image_prototype_scale},
          {"noise", c.noise},
          {"image_noise", c.image_noise},
          {"speaker_offset", c.speaker_offset},
          {"time_warp", c.time_warp},
          {"image_shift", c.image_shift},
          {"prototype_smoothing", c.prototype_smoothing},
          {"seed", c.seed}};
}

SyntheticConfig synthetic_from_json(const json& j) {
  SyntheticConfig c;
  c.background_classes = j.at("background_classes");
  c.validation_classes = j.at("validation_classes");
  c.background_speakers = j.at("background_speakers");
  c.validation_speakers = j.at("validation_speakers");
  c.oneshot_speakers = j.at("oneshot_speakers");
  c.instances_per_speaker = j.at("instances_per_speaker");
  c.images_per_class = j.at("images_per_class");
  c.feature_dim = j.at("feature_dim");
  c.frames = j.at("frames");
  c.image_height = j.at("image_height");
  c.image_width = j.at("image_width");
  c.prototype_rank = j.at("prototype_rank");
  c.prototype_scale = j.at("prototype_scale");
  c.image_prototype_scale = j.at("image_prototype_scale");
  c.noise = j.at("noise");
  c.image_noise = j.at("image_noise");
  c.speaker_offset = j.at("speaker_offset");
  c.time_warp = j.value("time_warp", 0.0);
  c.image_shift = j.value("image_shift", 0);
  c.prototype_smoothing = j.value("prototype_smoothing", 0.0);
  c.seed = j.at("seed");
  return c;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  json j;
  j["format"] = "mmos-manifest";
  j["version"] = m.version;
  j["modality"] = {{"feature_dim", m.modality.feature_dim},
                   {"frames", m.modality.frames},
                   {"image_height", m.modality.image_height},
                   {"image_width", m.modality.image_width},
                   {"pixel_source_max", m.modality.pixel_source_max},
                   {"invert_images", m.modality.invert_images}};
  j["classes"] = json::array();
  for (const auto& c : m.classes) {
    j["classes"].push_back({{"id", c.id}, {"name", c.name}, {"image_class", c.image_class}, {"split", to_string(c.split)}});
  }
  j["speakers"] = json::array();
  for (const auto& [id, split] : m.speakers) j["speakers"].push_back({{"id", id}, {"split", to_string(split)}});
  j["splits"] = json::object();
  for (const auto& [split, files] : m.files) {
    j["splits"][to_string(split)] = {{"audio", files.audio}, {"images", files.images}, {"labels", files.labels}};
  }
  j["pairing"] = {{"seed", m.pairing_seed}, {"policy", m.pairing_policy}};
  if (m.generator) j["generator"] = synthetic_to_json(*m.generator);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidInput("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open manifest " + path.string());
  DatasetManifest m;
  try {
    const json j = json::parse(in);
    if (j.value("format", "") != "mmos-manifest") throw ConfigError(path.string() + ": not a dataset manifest");
    m.version = j.at("version");
    const auto& mod = j.at("modality");
    m.modality = {mod.at("feature_dim"), mod.at("frames"), mod.at("image_height"), mod.at("image_width"),
                  mod.value("pixel_source_max", 255.0), mod.value("invert_images", false)};
    for (const auto& c : j.at("classes")) {
      m.classes.push_back({c.at("id"), c.at("name"), c.at("image_class"), parse_split(c.at("split"))});
    }
    for (const auto& s : j.value("speakers", json::array())) m.speakers[s.at("id")] = parse_split(s.at("split"));
    for (const auto& [name, files] : j.at("splits").items()) {
      m.files[parse_split(name)] = {files.at("audio"), files.at("images"), files.at("labels")};
    }
    m.pairing_seed = j.at("pairing").at("seed");
    m.pairing_policy = j.at("pairing").value("policy", m.pairing_policy);
    if (j.contains("generator")) m.generator = synthetic_from_json(j.at("generator"));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": malformed manifest: " + e.what());
  }
  return m;
}

std::filesystem::path write_dataset(const GeneratedData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  DatasetManifest manifest = data.manifest;
  for (const auto& [split, dataset] : data.splits) {
    const std::string stem = to_string(split);
    SplitFiles files{stem + ".fsa", stem + "-images.idx", stem + "-labels.idx"};
    write_feature_archive(dir / files.audio, dataset.audio);
    std::vector<ImageGrid> raw = dataset.images;
    for (auto& img : raw) img.pixels = (img.pixels * 255.0).array().round().matrix();
    write_idx_images(dir / files.images, raw);
    write_idx_labels(dir / files.labels, dataset.image_labels());
    manifest.files[split] = files;
  }
  const auto path = dir / "manifest.json";
  write_manifest(path, manifest);
  return path;
}

LoadedData load_dataset(const std::filesystem::path& manifest_path) {
  LoadedData out;
  out.manifest = read_manifest(manifest_path);
  const DatasetManifest& m = out.manifest;
  for (const auto& warning : enforce_disjoint_splits(m).warnings) std::cerr << "warning: " << warning << '\n';
  const auto base = manifest_path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };

  for (const auto& [split, files] : m.files) {
    Dataset data;
    data.classes = m.classes_in(split);
    std::set<int> audio_ids, image_ids;
    for (const auto& c : data.classes) {
      audio_ids.insert(c.id);
      image_ids.insert(c.image_class);
    }
    for (auto& seq : read_feature_archive(resolve(files.audio))) {
      if (!audio_ids.count(seq.class_id)) {
        throw LeakageError(files.audio + ": audio class " + std::to_string(seq.class_id) + " is not a " +
                           to_string(split) + " class");
      }
      data.audio.push_back(canonicalize_sequence(seq, m.modality.frames));
    }
    auto images = read_idx_images(resolve(files.images));
    const auto labels = read_idx_labels(resolve(files.labels), images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (!image_ids.count(labels[i])) {
        throw LeakageError(files.labels + ": image class " + std::to_string(labels[i]) + " is not a " +
                           to_string(split) + " class");
      }
      images[i].class_id = labels[i];
      images[i] = normalize_pixels(images[i], m.modality.pixel_source_max);
      if (m.modality.invert_images) images[i] = invert_pixels(images[i]);
    }
    data.images = std::move(images);
    if (!data.audio.empty()) data.paired_image = pair_examples(data, m.pairing_seed + static_cast<std::uint64_t>(split));
    out.splits[split] = std::move(data);
  }
  return out;
}

}  // namespace mmos
