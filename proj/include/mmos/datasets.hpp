#pragma once

#include "mmos/data_model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmos {

enum class Split { background_train, background_validation, one_shot_test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

/// One entry of the class table. `image_class` is the image label a spoken class pairs with;
/// it differs from `id` only for aliases ("oh" pairs with the image of zero).
struct ClassInfo {
  int id = 0;
  std::string name;
  int image_class = 0;
  Split split = Split::one_shot_test;
};

/// The items of one split. Source indices are positions in `audio` / `images`.
struct Dataset {
  std::vector<ClassInfo> classes;
  std::vector<FeatureSequence> audio;
  std::vector<ImageGrid> images;
  /// Per audio item, the index of the image it is paired with.
  std::vector<std::size_t> paired_image;

  const ClassInfo& class_info(int class_id) const;
  int image_class_of(int class_id) const { return class_info(class_id).image_class; }
  std::vector<int> audio_labels() const;
  std::vector<int> image_labels() const;
  /// Distinct image classes, ascending.
  std::vector<int> image_classes() const;
};

struct SplitFiles {
  std::string audio;   // FSA1 archive
  std::string images;  // IDX images (0x00000803)
  std::string labels;  // IDX labels (0x00000801)
};

struct ModalityInfo {
  int feature_dim = 0;
  int frames = 0;  // canonical frame count after centre pad/crop
  int image_height = 0;
  int image_width = 0;
  double pixel_source_max = 255.0;
  bool invert_images = false;
};

/// Parameters of the synthetic paired-digit generator.
///
/// Each class gets an audio prototype (frames x feature_dim) and an image prototype; instances
/// add i.i.d. Gaussian noise and, for audio, a per-speaker constant offset on every frame.
/// With `prototype_rank > 0`, prototypes are random combinations of a basis shared by every
/// class, so structure learnt on background classes carries over to the one-shot classes.
struct SyntheticConfig {
  int background_classes = 20;
  int validation_classes = 10;
  int background_speakers = 12;
  int validation_speakers = 6;
  int oneshot_speakers = 16;
  int instances_per_speaker = 2;  // per class and speaker
  int images_per_class = 20;
  int feature_dim = 8;
  int frames = 20;
  int image_height = 12;
  int image_width = 12;
  int prototype_rank = 3;
  double prototype_scale = 1.0;        // audio prototype std-dev
  double image_prototype_scale = 1.0;  // image prototype contrast
  double noise = 0.8;                  // audio noise sigma
  double image_noise = 0.2;            // image noise sigma
  double speaker_offset = 0.0;         // tau
  double time_warp = 0.3;              // utterance length drawn from frames * (1 +- time_warp)
  int image_shift = 1;                 // max translation of an image instance, in pixels
  double prototype_smoothing = 1.5;    // Gaussian blur (frames / pixels) applied to the basis
  std::uint64_t seed = 1;
};

struct DatasetManifest {
  int version = 1;
  ModalityInfo modality;
  std::vector<ClassInfo> classes;
  std::map<int, Split> speakers;
  std::map<Split, SplitFiles> files;
  std::optional<SyntheticConfig> generator;
  std::uint64_t pairing_seed = 0;
  std::string pairing_policy = "per-class shuffle; without replacement until the image pool is exhausted, then with replacement";

  std::vector<ClassInfo> classes_in(Split split) const;
};

struct LoadedData {
  DatasetManifest manifest;
  std::map<Split, Dataset> splits;

  const Dataset& split(Split s) const;
};

/// IDX decoding. Pixels keep their raw byte values (normalise separately).
std::vector<ImageGrid> decode_idx_images(std::span<const std::uint8_t> bytes);
std::vector<int> decode_idx_labels(std::span<const std::uint8_t> bytes);
std::vector<ImageGrid> read_idx_images(const std::filesystem::path& path);
/// With `expected_count`, a different label count raises ConsistencyError.
std::vector<int> read_idx_labels(const std::filesystem::path& path, std::optional<std::size_t> expected_count = {});
/// Pixels must be integers in [0, 255]; labels in [0, 255].
std::vector<std::uint8_t> encode_idx_images(std::span<const ImageGrid> images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const int> labels);
void write_idx_images(const std::filesystem::path& path, std::span<const ImageGrid> images);
void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels);

/// FSA1 feature archive: "FSA1", u32 count, then per item i32 class, i32 speaker, u32 frames,
/// u32 dim and frames*dim float32 values. Everything little-endian.
std::vector<FeatureSequence> decode_feature_archive(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_feature_archive(std::span<const FeatureSequence> sequences);
std::vector<FeatureSequence> read_feature_archive(const std::filesystem::path& path);
void write_feature_archive(const std::filesystem::path& path, std::span<const FeatureSequence> sequences);

/// Pairs every audio item with an image of its class's image class. Within each image class
/// the pool is shuffled and consumed without replacement; once exhausted, images are drawn
/// with replacement.
std::vector<std::size_t> pair_examples(const Dataset& data, std::uint64_t seed);

struct SplitCheck {
  std::vector<std::string> warnings;
};

/// Throws LeakageError naming every class (audio id or image class) that occurs both in a
/// background split and in the one-shot split.
SplitCheck enforce_disjoint_splits(const DatasetManifest& manifest);

struct GeneratedData {
  DatasetManifest manifest;  // file references left empty
  std::map<Split, Dataset> splits;
};

/// Deterministic in `cfg.seed`. Image pixels are quantised to multiples of 1/255 and audio to
/// float32 so the written files reload to identical values. With `time_warp` the utterances
/// have their raw, varying lengths; load_dataset canonicalises them.
GeneratedData generate_synthetic_pairs(const SyntheticConfig& cfg);

/// Writes <dir>/<split>.fsa, <split>-images.idx, <split>-labels.idx and manifest.json.
std::filesystem::path write_dataset(const GeneratedData& data, const std::filesystem::path& dir);

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Reads every split named in the manifest (relative paths resolve against the manifest's
/// directory), normalises pixels, canonicalises sequences, checks split disjointness and
/// rebuilds the pairing.
LoadedData load_dataset(const std::filesystem::path& manifest_path);

}  // namespace mmos
