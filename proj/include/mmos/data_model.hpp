#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>

namespace mmos {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// A variable-length sequence of per-frame feature vectors (one frame per row).
struct FeatureSequence {
  Matrix frames;  // T x d
  int class_id = 0;
  int speaker_id = 0;

  std::ptrdiff_t frame_count() const noexcept { return frames.rows(); }
  std::ptrdiff_t dim() const noexcept { return frames.cols(); }
};

/// A fixed-size 2-D grid of pixel intensities.
struct ImageGrid {
  Matrix pixels;  // H x W
  int class_id = 0;
  std::optional<int> writer_id;

  std::ptrdiff_t height() const noexcept { return pixels.rows(); }
  std::ptrdiff_t width() const noexcept { return pixels.cols(); }
};

/// One speech item and one image item of the same class.
struct PairedExample {
  FeatureSequence audio;
  ImageGrid image;
};

/// Centre zero-pads or crops `seq` to exactly `target_frames` frames.
///
/// When the pad total is odd the extra zero frame goes after the content; when the crop
/// total is odd the extra frame is removed from the end. Throws InvalidInput for an empty
/// sequence, zero-dimension frames, or a non-positive target.
FeatureSequence canonicalize_sequence(const FeatureSequence& seq, std::ptrdiff_t target_frames);

/// Divides every pixel by `source_max`. Throws InvalidInput if any raw pixel lies outside
/// [0, source_max].
ImageGrid normalize_pixels(const ImageGrid& img, double source_max);

/// Maps every pixel p to 1 - p. Requires pixels in [0, 1].
ImageGrid invert_pixels(const ImageGrid& img);

/// Row-major flattening; length H*W.
Vector flatten(const ImageGrid& img);
ImageGrid unflatten(const Vector& values, std::ptrdiff_t height, std::ptrdiff_t width, int class_id = 0);

/// Network input layout for a sequence: feature-major (d x T), so a 2-D filter spanning the
/// full feature axis slides along time.
Vector sequence_to_input(const FeatureSequence& seq);

}  // namespace mmos
