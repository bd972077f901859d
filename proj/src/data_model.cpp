#include "mmos/data_model.hpp"

#include "mmos/error.hpp"

#include <string>

namespace mmos {

FeatureSequence canonicalize_sequence(const FeatureSequence& seq, std::ptrdiff_t target_frames) {
  if (target_frames < 1) throw InvalidInput("canonicalize_sequence: target_frames must be >= 1");
  if (seq.dim() < 1) throw InvalidInput("canonicalize_sequence: frames have zero dimension");
  if (seq.frame_count() < 1) throw InvalidInput("canonicalize_sequence: empty sequence");

  FeatureSequence out;
  out.class_id = seq.class_id;
  out.speaker_id = seq.speaker_id;
  const std::ptrdiff_t length = seq.frame_count();
  if (length == target_frames) {
    out.frames = seq.frames;
  } else if (length < target_frames) {
    const std::ptrdiff_t before = (target_frames - length) / 2;
    out.frames = Matrix::Zero(target_frames, seq.dim());
    out.frames.middleRows(before, length) = seq.frames;
  } else {
    const std::ptrdiff_t before = (length - target_frames) / 2;
    out.frames = seq.frames.middleRows(before, target_frames);
  }
  return out;
}

namespace {

void check_range(const ImageGrid& img, double hi, const char* op) {
  for (std::ptrdiff_t i = 0; i < img.pixels.size(); ++i) {
    const double p = img.pixels.data()[i];
    if (!(p >= 0.0 && p <= hi)) {
      throw InvalidInput(std::string(op) + ": pixel " + std::to_string(p) + " outside [0, " +
                         std::to_string(hi) + "]");
    }
  }
}

}  // namespace

ImageGrid normalize_pixels(const ImageGrid& img, double source_max) {
  if (!(source_max > 0.0)) throw InvalidInput("normalize_pixels: source_max must be positive");
  check_range(img, source_max, "normalize_pixels");
  ImageGrid out = img;
  out.pixels /= source_max;
  return out;
}

ImageGrid invert_pixels(const ImageGrid& img) {
  check_range(img, 1.0, "invert_pixels");
  ImageGrid out = img;
  out.pixels = (1.0 - img.pixels.array()).matrix();
  return out;
}

Vector flatten(const ImageGrid& img) {
  return Eigen::Map<const Vector>(img.pixels.data(), img.pixels.size());
}

ImageGrid unflatten(const Vector& values, std::ptrdiff_t height, std::ptrdiff_t width, int class_id) {
  if (height < 1 || width < 1 || values.size() != height * width) {
    throw InvalidInput("unflatten: vector length does not match " + std::to_string(height) + "x" +
                       std::to_string(width));
  }
  ImageGrid out;
  out.class_id = class_id;
  out.pixels = Eigen::Map<const Matrix>(values.data(), height, width);
  return out;
}

Vector sequence_to_input(const FeatureSequence& seq) {
  const Matrix transposed = seq.frames.transpose();
  return Eigen::Map<const Vector>(transposed.data(), transposed.size());
}

}  // namespace mmos
