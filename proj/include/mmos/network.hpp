#pragma once

#include "mmos/data_model.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mmos {

enum class LayerKind { affine, relu, conv2d, maxpool2d, flatten };

/// Channel-major activation shape of one example. Affine outputs are {units, 1, 1}.
struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;

  std::ptrdiff_t size() const noexcept { return std::ptrdiff_t{channels} * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int units = 0;
  int filters = 0;
  int kernel_height = 0;
  int kernel_width = 0;
  int pool_height = 0;
  int pool_width = 0;

  static LayerSpec affine(int units) { return {.kind = LayerKind::affine, .units = units}; }
  static LayerSpec relu() { return {.kind = LayerKind::relu}; }
  static LayerSpec flatten() { return {.kind = LayerKind::flatten}; }
  static LayerSpec conv2d(int filters, int kernel_height, int kernel_width) {
    return {.kind = LayerKind::conv2d, .filters = filters, .kernel_height = kernel_height, .kernel_width = kernel_width};
  }
  static LayerSpec maxpool2d(int pool_height, int pool_width) {
    return {.kind = LayerKind::maxpool2d, .pool_height = pool_height, .pool_width = pool_width};
  }
};

/// A closed feed-forward stack. `embedding_layer` indexes the layer whose output is the
/// embedding used for nearest-neighbour matching.
struct NetworkSpec {
  Shape input;
  std::vector<LayerSpec> layers;
  std::size_t embedding_layer = 0;

  /// Output shape of every layer. Throws InvalidInput when consecutive layers do not compose.
  std::vector<Shape> output_shapes() const;
  Shape output_shape() const { return output_shapes().back(); }
  Shape embedding_shape() const { return output_shapes().at(embedding_layer); }

  /// One-line textual form; the checkpoint digest is computed over it.
  std::string canonical() const;
  std::uint64_t digest() const;
};

/// Weights for one layer. Parameter-free layers hold empty tensors.
///   affine: weight is units x in, bias is units
///   conv2d: weight is filters x (channels * kh * kw), bias is filters
struct LayerParams {
  Matrix weight;
  Vector bias;
};

struct NetworkParams {
  std::vector<LayerParams> layers;

  std::size_t parameter_count() const;
  bool all_finite() const;
  /// Same layout, all zeros.
  NetworkParams zeros_like() const;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)) per layer, biases zero.
NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed);

/// Stored forward state. outputs[0] is the input batch; outputs[i + 1] is the output of layer i.
struct Activations {
  std::vector<Matrix> outputs;
  std::vector<std::vector<std::int32_t>> pool_argmax;  // per layer, per output element

  const Matrix& result() const { return outputs.back(); }
};

/// Runs the batch (one example per row) through layers [0, layer_count). Pass
/// `layer_count = npos` for the whole network.
Activations forward(const NetworkParams& params, const NetworkSpec& spec, const Matrix& batch,
                    std::size_t layer_count = static_cast<std::size_t>(-1));

struct Gradients {
  NetworkParams params;
  Matrix input;
};

/// Backpropagates `output_gradient` (d loss / d final stored output) through the layers that
/// produced `activations`.
Gradients backward(const NetworkParams& params, const NetworkSpec& spec, const Activations& activations,
                   const Matrix& output_gradient);

/// Activations of the designated embedding layer.
Matrix embed(const NetworkParams& params, const NetworkSpec& spec, const Matrix& batch);

struct LossAndGradient {
  double loss = 0.0;
  Matrix gradient;
};

/// Mean over rows of -log softmax(logits)[label]; gradient is (softmax - onehot) / n.
LossAndGradient softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

struct AdamConfig {
  double base_learning_rate = 1e-3;
  double decay = 0.96;  // per completed epoch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  int completed_epochs = 0;
  NetworkParams first_moment;
  NetworkParams second_moment;

  double learning_rate() const;
};

AdamState make_adam_state(const NetworkParams& params, const AdamConfig& config = {});

/// One bias-corrected Adam update. Throws TrainingDiverged on a non-finite gradient or a
/// non-finite parameter after the update.
void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state);

/// Binary checkpoint: "MMCK", u32 version, u64 spec digest, u32 tensor count, then per tensor
/// u32 rank, u32 dims, little-endian float64 values. All integers little-endian.
void write_checkpoint(std::ostream& out, const NetworkSpec& spec, const NetworkParams& params);
void write_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const NetworkParams& params);
/// Throws ConsistencyError if the stored digest differs from `spec.digest()`.
NetworkParams read_checkpoint(std::istream& in, const NetworkSpec& spec);
NetworkParams read_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec);

namespace presets {

/// Architectures at full benchmark scale.
NetworkSpec speech_cnn(int feature_dim = 39, int frames = 120, int classes = 5534);
NetworkSpec vision_cnn(int height = 28, int width = 28, int classes = 964);
NetworkSpec ffnn(Shape input, int classes, int hidden_units = 512, int hidden_layers = 3);

/// Desk-scale classifier: hidden affine+relu blocks and a softmax head; embedding is the last
/// hidden relu. `classes == 0` drops the head.
NetworkSpec small_ffnn_classifier(Shape input, int classes, int hidden_units = 128, int hidden_layers = 2);
/// Desk-scale conv classifier.
NetworkSpec small_cnn_classifier(Shape input, int classes, int filters = 16, int hidden_units = 128);
/// Desk-scale Siamese embedding: affine+relu then a final linear embedding layer.
NetworkSpec small_siamese(Shape input, int hidden_units = 128, int embedding_units = 64);
/// Desk-scale Siamese CNN: the conv front of small_cnn_classifier, affine+relu, then a linear
/// embedding layer.
NetworkSpec small_siamese_cnn(Shape input, int filters = 16, int hidden_units = 128, int embedding_units = 64);

}  // namespace presets

}  // namespace mmos
