#include "mmos/network.hpp"

#include "binary_io.hpp"
#include "mmos/error.hpp"
#include "mmos/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace mmos {

namespace {

std::string shape_text(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

bool has_params(LayerKind kind) { return kind == LayerKind::affine || kind == LayerKind::conv2d; }

}  // namespace

std::vector<Shape> NetworkSpec::output_shapes() const {
  if (input.channels < 1 || input.height < 1 || input.width < 1) {
    throw InvalidInput("network: input shape " + shape_text(input) + " is empty");
  }
  if (layers.empty()) throw InvalidInput("network: no layers");
  if (embedding_layer >= layers.size()) throw InvalidInput("network: embedding layer index out of range");
  std::vector<Shape> shapes;
  shapes.reserve(layers.size());
  Shape current = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    const std::string where = "network layer " + std::to_string(i) + ": ";
    switch (layer.kind) {
      case LayerKind::affine:
        if (layer.units < 1) throw InvalidInput(where + "affine needs units >= 1");
        current = {layer.units, 1, 1};
        break;
      case LayerKind::relu:
        break;
      case LayerKind::flatten:
        current = {static_cast<int>(current.size()), 1, 1};
        break;
      case LayerKind::conv2d:
        if (layer.filters < 1 || layer.kernel_height < 1 || layer.kernel_width < 1 ||
            layer.kernel_height > current.height || layer.kernel_width > current.width) {
          throw InvalidInput(where + "conv2d kernel does not fit input " + shape_text(current));
        }
        current = {layer.filters, current.height - layer.kernel_height + 1, current.width - layer.kernel_width + 1};
        break;
      case LayerKind::maxpool2d:
        if (layer.pool_height < 1 || layer.pool_width < 1 || layer.pool_height > current.height ||
            layer.pool_width > current.width) {
          throw InvalidInput(where + "maxpool2d window does not fit input " + shape_text(current));
        }
        current = {current.channels, current.height / layer.pool_height, current.width / layer.pool_width};
        break;
    }
    shapes.push_back(current);
  }
  return shapes;
}

std::string NetworkSpec::canonical() const {
  std::ostringstream out;
  out << "in=" << shape_text(input);
  for (const LayerSpec& layer : layers) {
    switch (layer.kind) {
      case LayerKind::affine: out << ";affine:" << layer.units; break;
      case LayerKind::relu: out << ";relu"; break;
      case LayerKind::flatten: out << ";flatten"; break;
      case LayerKind::conv2d:
        out << ";conv2d:" << layer.filters << ':' << layer.kernel_height << 'x' << layer.kernel_width;
        break;
      case LayerKind::maxpool2d: out << ";maxpool2d:" << layer.pool_height << 'x' << layer.pool_width; break;
    }
  }
  out << ";embed=" << embedding_layer;
  return out.str();
}

std::uint64_t NetworkSpec::digest() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const char c : canonical()) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

bool NetworkParams::all_finite() const {
  return std::all_of(layers.begin(), layers.end(),
                     [](const LayerParams& l) { return l.weight.allFinite() && l.bias.allFinite(); });
}

NetworkParams NetworkParams::zeros_like() const {
  NetworkParams out;
  out.layers.reserve(layers.size());
  for (const auto& layer : layers) {
    out.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())});
  }
  return out;
}

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
  const auto shapes = spec.output_shapes();
  Rng rng{seed};
  NetworkParams params;
  Shape in = spec.input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    LayerParams lp;
    if (layer.kind == LayerKind::affine) {
      const double limit = std::sqrt(6.0 / static_cast<double>(in.size() + layer.units));
      std::uniform_real_distribution<double> dist(-limit, limit);
      lp.weight = Matrix(layer.units, in.size());
      for (std::ptrdiff_t k = 0; k < lp.weight.size(); ++k) lp.weight.data()[k] = dist(rng);
      lp.bias = Vector::Zero(layer.units);
    } else if (layer.kind == LayerKind::conv2d) {
      const int area = layer.kernel_height * layer.kernel_width;
      const double limit = std::sqrt(6.0 / static_cast<double>(in.channels * area + layer.filters * area));
      std::uniform_real_distribution<double> dist(-limit, limit);
      lp.weight = Matrix(layer.filters, in.channels * area);
      for (std::ptrdiff_t k = 0; k < lp.weight.size(); ++k) lp.weight.data()[k] = dist(rng);
      lp.bias = Vector::Zero(layer.filters);
    }
    params.layers.push_back(std::move(lp));
    in = shapes[i];
  }
  return params;
}

namespace {

void check_params(const NetworkParams& params, const NetworkSpec& spec) {
  if (params.layers.size() != spec.layers.size()) {
    throw InvalidInput("network: parameter set has " + std::to_string(params.layers.size()) + " layers, spec has " +
                       std::to_string(spec.layers.size()));
  }
}

// Unfolds one example (channel-major) into a (positions x channels*kh*kw) patch matrix.
Matrix im2col(const double* input, const Shape& in, const LayerSpec& layer, const Shape& out) {
  const int kh = layer.kernel_height;
  const int kw = layer.kernel_width;
  Matrix cols(std::ptrdiff_t{out.height} * out.width, std::ptrdiff_t{in.channels} * kh * kw);
  for (int oy = 0; oy < out.height; ++oy) {
    for (int ox = 0; ox < out.width; ++ox) {
      double* row = cols.data() + (std::ptrdiff_t{oy} * out.width + ox) * cols.cols();
      for (int c = 0; c < in.channels; ++c) {
        const double* plane = input + std::ptrdiff_t{c} * in.height * in.width;
        for (int ky = 0; ky < kh; ++ky) {
          const double* src = plane + std::ptrdiff_t{oy + ky} * in.width + ox;
          std::copy(src, src + kw, row);
          row += kw;
        }
      }
    }
  }
  return cols;
}

void col2im_add(const Matrix& cols, const Shape& in, const LayerSpec& layer, const Shape& out, double* input_grad) {
  const int kh = layer.kernel_height;
  const int kw = layer.kernel_width;
  for (int oy = 0; oy < out.height; ++oy) {
    for (int ox = 0; ox < out.width; ++ox) {
      const double* row = cols.data() + (std::ptrdiff_t{oy} * out.width + ox) * cols.cols();
      for (int c = 0; c < in.channels; ++c) {
        double* plane = input_grad + std::ptrdiff_t{c} * in.height * in.width;
        for (int ky = 0; ky < kh; ++ky) {
          double* dst = plane + std::ptrdiff_t{oy + ky} * in.width + ox;
          for (int kx = 0; kx < kw; ++kx) dst[kx] += row[kx];
          row += kw;
        }
      }
    }
  }
}

Matrix conv_forward(const Matrix& x, const LayerParams& lp, const Shape& in, const LayerSpec& layer, const Shape& out) {
  const std::ptrdiff_t positions = std::ptrdiff_t{out.height} * out.width;
  Matrix y(x.rows(), out.size());
  for (std::ptrdiff_t n = 0; n < x.rows(); ++n) {
    const Matrix cols = im2col(x.data() + n * x.cols(), in, layer, out);
    // (filters x positions), stored filter-major to match the channel-major layout.
    Matrix response = lp.weight * cols.transpose();
    response.colwise() += lp.bias;
    std::copy(response.data(), response.data() + out.channels * positions, y.data() + n * y.cols());
  }
  return y;
}

Matrix maxpool_forward(const Matrix& x, const Shape& in, const LayerSpec& layer, const Shape& out,
                       std::vector<std::int32_t>& argmax) {
  Matrix y(x.rows(), out.size());
  argmax.assign(static_cast<std::size_t>(x.rows() * out.size()), 0);
  for (std::ptrdiff_t n = 0; n < x.rows(); ++n) {
    const double* src = x.data() + n * x.cols();
    for (int c = 0; c < out.channels; ++c) {
      for (int oy = 0; oy < out.height; ++oy) {
        for (int ox = 0; ox < out.width; ++ox) {
          std::int32_t best = -1;
          double best_value = -std::numeric_limits<double>::infinity();
          for (int py = 0; py < layer.pool_height; ++py) {
            for (int px = 0; px < layer.pool_width; ++px) {
              const int iy = oy * layer.pool_height + py;
              const int ix = ox * layer.pool_width + px;
              const auto idx = static_cast<std::int32_t>((c * in.height + iy) * in.width + ix);
              if (best < 0 || src[idx] > best_value) {
                best = idx;
                best_value = src[idx];
              }
            }
          }
          const std::ptrdiff_t o = (std::ptrdiff_t{c} * out.height + oy) * out.width + ox;
          y(n, o) = best_value;
          argmax[static_cast<std::size_t>(n * out.size() + o)] = best;
        }
      }
    }
  }
  return y;
}

}  // namespace

Activations forward(const NetworkParams& params, const NetworkSpec& spec, const Matrix& batch, std::size_t layer_count) {
  check_params(params, spec);
  const auto shapes = spec.output_shapes();
  if (batch.cols() != spec.input.size()) {
    throw InvalidInput("network: batch has " + std::to_string(batch.cols()) + " columns, expected " +
                       std::to_string(spec.input.size()));
  }
  layer_count = std::min(layer_count, spec.layers.size());
  Activations acts;
  acts.outputs.reserve(layer_count + 1);
  acts.pool_argmax.resize(layer_count);
  acts.outputs.push_back(batch);
  Shape in = spec.input;
  for (std::size_t i = 0; i < layer_count; ++i) {
    const LayerSpec& layer = spec.layers[i];
    const LayerParams& lp = params.layers[i];
    const Matrix& x = acts.outputs.back();
    Matrix y;
    switch (layer.kind) {
      case LayerKind::affine:
        if (lp.weight.rows() != layer.units || lp.weight.cols() != x.cols() || lp.bias.size() != layer.units) {
          throw InvalidInput("network layer " + std::to_string(i) + ": affine parameter shape mismatch");
        }
        y = x * lp.weight.transpose();
        y.rowwise() += lp.bias.transpose();
        break;
      case LayerKind::relu:
        y = x.cwiseMax(0.0);
        break;
      case LayerKind::flatten:
        y = x;
        break;
      case LayerKind::conv2d:
        if (lp.weight.rows() != layer.filters ||
            lp.weight.cols() != std::ptrdiff_t{in.channels} * layer.kernel_height * layer.kernel_width) {
          throw InvalidInput("network layer " + std::to_string(i) + ": conv2d parameter shape mismatch");
        }
        y = conv_forward(x, lp, in, layer, shapes[i]);
        break;
      case LayerKind::maxpool2d:
        y = maxpool_forward(x, in, layer, shapes[i], acts.pool_argmax[i]);
        break;
    }
    acts.outputs.push_back(std::move(y));
    in = shapes[i];
  }
  return acts;
}

Gradients backward(const NetworkParams& params, const NetworkSpec& spec, const Activations& activations,
                   const Matrix& output_gradient) {
  check_params(params, spec);
  const auto shapes = spec.output_shapes();
  if (activations.outputs.empty() || activations.outputs.size() - 1 > spec.layers.size()) {
    throw InvalidInput("network backward: activations do not match the network");
  }
  const Matrix& result = activations.result();
  if (output_gradient.rows() != result.rows() || output_gradient.cols() != result.cols()) {
    throw InvalidInput("network backward: output gradient is " + std::to_string(output_gradient.rows()) + "x" +
                       std::to_string(output_gradient.cols()) + ", stored output is " +
                       std::to_string(result.rows()) + "x" + std::to_string(result.cols()));
  }
  const std::size_t depth = activations.outputs.size() - 1;
  Gradients grads;
  grads.params = params.zeros_like();
  Matrix g = output_gradient;
  for (std::size_t li = depth; li-- > 0;) {
    const LayerSpec& layer = spec.layers[li];
    const LayerParams& lp = params.layers[li];
    const Matrix& x = activations.outputs[li];
    const Shape in = li == 0 ? spec.input : shapes[li - 1];
    const Shape out = shapes[li];
    if (x.cols() != in.size() || activations.outputs[li + 1].cols() != out.size()) {
      throw InvalidInput("network backward: stale activations at layer " + std::to_string(li));
    }
    LayerParams& dp = grads.params.layers[li];
    switch (layer.kind) {
      case LayerKind::affine:
        dp.weight = g.transpose() * x;
        dp.bias = g.colwise().sum().transpose();
        g = g * lp.weight;
        break;
      case LayerKind::relu:
        g = (x.array() > 0.0).select(g, 0.0);
        break;
      case LayerKind::flatten:
        break;
      case LayerKind::conv2d: {
        const std::ptrdiff_t positions = std::ptrdiff_t{out.height} * out.width;
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        for (std::ptrdiff_t n = 0; n < x.rows(); ++n) {
          const Matrix cols = im2col(x.data() + n * x.cols(), in, layer, out);
          const Eigen::Map<const Matrix> gs(g.data() + n * g.cols(), out.channels, positions);
          dp.weight.noalias() += gs * cols;
          dp.bias += gs.rowwise().sum();
          const Matrix dcols = gs.transpose() * lp.weight;
          col2im_add(dcols, in, layer, out, dx.data() + n * dx.cols());
        }
        g = std::move(dx);
        break;
      }
      case LayerKind::maxpool2d: {
        const auto& argmax = activations.pool_argmax[li];
        if (argmax.size() != static_cast<std::size_t>(g.size())) {
          throw InvalidInput("network backward: stale pooling state at layer " + std::to_string(li));
        }
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        for (std::ptrdiff_t n = 0; n < g.rows(); ++n) {
          for (std::ptrdiff_t o = 0; o < g.cols(); ++o) {
            dx(n, argmax[static_cast<std::size_t>(n * g.cols() + o)]) += g(n, o);
          }
        }
        g = std::move(dx);
        break;
      }
    }
  }
  grads.input = std::move(g);
  return grads;
}

Matrix embed(const NetworkParams& params, const NetworkSpec& spec, const Matrix& batch) {
  Activations acts = forward(params, spec, batch, spec.embedding_layer + 1);
  return std::move(acts.outputs.back());
}

LossAndGradient softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  const std::ptrdiff_t n = logits.rows();
  const std::ptrdiff_t classes = logits.cols();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw InvalidInput("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(n) + " rows");
  }
  if (n == 0) throw InvalidInput("softmax_cross_entropy: empty batch");
  LossAndGradient out;
  out.gradient.resize(n, classes);
  double total = 0.0;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= classes) {
      throw InvalidInput("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                         std::to_string(classes) + ")");
    }
    const double peak = logits.row(i).maxCoeff();
    const auto shifted = (logits.row(i).array() - peak).eval();
    const double log_sum = std::log(shifted.exp().sum());
    total += log_sum - shifted(label);
    out.gradient.row(i) = (shifted - log_sum).exp().matrix();
    out.gradient(i, label) -= 1.0;
  }
  out.gradient /= static_cast<double>(n);
  out.loss = total / static_cast<double>(n);
  return out;
}

double AdamState::learning_rate() const {
  return config.base_learning_rate * std::pow(config.decay, completed_epochs);
}

AdamState make_adam_state(const NetworkParams& params, const AdamConfig& config) {
  AdamState state;
  state.config = config;
  state.first_moment = params.zeros_like();
  state.second_moment = params.zeros_like();
  return state;
}

void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state) {
  if (grads.layers.size() != params.layers.size() || state.first_moment.layers.size() != params.layers.size()) {
    throw InvalidInput("adam_step: parameter, gradient and moment layouts differ");
  }
  if (!grads.all_finite()) throw TrainingDiverged("adam_step: non-finite gradient at step " + std::to_string(state.step + 1));
  ++state.step;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const double lr = state.learning_rate();
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    if (p.size() != g.size() || p.size() != m.size()) throw InvalidInput("adam_step: tensor shape mismatch");
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + c.epsilon);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& p = params.layers[i];
    const auto& g = grads.layers[i];
    update(p.weight, g.weight, state.first_moment.layers[i].weight, state.second_moment.layers[i].weight);
    update(p.bias, g.bias, state.first_moment.layers[i].bias, state.second_moment.layers[i].bias);
  }
  if (!params.all_finite()) throw TrainingDiverged("adam_step: parameters became non-finite at step " + std::to_string(state.step));
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 2;

struct TensorRef {
  std::vector<std::uint32_t> dims;
  double* data;
  std::size_t size;
};

std::vector<TensorRef> tensors_of(NetworkParams& params, const NetworkSpec& spec) {
  std::vector<TensorRef> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!has_params(spec.layers[i].kind)) continue;
    auto& lp = params.layers[i];
    out.push_back({{static_cast<std::uint32_t>(lp.weight.rows()), static_cast<std::uint32_t>(lp.weight.cols())},
                   lp.weight.data(),
                   static_cast<std::size_t>(lp.weight.size())});
    out.push_back({{static_cast<std::uint32_t>(lp.bias.size())}, lp.bias.data(), static_cast<std::size_t>(lp.bias.size())});
  }
  return out;
}

}  // namespace

void write_checkpoint(std::ostream& out, const NetworkSpec& spec, const NetworkParams& params) {
  check_params(params, spec);
  NetworkParams copy = params;
  const auto tensors = tensors_of(copy, spec);
  detail::ByteWriter w;
  w.tag("MMCK");
  w.u32_le(kCheckpointVersion);
  w.u64_le(spec.digest());
  w.u32_le(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.u32_le(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.u32_le(d);
    for (std::size_t k = 0; k < t.size; ++k) w.f64_le(t.data[k]);
  }
  out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
}

void write_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const NetworkParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open checkpoint " + path.string() + " for writing");
  write_checkpoint(out, spec, params);
}

NetworkParams read_checkpoint(std::istream& in, const NetworkSpec& spec) {
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  detail::ByteReader r(bytes, "checkpoint");
  if (!r.tag_equals("MMCK")) r.fail_at("bad magic", 0);
  if (const auto version = r.u32_le(); version != kCheckpointVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  if (const auto digest = r.u64_le(); digest != spec.digest()) {
    throw ConsistencyError("checkpoint was written for a different network (" + spec.canonical() + ")");
  }
  NetworkParams params = init_params(spec, 0);
  auto tensors = tensors_of(params, spec);
  if (r.u32_le() != tensors.size()) r.fail("tensor count does not match the network");
  for (auto& t : tensors) {
    if (r.u32_le() != t.dims.size()) r.fail("tensor rank mismatch");
    for (auto d : t.dims) {
      if (r.u32_le() != d) r.fail("tensor dimension mismatch");
    }
    for (std::size_t k = 0; k < t.size; ++k) {
      const double v = r.f64_le();
      if (!std::isfinite(v)) r.fail("non-finite parameter");
      t.data[k] = v;
    }
  }
  if (r.remaining() != 0) r.fail("trailing bytes");
  return params;
}

NetworkParams read_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open checkpoint " + path.string());
  return read_checkpoint(in, spec);
}

namespace presets {

NetworkSpec speech_cnn(int feature_dim, int frames, int classes) {
  NetworkSpec spec;
  spec.input = {1, feature_dim, frames};
  spec.layers = {LayerSpec::conv2d(128, feature_dim, 9), LayerSpec::relu(), LayerSpec::maxpool2d(1, 3),
                 LayerSpec::conv2d(128, 1, 10), LayerSpec::relu()};
  // Pool over whatever remains of the time axis (28 units at 120 frames).
  const Shape remaining = NetworkSpec{spec.input, spec.layers, 0}.output_shape();
  spec.layers.push_back(LayerSpec::maxpool2d(1, remaining.width));
  spec.layers.push_back(LayerSpec::flatten());
  spec.layers.push_back(LayerSpec::affine(2048));
  spec.layers.push_back(LayerSpec::relu());
  spec.embedding_layer = spec.layers.size() - 1;
  if (classes > 0) spec.layers.push_back(LayerSpec::affine(classes));
  return spec;
}

NetworkSpec vision_cnn(int height, int width, int classes) {
  NetworkSpec spec;
  spec.input = {1, height, width};
  spec.layers = {LayerSpec::conv2d(32, 3, 3),  LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
                 LayerSpec::conv2d(64, 3, 3),  LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
                 LayerSpec::conv2d(128, 3, 3), LayerSpec::relu(), LayerSpec::flatten(),
                 LayerSpec::affine(2048),      LayerSpec::relu(), LayerSpec::affine(1024)};
  spec.embedding_layer = spec.layers.size() - 1;
  if (classes > 0) spec.layers.push_back(LayerSpec::affine(classes));
  return spec;
}

NetworkSpec ffnn(Shape input, int classes, int hidden_units, int hidden_layers) {
  return small_ffnn_classifier(input, classes, hidden_units, hidden_layers);
}

NetworkSpec small_ffnn_classifier(Shape input, int classes, int hidden_units, int hidden_layers) {
  NetworkSpec spec;
  spec.input = input;
  for (int i = 0; i < hidden_layers; ++i) {
    spec.layers.push_back(LayerSpec::affine(hidden_units));
    spec.layers.push_back(LayerSpec::relu());
  }
  spec.embedding_layer = spec.layers.size() - 1;
  if (classes > 0) spec.layers.push_back(LayerSpec::affine(classes));
  return spec;
}

namespace {

// Conv, relu, pool and flatten. Inputs wider than tall are sequences (features x frames): the
// filter then spans the feature axis.
std::vector<LayerSpec> conv_front(Shape input, int filters) {
  if (input.width > input.height) {
    return {LayerSpec::conv2d(filters, input.height, 3), LayerSpec::relu(), LayerSpec::maxpool2d(1, 2),
            LayerSpec::flatten()};
  }
  return {LayerSpec::conv2d(filters, 3, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2), LayerSpec::flatten()};
}

}  // namespace

NetworkSpec small_cnn_classifier(Shape input, int classes, int filters, int hidden_units) {
  NetworkSpec spec;
  spec.input = input;
  spec.layers = conv_front(input, filters);
  spec.layers.push_back(LayerSpec::affine(hidden_units));
  spec.layers.push_back(LayerSpec::relu());
  spec.embedding_layer = spec.layers.size() - 1;
  if (classes > 0) spec.layers.push_back(LayerSpec::affine(classes));
  return spec;
}

NetworkSpec small_siamese(Shape input, int hidden_units, int embedding_units) {
  NetworkSpec spec;
  spec.input = input;
  spec.layers = {LayerSpec::affine(hidden_units), LayerSpec::relu(), LayerSpec::affine(embedding_units)};
  spec.embedding_layer = spec.layers.size() - 1;
  return spec;
}

NetworkSpec small_siamese_cnn(Shape input, int filters, int hidden_units, int embedding_units) {
  NetworkSpec spec;
  spec.input = input;
  spec.layers = conv_front(input, filters);
  spec.layers.push_back(LayerSpec::affine(hidden_units));
  spec.layers.push_back(LayerSpec::relu());
  spec.layers.push_back(LayerSpec::affine(embedding_units));
  spec.embedding_layer = spec.layers.size() - 1;
  return spec;
}

}  // namespace presets

}  // namespace mmos
