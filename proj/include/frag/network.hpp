// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "frag/error.hpp"
#include "frag/tensor.hpp"

namespace frag {

enum class LayerKind { Conv3x3ReluPool, DenseRelu, DenseOutput };

inline std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv3x3ReluPool: return "conv3x3_relu_maxpool2";
    case LayerKind::DenseRelu: return "dense_relu";
    case LayerKind::DenseOutput: return "dense_output";
  }
  return "unknown";
}

inline LayerKind parse_layer_kind(std::string_view name) {
  if (name == "conv3x3_relu_maxpool2") return LayerKind::Conv3x3ReluPool;
  if (name == "dense_relu") return LayerKind::DenseRelu;
  if (name == "dense_output") return LayerKind::DenseOutput;
  throw FormatError("unknown layer kind '" + std::string(name) + "'");
}

/// One parameterized layer.
///
/// Conv layers hold weights as (filters, in_channels, 3, 3). Dense layers
/// hold weights as (in_units, out_units) so a batch of row vectors maps
/// through a single matmul. Bias has one entry per output channel or unit.
struct Layer {
  LayerKind kind = LayerKind::DenseOutput;
  Tensor weight;
  Tensor bias;

  std::size_t out_extent() const { return bias.size(); }
  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Ordered layer stack f: R^n -> R^k. Layers 1..L are hidden, the final
/// layer is the dense output. Layer index 0 denotes the input itself.
struct Network {
  Shape input_shape;
  std::size_t classes = 0;
  std::vector<Layer> layers;
  std::map<std::string, std::string> metadata;

  std::size_t hidden_layers() const noexcept { return layers.empty() ? 0 : layers.size() - 1; }

  /// Shape of the representation at layer index `layer` (0 = input).
  Shape representation_shape(std::size_t layer) const {
    if (layer > hidden_layers())
      throw LayerOutOfRange("layer " + std::to_string(layer) + " outside [0, " +
                            std::to_string(hidden_layers()) + "]");
    Shape shape = input_shape;
    for (std::size_t i = 0; i < layer; ++i) shape = output_shape(layers[i], shape);
    return shape;
  }

  std::size_t representation_size(std::size_t layer) const {
    return shape_size(representation_shape(layer));
  }

  static Shape output_shape(const Layer& layer, const Shape& in) {
    if (layer.kind == LayerKind::Conv3x3ReluPool)
      return {layer.weight.dim(0), (in[1] + 1) / 2, (in[2] + 1) / 2};
    return {layer.weight.dim(1)};
  }

  /// Throws FormatError when the layer stack breaks a structural invariant.
  void validate() const {
    if (input_shape.empty() || shape_size(input_shape) == 0)
      throw FormatError("network input shape is empty");
    if (layers.empty()) throw FormatError("network has no layers");
    if (classes < 1) throw FormatError("network class count must be positive");
    Shape shape = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Layer& l = layers[i];
      const bool last = i + 1 == layers.size();
      if ((l.kind == LayerKind::DenseOutput) != last)
        throw FormatError("exactly one dense_output layer is required and it must be last");
      if (l.kind == LayerKind::Conv3x3ReluPool) {
        if (shape.size() != 3 || l.weight.rank() != 4 || l.weight.dim(1) != shape[0] ||
            l.weight.dim(2) != 3 || l.weight.dim(3) != 3 || l.bias.size() != l.weight.dim(0))
          throw FormatError("conv layer " + std::to_string(i + 1) + " incompatible with input " +
                            shape_string(shape));
      } else {
        if (l.weight.rank() != 2 || l.weight.dim(0) != shape_size(shape) ||
            l.bias.size() != l.weight.dim(1))
          throw FormatError("dense layer " + std::to_string(i + 1) + " incompatible with input " +
                            shape_string(shape));
      }
      shape = output_shape(l, shape);
    }
    if (shape_size(shape) != classes)
      throw FormatError("output layer width " + std::to_string(shape_size(shape)) +
                        " differs from class count " + std::to_string(classes));
  }

  friend bool operator==(const Network&, const Network&) = default;
};

namespace detail {

inline Tensor apply_conv_layer(const Layer& layer, const Tensor& batch, const Shape& in_shape) {
  const std::size_t rows = batch.dim(0);
  const std::size_t in_size = shape_size(in_shape);
  const Shape out_shape = Network::output_shape(layer, in_shape);
  const std::size_t out_size = shape_size(out_shape);
  Tensor out({rows, out_size});
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<float> row(batch.data().begin() + static_cast<std::ptrdiff_t>(r * in_size),
                           batch.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * in_size));
    Tensor y = conv2d(Tensor(in_shape, std::move(row)), layer.weight, layer.bias);
    relu_inplace(y);
    Tensor pooled = maxpool2(y);
    std::copy(pooled.data().begin(), pooled.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(r * out_size));
  }
  return out;
}

inline Tensor apply_dense_layer(const Layer& layer, const Tensor& batch) {
  Tensor y = matmul(batch, layer.weight);
  add_row_bias(y, layer.bias);
  ensure_finite(y, "dense layer");
  if (layer.kind == LayerKind::DenseRelu) relu_inplace(y);
  return y;
}

}  // namespace detail

/// Runs layers (first, last] on a batch of flattened representations.
///
/// `batch` is (rows, size of representation `first`). Returns
/// (rows, size of representation `last`), where index hidden_layers()+1
/// means the logits.
inline Tensor run_layers(const Network& net, const Tensor& batch, std::size_t first,
                         std::size_t last) {
  const std::size_t depth = net.layers.size();
  if (first > net.hidden_layers() || last > depth || first > last)
    throw LayerOutOfRange("layer range (" + std::to_string(first) + ", " + std::to_string(last) +
                          "] invalid for a network with " + std::to_string(net.hidden_layers()) +
                          " hidden layers");
  require_rank(batch, 2, "run_layers");
  Shape shape = net.representation_shape(first);
  if (batch.dim(1) != shape_size(shape))
    throw ShapeMismatch("representation at layer " + std::to_string(first) + " has " +
                        std::to_string(shape_size(shape)) + " values, batch rows have " +
                        std::to_string(batch.dim(1)));
  Tensor current = batch;
  for (std::size_t i = first; i < last; ++i) {
    const Layer& layer = net.layers[i];
    if (layer.kind == LayerKind::Conv3x3ReluPool)
      current = detail::apply_conv_layer(layer, current, shape);
    else
      current = detail::apply_dense_layer(layer, current);
    shape = Network::output_shape(layer, shape);
  }
  return current;
}

namespace detail {
inline Tensor as_row(const Tensor& x, std::size_t expected, const char* where) {
  if (x.size() != expected)
    throw ShapeMismatch(std::string(where) + ": expected " + std::to_string(expected) +
                        " values, got " + shape_string(x.shape()));
  return x.reshaped({1, expected});
}
}  // namespace detail

/// Logits of the full network.
inline Tensor forward(const Network& net, const Tensor& x) {
  if (x.shape() != net.input_shape && !(x.rank() == 1 && x.size() == shape_size(net.input_shape)))
    throw ShapeMismatch("forward: input " + shape_string(x.shape()) + " does not match " +
                        shape_string(net.input_shape));
  Tensor row = detail::as_row(x, shape_size(net.input_shape), "forward");
  return run_layers(net, row, 0, net.layers.size()).flattened();
}

/// Flattened representation at layer `layer` (0 returns x unchanged).
inline Tensor activation_at(const Network& net, const Tensor& x, std::size_t layer) {
  if (layer > net.hidden_layers())
    throw LayerOutOfRange("activation_at: layer " + std::to_string(layer) + " exceeds " +
                          std::to_string(net.hidden_layers()));
  if (layer == 0) return x;
  Tensor row = detail::as_row(x, shape_size(net.input_shape), "activation_at");
  return run_layers(net, row, 0, layer).flattened();
}

/// Logits of the network with layers 0..layer removed, fed with z.
///
/// z may be flattened or carry the layer's spatial shape; flattened
/// vectors are read back in row-major (channel, row, column) order.
inline Tensor truncated_forward(const Network& net, const Tensor& z, std::size_t layer) {
  if (layer > net.hidden_layers())
    throw LayerOutOfRange("truncated_forward: layer " + std::to_string(layer) + " exceeds " +
                          std::to_string(net.hidden_layers()));
  Tensor row = detail::as_row(z, net.representation_size(layer), "truncated_forward");
  return run_layers(net, row, layer, net.layers.size()).flattened();
}

/// Predicted class per row of a batch of layer-`layer` representations.
inline std::vector<std::uint32_t> classify_batch(const Network& net, const Tensor& batch,
                                                 std::size_t layer) {
  Tensor logits = run_layers(net, batch, layer, net.layers.size());
  const std::size_t k = logits.dim(1);
  std::vector<std::uint32_t> out(logits.dim(0));
  for (std::size_t r = 0; r < out.size(); ++r)
    out[r] = static_cast<std::uint32_t>(argmax(logits.data().subspan(r * k, k)));
  return out;
}

// ---------------------------------------------------------------------------
// Parameter norms

inline double frobenius_norm(std::span<const float> p) {
  double s = 0.0;
  for (float v : p) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

inline double frobenius_norm(const Tensor& p) { return frobenius_norm(p.data()); }

inline double mean_abs(std::span<const float> p) {
  if (p.empty()) return 0.0;
  double s = 0.0;
  for (float v : p) s += std::fabs(static_cast<double>(v));
  return s / static_cast<double>(p.size());
}

inline double mean_abs(const Tensor& p) { return mean_abs(p.data()); }

inline double distance_from_init(const Tensor& final_params, const Tensor& init_params) {
  if (final_params.shape() != init_params.shape())
    throw ShapeMismatch("distance_from_init: shapes " + shape_string(final_params.shape()) +
                        " and " + shape_string(init_params.shape()) + " differ");
  double s = 0.0;
  for (std::size_t i = 0; i < final_params.size(); ++i) {
    const double d = static_cast<double>(final_params[i]) - init_params[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Norms over all parameters (weight and bias) of one layer.
struct LayerNorms {
  std::size_t layer = 0;  // 1-based; the output layer is hidden_layers()+1
  double frobenius = 0.0;
  double mean_abs = 0.0;
  double distance_from_init = 0.0;
};

inline Tensor layer_parameters(const Layer& layer) {
  std::vector<float> all(layer.weight.values());
  all.insert(all.end(), layer.bias.values().begin(), layer.bias.values().end());
  return Tensor::vector(std::move(all));
}

inline std::vector<LayerNorms> layer_norms(const Network& trained, const Network& init) {
  if (trained.layers.size() != init.layers.size())
    throw ShapeMismatch("layer_norms: networks have different depth");
  std::vector<LayerNorms> out;
  for (std::size_t i = 0; i < trained.layers.size(); ++i) {
    const Tensor p = layer_parameters(trained.layers[i]);
    const Tensor p0 = layer_parameters(init.layers[i]);
    out.push_back({i + 1, frobenius_norm(p), mean_abs(p), distance_from_init(p, p0)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Construction

namespace detail {
inline Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const float limit = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
  std::uniform_real_distribution<float> dist(-limit, limit);
  for (float& v : t.data()) v = dist(rng);
  return t;
}
}  // namespace detail

/// Dense ReLU stack with He-uniform weights and zero biases.
inline Network make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                        std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Network net;
  net.input_shape = {input_dim};
  net.classes = classes;
  std::size_t in = input_dim;
  for (std::size_t width : hidden) {
    net.layers.push_back({LayerKind::DenseRelu, detail::he_uniform({in, width}, in, rng), Tensor({width})});
    in = width;
  }
  net.layers.push_back(
      {LayerKind::DenseOutput, detail::he_uniform({in, classes}, in, rng), Tensor({classes})});
  net.validate();
  return net;
}

/// Conv family: four conv3x3+relu+maxpool2 layers with [k, 2k, 4k, 8k]
/// channels, one dense ReLU layer, and the dense output layer.
inline Network make_cnn(const Shape& input_shape, std::size_t width_multiplier,
                        std::size_t dense_units, std::size_t classes, std::uint64_t seed) {
  if (input_shape.size() != 3) throw ShapeMismatch("make_cnn: input must be (C, H, W)");
  std::mt19937_64 rng(seed);
  Network net;
  net.input_shape = input_shape;
  net.classes = classes;
  Shape shape = input_shape;
  for (std::size_t mult : {1u, 2u, 4u, 8u}) {
    const std::size_t filters = width_multiplier * mult;
    Layer l{LayerKind::Conv3x3ReluPool,
            detail::he_uniform({filters, shape[0], 3, 3}, shape[0] * 9, rng), Tensor({filters})};
    shape = Network::output_shape(l, shape);
    net.layers.push_back(std::move(l));
  }
  const std::size_t flat = shape_size(shape);
  net.layers.push_back(
      {LayerKind::DenseRelu, detail::he_uniform({flat, dense_units}, flat, rng), Tensor({dense_units})});
  net.layers.push_back({LayerKind::DenseOutput,
                        detail::he_uniform({dense_units, classes}, dense_units, rng),
                        Tensor({classes})});
  net.validate();
  return net;
}

}  // namespace frag
