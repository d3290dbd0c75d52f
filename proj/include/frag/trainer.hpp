// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "frag/adam.hpp"
#include "frag/dataset.hpp"
#include "frag/error.hpp"
#include "frag/network.hpp"
#include "frag/parallel.hpp"

namespace frag {

struct TrainConfig {
  AdamConfig adam;
  double learning_rate = 1e-3;
  double lr_decay = 0.99;
  std::size_t lr_decay_every = 10;
  std::size_t batch_size = 256;
  std::size_t epochs = 500;
  double corruption_fraction = 0.0;
  std::uint64_t corruption_seed = 0;  // shared by a whole family
  std::uint64_t seed = 0;             // initialization and shuffling
  std::vector<std::size_t> checkpoint_epochs;

  void validate() const {
    if (epochs == 0) throw InvalidArgument("epochs must be positive");
    if (batch_size == 0) throw InvalidArgument("batch size must be positive");
    if (!(corruption_fraction >= 0.0 && corruption_fraction <= 1.0))
      throw InvalidArgument("corruption fraction must lie in [0, 1]");
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (lr_decay_every == 0) throw InvalidArgument("decay interval must be positive");
  }
};

/// Step schedule: lr0 * decay^floor(epoch / every), epochs counted from 0.
inline double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_decay_every));
}

/// 0, 1, 2, 5, 10, 20, 50, ... up to `epochs`, plus `epochs` itself.
inline std::vector<std::size_t> default_checkpoint_epochs(std::size_t epochs) {
  std::vector<std::size_t> out{0};
  for (std::size_t decade = 1; decade <= epochs; decade *= 10)
    for (std::size_t m : {1u, 2u, 5u})
      if (decade * m <= epochs) out.push_back(decade * m);
  if (out.back() != epochs) out.push_back(epochs);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Parameter-shaped gradient buffers.
struct Gradients {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;

  static Gradients zeros_like(const Network& net) {
    Gradients g;
    for (const Layer& l : net.layers) {
      g.weight.emplace_back(l.weight.shape());
      g.bias.emplace_back(l.bias.shape());
    }
    return g;
  }
};

namespace detail {

// a^T b for a (m, k), b (m, n).
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({k, n});
  auto pc = c.data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < k; ++i) {
      const float s = a[r * k + i];
      if (s == 0.0f) continue;
      for (std::size_t j = 0; j < n; ++j) pc[i * n + j] += s * b[r * n + j];
    }
  return c;
}

// a b^T for a (m, n), b (k, n).
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), n = a.dim(1), k = b.dim(0);
  Tensor c({m, k});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < k; ++i) {
      float acc = 0.0f;
      for (std::size_t j = 0; j < n; ++j) acc += a[r * n + j] * b[i * n + j];
      c[r * k + i] = acc;
    }
  return c;
}

struct ConvCache {
  Shape in_shape;
  Tensor pre_pool;                         // (rows, F*H*W) after ReLU
  std::vector<std::uint32_t> pool_source;  // (rows, F*oh*ow) flat index into pre_pool row
};

inline void conv_forward_cached(const Layer& layer, const Tensor& batch, const Shape& in_shape,
                                Tensor& out, ConvCache& cache) {
  const std::size_t rows = batch.dim(0), in_size = shape_size(in_shape);
  const std::size_t filters = layer.weight.dim(0), h = in_shape[1], w = in_shape[2];
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  const std::size_t pre_size = filters * h * w, out_size = filters * oh * ow;
  cache.in_shape = in_shape;
  cache.pre_pool = Tensor({rows, pre_size});
  cache.pool_source.assign(rows * out_size, 0);
  out = Tensor({rows, out_size});
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<float> x(batch.data().begin() + static_cast<std::ptrdiff_t>(r * in_size),
                         batch.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * in_size));
    Tensor y = relu(conv2d(Tensor(in_shape, std::move(x)), layer.weight, layer.bias));
    std::copy(y.data().begin(), y.data().end(),
              cache.pre_pool.data().begin() + static_cast<std::ptrdiff_t>(r * pre_size));
    for (std::size_t f = 0; f < filters; ++f)
      for (std::size_t py = 0; py < oh; ++py)
        for (std::size_t px = 0; px < ow; ++px) {
          std::size_t best = (f * h + 2 * py) * w + 2 * px;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t iy = 2 * py + dy, ix = 2 * px + dx;
              if (iy >= h || ix >= w) continue;
              const std::size_t idx = (f * h + iy) * w + ix;
              if (y[idx] > y[best]) best = idx;
            }
          const std::size_t o = (f * oh + py) * ow + px;
          out[r * out_size + o] = y[best];
          cache.pool_source[r * out_size + o] = static_cast<std::uint32_t>(best);
        }
  }
}

// Accumulates kernel/bias gradients and returns the input gradient.
inline Tensor conv_backward(const Layer& layer, const Tensor& input, const ConvCache& cache,
                            const Tensor& grad_out, Tensor& grad_w, Tensor& grad_b) {
  const std::size_t rows = input.dim(0);
  const std::size_t channels = cache.in_shape[0], h = cache.in_shape[1], w = cache.in_shape[2];
  const std::size_t filters = layer.weight.dim(0);
  const std::size_t pre_size = filters * h * w, out_size = grad_out.dim(1), in_size = channels * h * w;
  Tensor grad_in({rows, in_size});
  std::vector<float> grad_pre(pre_size);
  const auto hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(grad_pre.begin(), grad_pre.end(), 0.0f);
    for (std::size_t o = 0; o < out_size; ++o) {
      const std::uint32_t src = cache.pool_source[r * out_size + o];
      if (cache.pre_pool[r * pre_size + src] > 0.0f) grad_pre[src] += grad_out[r * out_size + o];
    }
    const float* x = input.data().data() + r * in_size;
    float* gx = grad_in.data().data() + r * in_size;
    for (std::size_t f = 0; f < filters; ++f)
      for (std::ptrdiff_t y = 0; y < hh; ++y)
        for (std::ptrdiff_t xx = 0; xx < ww; ++xx) {
          const float g = grad_pre[(f * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(xx)];
          if (g == 0.0f) continue;
          grad_b[f] += g;
          for (std::size_t c = 0; c < channels; ++c)
            for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
              const std::ptrdiff_t iy = y + ky - 1;
              if (iy < 0 || iy >= hh) continue;
              for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
                const std::ptrdiff_t ix = xx + kx - 1;
                if (ix < 0 || ix >= ww) continue;
                const std::size_t kidx = ((f * channels + c) * 3 + static_cast<std::size_t>(ky)) * 3 +
                                         static_cast<std::size_t>(kx);
                const std::size_t iidx = (c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
                grad_w[kidx] += g * x[iidx];
                gx[iidx] += g * layer.weight[kidx];
              }
            }
        }
  }
  return grad_in;
}

}  // namespace detail

/// Mean softmax cross-entropy over a batch and its parameter gradients.
///
/// `inputs` is (rows, input size). When `grads` is null only the loss is
/// computed.
inline double loss_and_gradients(const Network& net, const Tensor& inputs,
                                 std::span<const std::uint32_t> labels, Gradients* grads) {
  const std::size_t rows = inputs.dim(0);
  if (labels.size() != rows) throw ShapeMismatch("loss: label count differs from batch rows");
  const std::size_t depth = net.layers.size();
  std::vector<Tensor> acts;  // acts[i] is the input to layer i
  std::vector<detail::ConvCache> conv(depth);
  acts.reserve(depth + 1);
  acts.push_back(inputs);
  Shape shape = net.input_shape;
  for (std::size_t i = 0; i < depth; ++i) {
    const Layer& l = net.layers[i];
    Tensor out;
    if (l.kind == LayerKind::Conv3x3ReluPool) {
      detail::conv_forward_cached(l, acts.back(), shape, out, conv[i]);
    } else {
      out = detail::apply_dense_layer(l, acts.back());
    }
    shape = Network::output_shape(l, shape);
    acts.push_back(std::move(out));
  }

  const Tensor& logits = acts.back();
  const std::size_t k = logits.dim(1);
  Tensor grad({rows, k});
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= k) throw InvalidArgument("label out of range for network output");
    const float* z = logits.data().data() + r * k;
    const double zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
    loss += std::log(denom) - (z[labels[r]] - zmax);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(z[j] - zmax) / denom;
      grad[r * k + j] = static_cast<float>((p - (j == labels[r] ? 1.0 : 0.0)) / static_cast<double>(rows));
    }
  }
  loss /= static_cast<double>(rows);
  if (!grads) return loss;

  *grads = Gradients::zeros_like(net);
  for (std::size_t i = depth; i-- > 0;) {
    const Layer& l = net.layers[i];
    const Tensor& input = acts[i];
    if (l.kind == LayerKind::Conv3x3ReluPool) {
      grad = detail::conv_backward(l, input, conv[i], grad, grads->weight[i], grads->bias[i]);
      continue;
    }
    if (l.kind == LayerKind::DenseRelu) {
      const Tensor& out = acts[i + 1];
      for (std::size_t j = 0; j < grad.size(); ++j)
        if (!(out[j] > 0.0f)) grad[j] = 0.0f;
    }
    grads->weight[i] = detail::matmul_tn(input, grad);
    Tensor& gb = grads->bias[i];
    const std::size_t n = grad.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) gb[j] += grad[r * n + j];
    if (i > 0) grad = detail::matmul_nt(grad, l.weight);
  }
  return loss;
}

/// Fraction of rows whose argmax prediction differs from the label.
inline double classification_error(const Network& net, const Split& split, std::size_t dim) {
  if (split.size() == 0) return 0.0;
  constexpr std::size_t chunk = 1024;
  std::size_t wrong = 0;
  for (std::size_t start = 0; start < split.size(); start += chunk) {
    const std::size_t rows = std::min(chunk, split.size() - start);
    Tensor batch({rows, dim},
                 std::vector<float>(split.inputs.begin() + static_cast<std::ptrdiff_t>(start * dim),
                                    split.inputs.begin() + static_cast<std::ptrdiff_t>((start + rows) * dim)));
    const auto pred = classify_batch(net, batch, 0);
    for (std::size_t r = 0; r < rows; ++r) wrong += pred[r] != split.labels[start + r];
  }
  return static_cast<double>(wrong) / static_cast<double>(split.size());
}

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double loss = 0.0;
  double train_error = 0.0;
  double val_error = 0.0;
  std::string checkpoint_path;
};

struct TrainingTrace {
  std::vector<EpochRecord> epochs;

  /// CSV with columns epoch, lr, train_error, val_error, checkpoint_path.
  std::string to_csv() const {
    std::string s = "epoch,lr,train_error,val_error,checkpoint_path\n";
    for (const auto& e : epochs)
      s += std::to_string(e.epoch) + "," + format_fixed(e.learning_rate, 9) + "," +
           format_fixed(e.train_error, 6) + "," + format_fixed(e.val_error, 6) + "," +
           e.checkpoint_path + "\n";
    return s;
  }
};

struct TrainingResult {
  Network network;
  TrainingTrace trace;
};

/// Called at each checkpoint epoch with the current weights; returns the
/// path written (or an empty string).
using CheckpointSink = std::function<std::string(std::size_t epoch, const Network&)>;

/// Mini-batch Adam on cross entropy over d.train, as given (corrupt the
/// labels beforehand if wanted). Row 0 of the trace describes the
/// untrained network; row e describes the state after e epochs.
inline TrainingResult train(Network net, const Dataset& d, const TrainConfig& cfg,
                            const CheckpointSink& checkpoint = {}) {
  cfg.validate();
  net.validate();
  if (shape_size(net.input_shape) != d.input_size())
    throw ShapeMismatch("train: network input " + shape_string(net.input_shape) +
                        " does not match dataset " + shape_string(d.input_shape));
  if (d.train.size() == 0) throw InvalidArgument("train: empty training split");
  const std::size_t dim = d.input_size();
  const std::size_t n = d.train.size();
  auto is_checkpoint = [&](std::size_t e) {
    return std::find(cfg.checkpoint_epochs.begin(), cfg.checkpoint_epochs.end(), e) !=
           cfg.checkpoint_epochs.end();
  };

  TrainingResult result;
  auto record = [&](std::size_t epoch, double lr, double loss) {
    EpochRecord rec{epoch, lr, loss, 0.0, 0.0, {}};
    try {
      rec.train_error = classification_error(net, d.train, dim);
      rec.val_error = classification_error(net, d.validation, dim);
    } catch (const NonFiniteValue& e) {
      throw DivergedLoss("non-finite activations after epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (checkpoint && is_checkpoint(epoch)) rec.checkpoint_path = checkpoint(epoch, net);
    result.trace.epochs.push_back(std::move(rec));
  };
  record(0, learning_rate_at(cfg, 0), loss_and_gradients(net, Dataset::matrix(d.train, dim), d.train.labels, nullptr));

  Adam adam(cfg.adam);
  std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Gradients grads;
  std::vector<float> batch_inputs;
  std::vector<std::uint32_t> batch_labels;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t rows = std::min(cfg.batch_size, n - start);
      batch_inputs.resize(rows * dim);
      batch_labels.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t s = order[start + r];
        std::copy_n(d.train.inputs.begin() + static_cast<std::ptrdiff_t>(s * dim), dim,
                    batch_inputs.begin() + static_cast<std::ptrdiff_t>(r * dim));
        batch_labels[r] = d.train.labels[s];
      }
      double loss = 0.0;
      try {
        loss = loss_and_gradients(net, Tensor({rows, dim}, batch_inputs), batch_labels, &grads);
      } catch (const NonFiniteValue& e) {
        throw DivergedLoss(std::string("non-finite activations at epoch ") + std::to_string(epoch + 1) + ": " +
                           e.what());
      }
      if (!std::isfinite(loss))
        throw DivergedLoss("non-finite loss at epoch " + std::to_string(epoch + 1) + ", model " +
                           (net.metadata.count("model_id") ? net.metadata.at("model_id") : "?"));
      epoch_loss += loss * static_cast<double>(rows);

      std::vector<std::span<float>> params;
      std::vector<std::span<const float>> gspans;
      for (std::size_t i = 0; i < net.layers.size(); ++i) {
        params.push_back(net.layers[i].weight.data());
        gspans.push_back(grads.weight[i].data());
        params.push_back(net.layers[i].bias.data());
        gspans.push_back(grads.bias[i].data());
      }
      adam.step(params, gspans, lr);
    }
    for (const Layer& l : net.layers)
      if (!l.weight.all_finite() || !l.bias.all_finite())
        throw DivergedLoss("non-finite parameters after epoch " + std::to_string(epoch + 1));
    record(epoch + 1, lr, epoch_loss / static_cast<double>(n));
  }
  result.network = std::move(net);
  return result;
}

// ---------------------------------------------------------------------------
// Model families

enum class Architecture { Mlp, Cnn };

struct FamilyOptions {
  Architecture arch = Architecture::Mlp;
  std::size_t mlp_hidden_layers = 2;  // each of size `width`
  std::size_t cnn_dense_units = 400;
  std::size_t jobs = 1;
};

struct FamilyMember {
  std::size_t width = 0;
  std::uint64_t seed = 0;
  Network initial;
  TrainingResult result;
};

inline std::string family_model_id(Architecture arch, std::size_t width, std::uint64_t seed,
                                   double corruption) {
  return std::string(arch == Architecture::Mlp ? "mlp" : "cnn") + "-w" + std::to_string(width) +
         "-s" + std::to_string(seed) + (corruption > 0.0 ? "-corrupt" : "-clean");
}

inline Network make_family_network(const FamilyOptions& opt, const Dataset& d, std::size_t width,
                                   std::uint64_t seed) {
  if (opt.arch == Architecture::Mlp)
    return make_mlp(d.input_size(), std::vector<std::size_t>(opt.mlp_hidden_layers, width), d.classes, seed);
  return make_cnn(d.input_shape, width, opt.cnn_dense_units, d.classes, seed);
}

/// Per-member checkpoint sink factory: (model_id) -> sink.
using FamilyCheckpointSink = std::function<CheckpointSink(const std::string& model_id)>;

/// Trains |widths| x |seeds| models. Corruption is applied once with
/// cfg.corruption_seed, so every member sees the same corrupted labels.
inline std::vector<FamilyMember> make_family(const std::vector<std::size_t>& widths,
                                             const std::vector<std::uint64_t>& seeds,
                                             const Dataset& d, const TrainConfig& cfg,
                                             const FamilyOptions& opt,
                                             const FamilyCheckpointSink& sinks = {}) {
  if (!std::is_sorted(widths.begin(), widths.end()))
    throw InvalidArgument("family widths must be sorted ascending");
  if (widths.empty() || seeds.empty()) throw InvalidArgument("family needs widths and seeds");
  cfg.validate();
  const Dataset train_data = corrupt_labels(d, cfg.corruption_fraction, cfg.corruption_seed);
  std::vector<FamilyMember> members(widths.size() * seeds.size());
  parallel_for(members.size(), opt.jobs, [&](std::size_t idx) {
    const std::size_t width = widths[idx / seeds.size()];
    const std::uint64_t seed = seeds[idx % seeds.size()];
    Network net = make_family_network(opt, d, width, seed);
    const std::string id = family_model_id(opt.arch, width, seed, cfg.corruption_fraction);
    net.metadata = {{"model_id", id},
                    {"arch", opt.arch == Architecture::Mlp ? "mlp" : "cnn"},
                    {"width", std::to_string(width)},
                    {"seed", std::to_string(seed)},
                    {"corrupt_frac", format_fixed(cfg.corruption_fraction, 4)},
                    {"epochs", std::to_string(cfg.epochs)}};
    TrainConfig member_cfg = cfg;
    member_cfg.seed = seed;
    FamilyMember& m = members[idx];
    m.width = width;
    m.seed = seed;
    m.initial = net;
    m.result = train(std::move(net), train_data, member_cfg, sinks ? sinks(id) : CheckpointSink{});
  });
  return members;
}

}  // namespace frag
