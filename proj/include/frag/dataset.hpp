// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "frag/csv.hpp"
#include "frag/error.hpp"
#include "frag/tensor.hpp"
#include "frag/weights_io.hpp"

namespace frag {

/// Inputs stored as a (count, dim) matrix plus one label per row.
struct Split {
  std::vector<float> inputs;
  std::vector<std::uint32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  friend bool operator==(const Split&, const Split&) = default;
};

struct Dataset {
  Shape input_shape;
  std::size_t classes = 0;
  Split train;
  Split validation;
  Split test;

  std::size_t input_size() const { return shape_size(input_shape); }

  /// Sample `index` of a split, shaped as the network input.
  Tensor input(const Split& split, std::size_t index) const {
    const std::size_t d = input_size();
    auto first = split.inputs.begin() + static_cast<std::ptrdiff_t>(index * d);
    return Tensor(input_shape, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(d)));
  }

  /// Whole split as a (count, dim) tensor.
  static Tensor matrix(const Split& split, std::size_t dim) {
    return Tensor({split.size(), dim}, split.inputs);
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Isotropic Gaussian blobs. Class c is centered at e_c / sqrt(2) (with
/// classes beyond the dimension wrapping onto e_(c mod dim) scaled by
/// 1 + c / dim), which puts every pair of means at distance 1 when
/// classes <= dim.
struct ToyDatasetSpec {
  std::size_t classes = 3;
  Shape input_shape = {20};
  std::size_t per_class = 200;
  double noise = 0.25;
  std::uint64_t seed = 0;
  std::size_t validation_per_class = 0;
  std::size_t test_per_class = 0;
};

inline std::vector<double> toy_class_mean(std::size_t cls, std::size_t dim) {
  std::vector<double> mean(dim, 0.0);
  const double scale = 1.0 + static_cast<double>(cls / dim);
  mean[cls % dim] = scale / std::sqrt(2.0);
  return mean;
}

inline Dataset make_toy_dataset(const ToyDatasetSpec& spec) {
  if (spec.classes < 2) throw InvalidArgument("toy dataset needs at least 2 classes");
  if (spec.noise < 0.0) throw InvalidArgument("noise must be non-negative");
  Dataset d;
  d.input_shape = spec.input_shape;
  d.classes = spec.classes;
  const std::size_t dim = d.input_size();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto fill = [&](Split& split, std::size_t per_class) {
    for (std::size_t c = 0; c < spec.classes; ++c) {
      const auto mean = toy_class_mean(c, dim);
      for (std::size_t i = 0; i < per_class; ++i) {
        for (std::size_t j = 0; j < dim; ++j)
          split.inputs.push_back(static_cast<float>(mean[j] + spec.noise * gauss(rng)));
        split.labels.push_back(static_cast<std::uint32_t>(c));
      }
    }
  };
  fill(d.train, spec.per_class);
  fill(d.validation, spec.validation_per_class);
  fill(d.test, spec.test_per_class);
  return d;
}

/// Replaces exactly round(fraction * |train|) training labels, each with a
/// class drawn uniformly from the other k-1 classes. Validation and test
/// splits are never touched.
inline Dataset corrupt_labels(Dataset d, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw InvalidArgument("corruption fraction must lie in [0, 1]");
  if (fraction == 0.0) return d;
  if (d.train.size() == 0) throw InvalidArgument("cannot corrupt an empty training split");
  if (d.classes < 2) throw SingleClassDataset("label corruption needs at least two classes");
  const auto n = d.train.size();
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `count` slots become the corrupted set.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::uniform_int_distribution<std::uint32_t> other(0, static_cast<std::uint32_t>(d.classes - 2));
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t& label = d.train.labels[order[i]];
    const std::uint32_t draw = other(rng);
    label = draw >= label ? draw + 1 : draw;
  }
  return d;
}

/// CRC-32 over the training inputs and labels, as 8 hex digits.
inline std::string dataset_fingerprint(const Dataset& d) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(d.train.inputs.size() * 4 + d.train.labels.size() * 4);
  for (float v : d.train.inputs) detail::put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  for (auto l : d.train.labels) detail::put_u32(bytes, l);
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc32(bytes));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV form:
//   # frag-dataset classes=3 shape=20
//   split,label,x0,x1,...
//   train,0,0.1,...

inline void write_dataset_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "# frag-dataset classes=" << d.classes << " shape=";
  for (std::size_t i = 0; i < d.input_shape.size(); ++i) os << (i ? "x" : "") << d.input_shape[i];
  os << "\nsplit,label";
  const std::size_t dim = d.input_size();
  for (std::size_t j = 0; j < dim; ++j) os << ",x" << j;
  os << '\n';
  auto emit = [&](const Split& s, const char* tag) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      os << tag << ',' << s.labels[i];
      for (std::size_t j = 0; j < dim; ++j) os << ',' << format_shortest(s.inputs[i * dim + j]);
      os << '\n';
    }
  };
  emit(d.train, "train");
  emit(d.validation, "validation");
  emit(d.test, "test");
  write_text_file(path, os.str());
}

inline Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# frag-dataset", 0) != 0)
    throw FormatError(path.string() + ": missing '# frag-dataset' header");
  Dataset d;
  std::istringstream hs(line.substr(14));
  std::string tok;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
    if (key == "classes") {
      d.classes = parse_size(value);
    } else if (key == "shape") {
      for (const auto& e : split_string(value, 'x')) d.input_shape.push_back(parse_size(e));
    }
  }
  if (d.classes < 1 || d.input_shape.empty())
    throw FormatError(path.string() + ": header must declare classes and shape");
  const std::size_t dim = d.input_size();
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing column header");
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_string(line, ',');
    if (cells.size() != dim + 2)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(dim + 2) + " columns");
    Split* split = cells[0] == "train"        ? &d.train
                   : cells[0] == "validation" ? &d.validation
                   : cells[0] == "test"       ? &d.test
                                              : nullptr;
    if (!split) throw FormatError(path.string() + ": unknown split '" + cells[0] + "'");
    const std::size_t label = parse_size(cells[1]);
    if (label >= d.classes) throw FormatError(path.string() + ": label out of range");
    split->labels.push_back(static_cast<std::uint32_t>(label));
    for (std::size_t j = 0; j < dim; ++j) split->inputs.push_back(parse_float(cells[j + 2]));
  }
  return d;
}

}  // namespace frag
