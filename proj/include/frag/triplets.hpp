// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "frag/csv.hpp"
#include "frag/error.hpp"

namespace frag {

struct Triplet {
  std::uint32_t class_id = 0;
  std::array<std::size_t, 3> index{};  // into the training split
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TripletSet {
  std::uint64_t seed = 0;
  std::string dataset_fingerprint;
  std::vector<Triplet> triplets;
  friend bool operator==(const TripletSet&, const TripletSet&) = default;
};

/// Draws `count` same-class triplets: a class uniformly among classes with
/// at least three samples, then three distinct samples of it uniformly.
inline TripletSet sample_triplets(std::span<const std::uint32_t> labels, std::size_t classes,
                                  std::size_t count, std::uint64_t seed,
                                  std::string fingerprint = {}) {
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw InvalidArgument("label out of range while sampling triplets");
    by_class[labels[i]].push_back(i);
  }
  std::vector<std::uint32_t> eligible;
  for (std::uint32_t c = 0; c < classes; ++c)
    if (by_class[c].size() >= 3) eligible.push_back(c);
  if (eligible.empty()) throw InsufficientClassSamples("no class has at least 3 training samples");

  TripletSet set;
  set.seed = seed;
  set.dataset_fingerprint = std::move(fingerprint);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_class(0, eligible.size() - 1);
  for (std::size_t t = 0; t < count; ++t) {
    const std::uint32_t c = eligible[pick_class(rng)];
    const auto& pool = by_class[c];
    std::uniform_int_distribution<std::size_t> p0(0, pool.size() - 1), p1(0, pool.size() - 2),
        p2(0, pool.size() - 3);
    // Sequential draws without replacement over positions in `pool`.
    std::size_t a = p0(rng);
    std::size_t b = p1(rng);
    if (b >= a) ++b;
    std::size_t lo = std::min(a, b), hi = std::max(a, b);
    std::size_t e = p2(rng);
    if (e >= lo) ++e;
    if (e >= hi) ++e;
    set.triplets.push_back({c, {pool[a], pool[b], pool[e]}});
  }
  return set;
}

/// Text form: a '#' header line, then one `class_id,idx1,idx2,idx3` per line.
inline std::string triplets_to_text(const TripletSet& set) {
  std::ostringstream os;
  os << "# frag-triplets seed=" << set.seed << " dataset=" << (set.dataset_fingerprint.empty() ? "-" : set.dataset_fingerprint)
     << " count=" << set.triplets.size() << '\n';
  for (const Triplet& t : set.triplets)
    os << t.class_id << ',' << t.index[0] << ',' << t.index[1] << ',' << t.index[2] << '\n';
  return os.str();
}

inline void write_triplets(const TripletSet& set, const std::filesystem::path& path) {
  write_text_file(path, triplets_to_text(set));
}

inline TripletSet read_triplets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triplet file " + path.string());
  TripletSet set;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# frag-triplets", 0) != 0)
    throw FormatError(path.string() + ": missing '# frag-triplets' header");
  std::istringstream hs(line.substr(15));
  std::string tok;
  std::size_t declared = 0;
  bool have_count = false;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
    if (key == "seed") set.seed = parse_size(value);
    if (key == "dataset") set.dataset_fingerprint = value == "-" ? "" : value;
    if (key == "count") {
      declared = parse_size(value);
      have_count = true;
    }
  }
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_string(line, ',');
    if (cells.size() != 4) throw FormatError(path.string() + ": triplet lines need 4 fields");
    Triplet t;
    t.class_id = static_cast<std::uint32_t>(parse_size(cells[0]));
    for (std::size_t i = 0; i < 3; ++i) t.index[i] = parse_size(cells[i + 1]);
    if (t.index[0] == t.index[1] || t.index[0] == t.index[2] || t.index[1] == t.index[2])
      throw FormatError(path.string() + ": triplet indices must be distinct");
    set.triplets.push_back(t);
  }
  if (have_count && declared != set.triplets.size())
    throw FormatError(path.string() + ": header count disagrees with triplet lines");
  return set;
}

}  // namespace frag
