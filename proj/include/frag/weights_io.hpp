// SPDX-License-Identifier: Apache-2.0
//
// FRAG weight files.
//
//   offset 0   "FRAG"                       4 bytes, magic
//   offset 4   0x01                         format version
//   offset 5   uint64 little-endian         manifest length M in bytes
//   offset 13  UTF-8 JSON manifest          M bytes
//   ...        tensor payload               little-endian binary32, row-major
//   last 4     uint32 little-endian         CRC-32 (IEEE) of the payload
//
// The manifest lists input shape, class count, metadata, the layer stack,
// and one record per tensor with its byte offset into the payload. Conv
// weights are (filters, in_channels, 3, 3); dense weights are
// (in_units, out_units).
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <boost/crc.hpp>
#include <nlohmann/json.hpp>

#include "frag/error.hpp"
#include "frag/network.hpp"

namespace frag {

inline constexpr char kWeightMagic[4] = {'F', 'R', 'A', 'G'};
inline constexpr std::uint8_t kWeightVersion = 0x01;

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t at, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= std::uint64_t{bytes[at + static_cast<std::size_t>(i)]} << (8 * i);
  return v;
}

inline nlohmann::json shape_json(const Shape& s) { return nlohmann::json(s); }

inline Shape json_shape(const nlohmann::json& j) {
  Shape s = j.get<Shape>();
  if (s.empty()) throw FormatError("empty shape in manifest");
  for (auto e : s)
    if (e == 0) throw FormatError("zero extent in manifest shape");
  return s;
}

inline constexpr std::size_t kHeaderBytes = 4 + 1 + 8;

}  // namespace detail

/// Encodes a network into the FRAG byte layout. Output is deterministic.
inline std::vector<std::uint8_t> serialize_weights(const Network& net) {
  net.validate();
  nlohmann::json manifest;
  manifest["format"] = "frag-weights";
  manifest["input_shape"] = detail::shape_json(net.input_shape);
  manifest["classes"] = net.classes;
  manifest["metadata"] = net.metadata;
  nlohmann::json layers = nlohmann::json::array();
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    layers.push_back({{"kind", layer_kind_name(l.kind)}, {"out", l.out_extent()}});
    for (const auto& [slot, t] : {std::pair<const char*, const Tensor*>{"weight", &l.weight},
                                  std::pair<const char*, const Tensor*>{"bias", &l.bias}}) {
      const std::uint64_t length = t->size() * 4;
      tensors.push_back({{"layer", i},
                         {"slot", slot},
                         {"shape", detail::shape_json(t->shape())},
                         {"offset", offset},
                         {"length", length}});
      offset += length;
    }
  }
  manifest["layers"] = std::move(layers);
  manifest["tensors"] = std::move(tensors);
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(std::begin(kWeightMagic), std::end(kWeightMagic));
  out.push_back(kWeightVersion);
  detail::put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  const std::size_t payload_start = out.size();
  for (const Layer& l : net.layers)
    for (const Tensor* t : {&l.weight, &l.bias})
      for (float v : t->data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  const std::uint32_t crc =
      crc32(std::span<const std::uint8_t>(out).subspan(payload_start, out.size() - payload_start));
  detail::put_u32(out, crc);
  return out;
}

/// Decodes FRAG bytes. Structural problems raise FormatError; a payload
/// whose CRC does not match raises ChecksumMismatch.
inline Network deserialize_weights(std::span<const std::uint8_t> bytes) {
  using nlohmann::json;
  if (bytes.size() < detail::kHeaderBytes + 4) throw FormatError("weight file too short");
  if (std::memcmp(bytes.data(), kWeightMagic, 4) != 0) throw FormatError("bad magic, not a FRAG file");
  if (bytes[4] != kWeightVersion)
    throw FormatError("unsupported FRAG version " + std::to_string(bytes[4]));
  const std::uint64_t manifest_len = detail::get_le(bytes, 5, 8);
  if (manifest_len > bytes.size() - detail::kHeaderBytes - 4)
    throw FormatError("manifest length exceeds file size (truncated file?)");
  const std::size_t payload_start = detail::kHeaderBytes + manifest_len;
  const std::size_t payload_len = bytes.size() - payload_start - 4;

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + detail::kHeaderBytes, bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }

  Network net;
  try {
    net.input_shape = detail::json_shape(manifest.at("input_shape"));
    net.classes = manifest.at("classes").get<std::size_t>();
    net.metadata = manifest.at("metadata").get<std::map<std::string, std::string>>();
    const json& layers = manifest.at("layers");
    const json& tensors = manifest.at("tensors");
    if (!layers.is_array() || !tensors.is_array()) throw FormatError("manifest layers/tensors must be arrays");
    if (tensors.size() != 2 * layers.size())
      throw FormatError("manifest declares " + std::to_string(layers.size()) + " layers but " +
                        std::to_string(tensors.size()) + " tensor records");

    std::uint64_t expected_offset = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      Layer layer;
      layer.kind = parse_layer_kind(layers[i].at("kind").get<std::string>());
      for (int s = 0; s < 2; ++s) {
        const json& rec = tensors[2 * i + static_cast<std::size_t>(s)];
        const char* slot = s == 0 ? "weight" : "bias";
        if (rec.at("layer").get<std::size_t>() != i || rec.at("slot").get<std::string>() != slot)
          throw FormatError("tensor record " + std::to_string(2 * i + static_cast<std::size_t>(s)) +
                            " out of order, expected layer " + std::to_string(i) + " " + slot);
        const Shape shape = detail::json_shape(rec.at("shape"));
        const auto offset = rec.at("offset").get<std::uint64_t>();
        const auto length = rec.at("length").get<std::uint64_t>();
        if (offset != expected_offset || length != shape_size(shape) * 4)
          throw FormatError("tensor record offsets or lengths are inconsistent");
        if (offset + length > payload_len)
          throw FormatError("tensor payload runs past end of file (truncated file?)");
        std::vector<float> values(shape_size(shape));
        for (std::size_t k = 0; k < values.size(); ++k)
          values[k] = std::bit_cast<float>(
              static_cast<std::uint32_t>(detail::get_le(bytes, payload_start + offset + 4 * k, 4)));
        (s == 0 ? layer.weight : layer.bias) = Tensor(shape, std::move(values));
        expected_offset += length;
      }
      if (layer.out_extent() != layers[i].at("out").get<std::size_t>())
        throw FormatError("layer " + std::to_string(i) + " output extent disagrees with its bias");
      net.layers.push_back(std::move(layer));
    }
    if (expected_offset != payload_len)
      throw FormatError("payload length " + std::to_string(payload_len) + " differs from declared " +
                        std::to_string(expected_offset) + " bytes");
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }

  const std::uint32_t stored = static_cast<std::uint32_t>(detail::get_le(bytes, bytes.size() - 4, 4));
  if (crc32(bytes.subspan(payload_start, payload_len)) != stored)
    throw ChecksumMismatch("payload CRC-32 mismatch");
  for (const Layer& l : net.layers)
    if (!l.weight.all_finite() || !l.bias.all_finite())
      throw FormatError("weight file contains non-finite parameters");
  net.validate();
  return net;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

inline void save_weights(const Network& net, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_weights(net));
}

inline Network load_weights(const std::filesystem::path& path) {
  return deserialize_weights(read_file_bytes(path));
}

}  // namespace frag
