#pragma once

// NAF v1: binary interchange of a classifier head, test representations and labels.
//
// Little-endian layout:
//   "NAF1" | u32 version | u32 dtype | u8 has_bias, 7 x u8 zero
//   u64 C | u64 d | u64 n
//   u32 name_len, name bytes
//   u32 meta_count, meta_count x (u32 klen, key, u32 vlen, value), keys sorted
//   weights C*d | bias C (iff has_bias) | representations n*d | labels n x u32
//   u32 CRC32 (poly 0xEDB88320) of every byte after the magic

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsaudit/linalg.hpp"

namespace nsaudit {

enum class StorageType : std::uint32_t { Float32 = 0, Float64 = 1 };

std::string_view to_string(StorageType t);

/// Last affine layer: row i of weights is the weight vector of class i.
struct WeightHead {
  Matrix weights;
  std::optional<Vector> bias;

  Index num_classes() const { return weights.rows(); }
  Index feature_dim() const { return weights.cols(); }

  /// W r (+ b).
  Vector logits(const Eigen::Ref<const Vector>& r) const;

  bool operator==(const WeightHead& other) const;
};

struct RepresentationSet {
  Matrix representations;  // n x d
  std::vector<std::uint32_t> labels;

  Index num_samples() const { return representations.rows(); }
  Index feature_dim() const { return representations.cols(); }

  bool operator==(const RepresentationSet& other) const;
};

struct NafBundle {
  WeightHead head;
  RepresentationSet reps;
  std::string model_name;
  std::map<std::string, std::string> metadata;
  StorageType dtype = StorageType::Float64;

  /// Throws on any violated bundle invariant (shapes, finiteness, label range).
  void validate() const;

  bool operator==(const NafBundle& other) const = default;
};

/// Everything before the weight payload, plus the derived file size.
struct NafHeader {
  std::uint32_t version = 1;
  StorageType dtype = StorageType::Float64;
  bool has_bias = false;
  std::uint64_t num_classes = 0;
  std::uint64_t feature_dim = 0;
  std::uint64_t num_samples = 0;
  std::string model_name;
  std::map<std::string, std::string> metadata;
  std::uint64_t header_bytes = 0;  // offset of the first weight scalar

  std::uint64_t payload_bytes() const;
  std::uint64_t file_bytes() const { return header_bytes + payload_bytes() + 4; }
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_naf(const NafBundle& bundle);
NafBundle decode_naf(std::span<const std::uint8_t> bytes);

std::size_t write_naf(const NafBundle& bundle, std::ostream& out);
std::size_t write_naf(const NafBundle& bundle, const std::filesystem::path& path);
NafBundle read_naf(std::istream& in);
NafBundle read_naf(const std::filesystem::path& path);

/// Parses only the header and checks the file length against it; the payload
/// is never read.
NafHeader read_naf_header(const std::filesystem::path& path);

/// Streams the file through CRC32 in fixed-size chunks and compares with the trailer.
bool verify_naf_checksum(const std::filesystem::path& path);

}  // namespace nsaudit
