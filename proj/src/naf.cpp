#include "nsaudit/naf.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>

#include <zlib.h>

namespace nsaudit {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'N', 'A', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename M>
bool same_values(const M& a, const M& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void scalar(double v, StorageType t) {
    if (t == StorageType::Float32)
      u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    else
      u64(std::bit_cast<std::uint64_t>(v));
  }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::string text() {
    const std::uint32_t len = u32();
    auto b = take(len);
    return std::string(b.begin(), b.end());
  }
  double scalar(StorageType t) {
    if (t == StorageType::Float32) return static_cast<double>(std::bit_cast<float>(u32()));
    return std::bit_cast<double>(u64());
  }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining())
      throw Error(ErrorCode::Truncated, "need " + std::to_string(n) + " bytes at offset " +
                                            std::to_string(pos_));
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
    throw Error(ErrorCode::DimensionMismatch, "header dimensions overflow");
  return a * b;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  if (b > std::numeric_limits<std::uint64_t>::max() - a)
    throw Error(ErrorCode::DimensionMismatch, "header dimensions overflow");
  return a + b;
}

// Parses everything up to the weight payload. Leaves the reader at the first scalar.
NafHeader parse_header(Reader& r) {
  for (std::uint8_t m : kMagic)
    if (r.u8() != m) throw Error(ErrorCode::BadMagic);

  NafHeader h;
  h.version = r.u32();
  if (h.version != kVersion)
    throw Error(ErrorCode::UnsupportedVersion, "version " + std::to_string(h.version));
  const std::uint32_t dtype = r.u32();
  if (dtype > 1) throw Error(ErrorCode::UnsupportedVersion, "dtype " + std::to_string(dtype));
  h.dtype = static_cast<StorageType>(dtype);
  const std::uint8_t has_bias = r.u8();
  if (has_bias > 1)
    throw Error(ErrorCode::UnsupportedVersion, "has_bias flag " + std::to_string(has_bias));
  h.has_bias = has_bias == 1;
  for (int i = 0; i < 7; ++i)
    if (r.u8() != 0) throw Error(ErrorCode::UnsupportedVersion, "nonzero header padding");

  h.num_classes = r.u64();
  h.feature_dim = r.u64();
  h.num_samples = r.u64();
  if (h.num_classes < 2 || h.feature_dim < 1 || h.num_samples < 1)
    throw Error(ErrorCode::DimensionMismatch,
                "need C >= 2, d >= 1, n >= 1; got C=" + std::to_string(h.num_classes) +
                    " d=" + std::to_string(h.feature_dim) + " n=" + std::to_string(h.num_samples));

  h.model_name = r.text();
  const std::uint32_t meta_count = r.u32();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string key = r.text();
    std::string value = r.text();
    h.metadata.insert_or_assign(std::move(key), std::move(value));
  }
  h.header_bytes = r.offset();
  // validates that the payload size is representable
  (void)h.payload_bytes();
  return h;
}

std::uint32_t read_trailer(std::span<const std::uint8_t> last4) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(last4[i]) << (8 * i);
  return v;
}

}  // namespace

std::string_view to_string(StorageType t) {
  return t == StorageType::Float32 ? "f32" : "f64";
}

Vector WeightHead::logits(const Eigen::Ref<const Vector>& r) const {
  if (r.size() != feature_dim())
    throw Error(ErrorCode::DimensionMismatch, "representation length " + std::to_string(r.size()) +
                                                  " vs feature_dim " +
                                                  std::to_string(feature_dim()));
  Vector z = weights * r;
  if (bias) z += *bias;
  return z;
}

bool WeightHead::operator==(const WeightHead& other) const {
  if (!same_values(weights, other.weights)) return false;
  if (bias.has_value() != other.bias.has_value()) return false;
  return !bias || same_values(*bias, *other.bias);
}

bool RepresentationSet::operator==(const RepresentationSet& other) const {
  return same_values(representations, other.representations) && labels == other.labels;
}

void NafBundle::validate() const {
  const Index c = head.num_classes();
  const Index d = head.feature_dim();
  if (c < 2) throw Error(ErrorCode::DimensionMismatch, "num_classes must be >= 2");
  if (d < 1) throw Error(ErrorCode::DimensionMismatch, "feature_dim must be >= 1");
  if (head.bias && head.bias->size() != c)
    throw Error(ErrorCode::DimensionMismatch, "bias length " + std::to_string(head.bias->size()) +
                                                  " vs num_classes " + std::to_string(c));
  if (reps.num_samples() < 1) throw Error(ErrorCode::DimensionMismatch, "no samples");
  if (reps.feature_dim() != d)
    throw Error(ErrorCode::DimensionMismatch,
                "representation dim " + std::to_string(reps.feature_dim()) + " vs head dim " +
                    std::to_string(d));
  if (static_cast<Index>(reps.labels.size()) != reps.num_samples())
    throw Error(ErrorCode::DimensionMismatch, "label count " + std::to_string(reps.labels.size()) +
                                                  " vs samples " +
                                                  std::to_string(reps.num_samples()));
  if (!head.weights.allFinite() || (head.bias && !head.bias->allFinite()))
    throw Error(ErrorCode::NonFiniteValue, "head");
  if (!reps.representations.allFinite()) throw Error(ErrorCode::NonFiniteValue, "representations");
  for (std::size_t i = 0; i < reps.labels.size(); ++i)
    if (reps.labels[i] >= static_cast<std::uint64_t>(c))
      throw Error(ErrorCode::LabelOutOfRange, "sample " + std::to_string(i) + " has label " +
                                                  std::to_string(reps.labels[i]) + " with C=" +
                                                  std::to_string(c));
}

std::uint64_t NafHeader::payload_bytes() const {
  const std::uint64_t width = dtype == StorageType::Float32 ? 4 : 8;
  std::uint64_t scalars = checked_mul(num_classes, feature_dim);
  if (has_bias) scalars = checked_add(scalars, num_classes);
  scalars = checked_add(scalars, checked_mul(num_samples, feature_dim));
  return checked_add(checked_mul(scalars, width), checked_mul(num_samples, 4));
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t len = std::min(kChunk, bytes.size() - off);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_naf(const NafBundle& bundle) {
  bundle.validate();
  const StorageType t = bundle.dtype;
  Writer w;
  for (std::uint8_t m : kMagic) w.u8(m);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(t));
  w.u8(bundle.head.bias ? 1 : 0);
  for (int i = 0; i < 7; ++i) w.u8(0);
  w.u64(static_cast<std::uint64_t>(bundle.head.num_classes()));
  w.u64(static_cast<std::uint64_t>(bundle.head.feature_dim()));
  w.u64(static_cast<std::uint64_t>(bundle.reps.num_samples()));
  w.text(bundle.model_name);
  w.u32(static_cast<std::uint32_t>(bundle.metadata.size()));
  for (const auto& [key, value] : bundle.metadata) {  // std::map iterates in sorted key order
    w.text(key);
    w.text(value);
  }

  const Matrix& weights = bundle.head.weights;
  for (Index i = 0; i < weights.rows(); ++i)
    for (Index j = 0; j < weights.cols(); ++j) w.scalar(weights(i, j), t);
  if (bundle.head.bias)
    for (Index i = 0; i < bundle.head.bias->size(); ++i) w.scalar((*bundle.head.bias)(i), t);
  const Matrix& reps = bundle.reps.representations;
  for (Index i = 0; i < reps.rows(); ++i)
    for (Index j = 0; j < reps.cols(); ++j) w.scalar(reps(i, j), t);
  for (std::uint32_t label : bundle.reps.labels) w.u32(label);

  auto& bytes = w.bytes();
  w.u32(crc32(std::span(bytes).subspan(kMagic.size())));
  return std::move(bytes);
}

NafBundle decode_naf(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size()) throw Error(ErrorCode::BadMagic, "file shorter than magic");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw Error(ErrorCode::BadMagic);
  if (bytes.size() < kMagic.size() + 4) throw Error(ErrorCode::Truncated, "no trailer");

  // The checksum is verified before any header field is trusted, so a flipped
  // byte anywhere past the magic reports as a checksum failure.
  const auto body = bytes.subspan(kMagic.size(), bytes.size() - kMagic.size() - 4);
  const std::uint32_t stored = read_trailer(bytes.last(4));
  if (crc32(body) != stored) throw Error(ErrorCode::ChecksumMismatch);

  Reader r(bytes.first(bytes.size() - 4));
  const NafHeader h = parse_header(r);
  if (r.remaining() != h.payload_bytes())
    throw Error(ErrorCode::DimensionMismatch, "header implies " + std::to_string(h.payload_bytes()) +
                                                  " payload bytes, file has " +
                                                  std::to_string(r.remaining()));

  const auto c = static_cast<Index>(h.num_classes);
  const auto d = static_cast<Index>(h.feature_dim);
  const auto n = static_cast<Index>(h.num_samples);

  NafBundle b;
  b.dtype = h.dtype;
  b.model_name = h.model_name;
  b.metadata = h.metadata;
  b.head.weights.resize(c, d);
  for (Index i = 0; i < c; ++i)
    for (Index j = 0; j < d; ++j) b.head.weights(i, j) = r.scalar(h.dtype);
  if (h.has_bias) {
    Vector bias(c);
    for (Index i = 0; i < c; ++i) bias(i) = r.scalar(h.dtype);
    b.head.bias = std::move(bias);
  }
  b.reps.representations.resize(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) b.reps.representations(i, j) = r.scalar(h.dtype);
  b.reps.labels.resize(static_cast<std::size_t>(n));
  for (auto& label : b.reps.labels) label = r.u32();

  b.validate();
  return b;
}

std::size_t write_naf(const NafBundle& bundle, std::ostream& out) {
  const auto bytes = encode_naf(bundle);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "stream write failed");
  return bytes.size();
}

std::size_t write_naf(const NafBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  const std::size_t n = write_naf(bundle, out);
  out.close();
  if (!out) throw Error(ErrorCode::IoFailure, "cannot finish writing " + path.string());
  return n;
}

NafBundle read_naf(std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoFailure, "stream read failed");
  return decode_naf(bytes);
}

NafBundle read_naf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot stat " + path.string());
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (static_cast<std::uintmax_t>(in.gcount()) != size)
    throw Error(ErrorCode::IoFailure, "short read on " + path.string());
  return decode_naf(bytes);
}

NafHeader read_naf_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot stat " + path.string());

  // The header is variable length; grow the window until it parses.
  std::vector<std::uint8_t> window;
  std::size_t want = 4096;
  for (;;) {
    const std::size_t target = static_cast<std::size_t>(std::min<std::uintmax_t>(want, size));
    const std::size_t have = window.size();
    window.resize(target);
    in.read(reinterpret_cast<char*>(window.data() + have),
            static_cast<std::streamsize>(target - have));
    if (static_cast<std::size_t>(in.gcount()) != target - have)
      throw Error(ErrorCode::IoFailure, "short read on " + path.string());
    try {
      Reader r(window);
      NafHeader h = parse_header(r);
      if (h.file_bytes() != size)
        throw Error(ErrorCode::DimensionMismatch, "header implies " + std::to_string(h.file_bytes()) +
                                                      " bytes, file has " + std::to_string(size));
      return h;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Truncated || target == size) throw;
    }
    want *= 4;
  }
}

bool verify_naf_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot stat " + path.string());
  if (size < kMagic.size() + 4) throw Error(ErrorCode::Truncated, "no trailer");

  in.seekg(static_cast<std::streamoff>(kMagic.size()));
  std::uintmax_t left = size - kMagic.size() - 4;
  std::vector<std::uint8_t> chunk(1u << 20);
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (left > 0) {
    const auto len = static_cast<std::size_t>(std::min<std::uintmax_t>(left, chunk.size()));
    in.read(reinterpret_cast<char*>(chunk.data()), static_cast<std::streamsize>(len));
    if (static_cast<std::size_t>(in.gcount()) != len)
      throw Error(ErrorCode::IoFailure, "short read on " + path.string());
    crc = ::crc32(crc, chunk.data(), static_cast<uInt>(len));
    left -= len;
  }
  std::array<std::uint8_t, 4> trailer{};
  in.read(reinterpret_cast<char*>(trailer.data()), 4);
  if (in.gcount() != 4) throw Error(ErrorCode::IoFailure, "short read on " + path.string());
  return static_cast<std::uint32_t>(crc) == read_trailer(trailer);
}

}  // namespace nsaudit
