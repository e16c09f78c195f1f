#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sketchnet/error.hpp"
#include "sketchnet/tensor.hpp"

namespace sketchnet {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace detail {

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    for (std::size_t i = 0; i < sizeof(U) / 2; ++i) std::swap(b[i], b[sizeof(U) - 1 - i]);
    std::memcpy(&v, b, sizeof(U));
  }
  return v;
}

}  // namespace detail

/// Little-endian primitive writer.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <typename U>
  void scalar(U v) {
    v = detail::to_little(v);
    bytes(&v, sizeof v);
  }
  void u32(std::uint32_t v) { scalar(v); }
  void u64(std::uint64_t v) { scalar(v); }
  void f64(double v) { scalar(v); }
  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <typename U>
  void array(std::span<const U> v) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(v.data(), v.size() * sizeof(U));
    } else {
      for (U x : v) scalar(x);
    }
  }

 private:
  std::ostream& out_;
};

/// Little-endian primitive reader. Any short read throws `Eof`.
class BinaryReader {
 public:
  struct Eof : Error {
    Eof() : Error("unexpected end of data") {}
  };

  explicit BinaryReader(std::istream& in) : in_(in) {}

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw Eof();
  }
  template <typename U>
  U scalar() {
    U v;
    bytes(&v, sizeof v);
    return detail::to_little(v);
  }
  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  double f64() { return scalar<double>(); }
  std::string string(std::size_t max_len = 1u << 24) {
    const auto n = u32();
    if (n > max_len) throw Eof();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  template <typename U>
  void array(std::span<U> v) {
    bytes(v.data(), v.size() * sizeof(U));
    if constexpr (std::endian::native == std::endian::big)
      for (U& x : v) x = detail::to_little(x);
  }

 private:
  std::istream& in_;
};

// ---------------------------------------------------------------- SKNT0001 container

/// "SKNT0001" padded with zeros to 16 bytes.
inline constexpr char kTensorMagic[16] = {'S', 'K', 'N', 'T', '0', '0', '0', '1'};

/// Magic, u32 rank, u32 extents, then float32 values, all little-endian.
inline void write_tensor(std::ostream& out, const Tensor<float>& t) {
  BinaryWriter w(out);
  w.bytes(kTensorMagic, sizeof kTensorMagic);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  w.array<float>(t.data());
  if (!out) throw DataError("tensor write failed");
}

inline Tensor<float> read_tensor(std::istream& in) {
  BinaryReader r(in);
  try {
    char magic[16];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kTensorMagic, sizeof magic) != 0) throw DataError("not an SKNT0001 tensor blob");
    const auto rank = r.u32();
    if (rank == 0 || rank > 8) throw DataError("tensor blob has invalid rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    Tensor<float> t(shape);
    r.array<float>(t.data());
    return t;
  } catch (const BinaryReader::Eof&) {
    throw DataError("truncated tensor blob");
  } catch (const ShapeError& e) {
    throw DataError(std::string("tensor blob: ") + e.what());
  }
}

inline void save_tensor(const std::string& path, const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_tensor(out, t);
}

inline Tensor<float> load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read_tensor(in);
}

}  // namespace sketchnet
