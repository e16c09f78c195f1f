#pragma once

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "sketchnet/binary_io.hpp"
#include "sketchnet/network.hpp"

namespace sketchnet {

inline constexpr char kCheckpointMagic[8] = {'S', 'K', 'N', 'C', 'K', 'P', 'T', '1'};
inline constexpr char kCheckpointEnd[8] = {'S', 'K', 'N', 'C', 'E', 'N', 'D', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   magic[8] version:u32 spec_hash:u64
//   input_channels:u32 num_classes:u32 scale:u32 epoch:u32 seed:u64
//   classes: u32 count, then length-prefixed strings
//   train config: length-prefixed key=value text
//   tensors: u32 count, each { name, u32 rank, u32 dims[rank], f32 data }
//   end marker[8]

inline void write_checkpoint(std::ostream& out, const NetworkState<float>& st) {
  BinaryWriter w(out);
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(st.spec.hash());
  w.u32(static_cast<std::uint32_t>(st.spec.input_channels));
  w.u32(static_cast<std::uint32_t>(st.spec.num_classes));
  w.u32(static_cast<std::uint32_t>(st.scale));
  w.u32(static_cast<std::uint32_t>(st.epoch));
  w.u64(st.seed);
  w.u32(static_cast<std::uint32_t>(st.classes.size()));
  for (const auto& c : st.classes) w.string(c);
  w.string(st.config.to_kv().str());
  const auto names = st.parameter_names();
  const auto tensors = st.parameter_tensors();
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    w.string(names[i]);
    w.u32(static_cast<std::uint32_t>(tensors[i]->rank()));
    for (auto d : tensors[i]->shape()) w.u32(static_cast<std::uint32_t>(d));
    w.array<float>(tensors[i]->data());
  }
  w.bytes(kCheckpointEnd, sizeof kCheckpointEnd);
}

inline void save_checkpoint(const NetworkState<float>& st, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointErrorKind::Io, "cannot write " + path);
  write_checkpoint(out, st);
  if (!out) throw CheckpointError(CheckpointErrorKind::Io, "write failed for " + path);
}

/// Reads a checkpoint of a network built by build_network(). When
/// `expected` is given, the stored spec hash must match it.
inline NetworkState<float> read_checkpoint(std::istream& in, const NetworkSpec* expected = nullptr) {
  using K = CheckpointErrorKind;
  BinaryReader r(in);
  try {
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw CheckpointError(K::BadMagic, "not a checkpoint");
    const auto version = r.u32();
    if (version != kCheckpointVersion)
      throw CheckpointError(K::BadVersion, "format version " + std::to_string(version));
    const auto hash = r.u64();
    const auto channels = r.u32();
    const auto classes = r.u32();
    if ((channels != 1 && channels != 6) || classes < 2 || classes > 100000)
      throw CheckpointError(K::Corrupt, "invalid header");
    NetworkState<float> st;
    st.spec = build_network(channels, classes);
    if (st.spec.hash() != hash)
      throw CheckpointError(K::SpecMismatch, "stored spec hash does not match the network layout");
    if (expected && expected->hash() != hash)
      throw CheckpointError(K::SpecMismatch, "checkpoint is for a " + std::to_string(channels) + "-channel, " +
                                                 std::to_string(classes) + "-class network");
    st.scale = static_cast<int>(r.u32());
    st.epoch = static_cast<int>(r.u32());
    st.seed = r.u64();
    const auto nclasses = r.u32();
    if (nclasses > classes) throw CheckpointError(K::Corrupt, "class list longer than output layer");
    for (std::uint32_t i = 0; i < nclasses; ++i) st.classes.push_back(r.string());
    st.config = TrainConfig::from_kv(KeyValues::parse(r.string()));

    st.params = allocate_params<float>(st.spec);
    const auto names = st.parameter_names();
    auto tensors = st.parameter_tensors();
    if (r.u32() != tensors.size()) throw CheckpointError(K::Corrupt, "tensor count mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (r.string(4096) != names[i]) throw CheckpointError(K::Corrupt, "unexpected tensor name");
      const auto rank = r.u32();
      Shape shape(rank > 8 ? 0 : rank);
      if (rank > 8) throw CheckpointError(K::Corrupt, "bad tensor rank");
      for (auto& d : shape) d = r.u32();
      if (shape != tensors[i]->shape())
        throw CheckpointError(K::Corrupt, names[i] + " has shape " + shape_str(shape));
      r.array<float>(tensors[i]->data());
    }
    char end[8];
    r.bytes(end, sizeof end);
    if (std::memcmp(end, kCheckpointEnd, sizeof end) != 0) throw CheckpointError(K::Corrupt, "missing end marker");
    return st;
  } catch (const BinaryReader::Eof&) {
    throw CheckpointError(K::Corrupt, "file is truncated");
  } catch (const ConfigError& e) {
    throw CheckpointError(K::Corrupt, std::string("bad training config: ") + e.what());
  }
}

inline NetworkState<float> load_checkpoint(const std::string& path, const NetworkSpec* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::Io, "cannot open " + path);
  return read_checkpoint(in, expected);
}

}  // namespace sketchnet
