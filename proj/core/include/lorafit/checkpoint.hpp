#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "lorafit/adapter.hpp"
#include "lorafit/encoder.hpp"
#include "lorafit/tensor.hpp"

namespace lorafit {

/// Versioned container of named arrays plus string metadata.
///
/// Layout (all integers little-endian):
///   magic     8 bytes  "LORAFIT\0"
///   version   u32      currently 1
///   n_meta    u32,  then n_meta × (key, value) strings
///   n_tensor  u32,  then n_tensor × (name string, u32 ndim, ndim × u64 dim,
///                                    numel × f64 IEEE-754 bit pattern)
///   string := u32 byte length + bytes
///
/// Entries are written in key order, so equal contents give equal bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> tensors;

  const std::string& meta_at(const std::string& key) const;
  const Tensor& tensor_at(const std::string& name) const;
};

std::string serialize(const Checkpoint& ckpt);
/// Throws ValidationError on a bad magic, unsupported version or truncation.
Checkpoint deserialize(std::string_view bytes);

/// Throws IoError when the file cannot be written or read.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// stable_hash of the file's bytes, as 16 lowercase hex digits.
std::string file_fingerprint(const std::filesystem::path& path);

Checkpoint encoder_checkpoint(const PairEncoder& model);
PairEncoder encoder_from_checkpoint(const Checkpoint& ckpt);

/// Only A, B, rank and scale per adapter; W0 comes from the encoder when
/// loading.
Checkpoint adapter_checkpoint(const AdapterSet& adapters);
AdapterSet adapters_from_checkpoint(const Checkpoint& ckpt, const PairEncoder& model);

}  // namespace lorafit
