#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "lorafit/tensor.hpp"

namespace lorafit {

/// 64-bit FNV-1a. Used wherever a hash must be stable across runs and
/// platforms (token ids, checkpoint fingerprints, seed streams).
std::uint64_t stable_hash(std::span<const std::byte> bytes) noexcept;
std::uint64_t stable_hash(std::string_view text) noexcept;

/// Seed of the named sub-stream of `seed` ("init", "data", "shuffle", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept;

using Rng = std::mt19937_64;

/// Tensor with i.i.d. N(0, stddev²) entries.
Tensor gaussian(Shape shape, double stddev, Rng& rng);

}  // namespace lorafit
