#include "lorafit/random.hpp"

namespace lorafit {

std::uint64_t stable_hash(std::span<const std::byte> bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t stable_hash(std::string_view text) noexcept {
  return stable_hash(std::as_bytes(std::span<const char>(text.data(), text.size())));
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept {
  // splitmix64 finalizer over the seed mixed with the stream name
  std::uint64_t z = seed ^ stable_hash(stream);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor gaussian(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace lorafit
