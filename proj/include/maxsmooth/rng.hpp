#pragma once

#include <cstdint>
#include <random>

namespace maxsmooth {

using Rng = std::mt19937_64;

// Counter-based seed derivation: the seed of stream `stream` under root seed
// `root` is splitmix64(root ^ splitmix64(stream + golden)). Streams are
// independent of evaluation order, which keeps parallel stages deterministic.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

inline Rng make_rng(std::uint64_t root, std::uint64_t stream) {
  return Rng(derive_seed(root, stream));
}

// Stream ids used by the pipelines. Keeping them in one place documents the
// derivation for anyone reproducing a run by hand.
namespace streams {
inline constexpr std::uint64_t kSimulate = 1;
inline constexpr std::uint64_t kTheta = 2;
inline constexpr std::uint64_t kLatent = 3;
inline constexpr std::uint64_t kExact = 4;
inline constexpr std::uint64_t kBootstrap = 5;
inline constexpr std::uint64_t kFoldBase = 1000;
}  // namespace streams

}  // namespace maxsmooth
