#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace noisnn {

/// Purpose tags that keep independent substreams of one root seed apart.
enum class StreamTag : std::uint64_t {
  init = 0x494e4954,
  train_noise = 0x54524e4e,
  eval_noise = 0x4556414c,
  shuffle = 0x53485546,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Seedable deterministic stream. Substreams are derived by hashing the root
/// seed with an ordered key list, so (seed, layer, step, shard) always maps to
/// the same draws regardless of evaluation order.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static Rng substream(std::uint64_t root, StreamTag tag,
                       std::initializer_list<std::uint64_t> keys);

  engine_type& engine() noexcept { return engine_; }

 private:
  engine_type engine_;
};

}  // namespace noisnn
