#include "noisnn/rng.hpp"

namespace noisnn {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::substream(std::uint64_t root, StreamTag tag, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(root ^ static_cast<std::uint64_t>(tag));
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return Rng(h);
}

}  // namespace noisnn
