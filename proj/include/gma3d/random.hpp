#pragma once

// Pinned pseudo-random generation. Scene files and training runs must be
// reproducible across implementations, so nothing here defers to the
// platform's <random> distributions.
//
//   seeding   SplitMix64(seed) produces the four xoshiro state words
//   engine    xoshiro256** 1.0
//   uniform   (next() >> 11) * 2^-53, in [0, 1)
//   normal    Box-Muller on (u1 = 1 - uniform(), u2 = uniform()):
//             r = sqrt(-2 ln u1); yields r·cos(2π u2) then r·sin(2π u2)
//   index     floor(uniform() * n)
//   shuffle   Fisher-Yates from the back, j = index(i + 1)

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace gma3d {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();

 private:
  std::uint64_t state_;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  std::size_t index(std::size_t n);

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i-- > 1;) {
      std::swap(items[i], items[index(i + 1)]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derive an independent stream seed from a base seed and a stream label.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace gma3d
