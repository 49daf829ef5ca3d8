#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

namespace vda {

inline uint64_t splitmix64(uint64_t& s) {
  uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Mixes a base seed with a stream key into an independent child seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t key) {
  uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL + key * 0xb5026f5aa96619e9ULL);
  splitmix64(s);
  return splitmix64(s);
}

/// Deterministic xoshiro256** generator with explicit normal sampling.
/// All randomness in the library flows through this type; std:: distributions
/// are avoided because their output is implementation-defined.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed) { reseed(seed); }

  void reseed(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
    has_spare_ = false;
    spare_ = 0.0;
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); n must be positive.
  int64_t uniform_int(int64_t n) {
    return int64_t(uniform() * double(n)) % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller, spare value cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Derives an independent generator for a keyed substream. The child
  /// depends only on (this generator's original seed-derived state, key).
  Rng child(uint64_t key) const {
    Rng r;
    r.state_[0] = mix_seed(state_[0], key);
    r.state_[1] = mix_seed(state_[1], ~key);
    r.state_[2] = mix_seed(state_[2], key * 0x2545f4914f6cdd1dULL);
    r.state_[3] = mix_seed(state_[3], key + 0x452821e638d01377ULL);
    r.has_spare_ = false;
    return r;
  }

  std::vector<uint64_t> serialize() const {
    std::vector<uint64_t> out(state_, state_ + 4);
    out.push_back(has_spare_ ? 1 : 0);
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(spare_));
    std::memcpy(&bits, &spare_, sizeof(bits));
    out.push_back(bits);
    return out;
  }

  void deserialize(const std::vector<uint64_t>& words) {
    for (int i = 0; i < 4; ++i) state_[i] = words[size_t(i)];
    has_spare_ = words[4] != 0;
    std::memcpy(&spare_, &words[5], sizeof(spare_));
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4] = {};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vda
