#pragma once

#include <cstdint>
#include <cmath>

namespace marl {

// Counter-free splittable PRNG. Every consumer (env instance, actor, shuffle)
// gets its own stream derived from (run seed, stream id), so adding or
// removing one consumer never shifts the draws of another.
inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(uint64_t seed, uint64_t stream_id) {
    uint64_t s = seed;
    uint64_t a = splitmix64(s);
    s ^= stream_id * 0xD6E8FEB86659FD93ULL + 0x2545F4914F6CDD1DULL;
    uint64_t b = splitmix64(s);
    state_[0] = a | 1ULL;
    state_[1] = b;
  }

  uint64_t next_u64() {
    // xoroshiro128++
    const uint64_t s0 = state_[0];
    uint64_t s1 = state_[1];
    const uint64_t result = rotl(s0 + s1, 17) + s0;
    s1 ^= s0;
    state_[0] = rotl(s0, 49) ^ s1 ^ (s1 << 21);
    state_[1] = rotl(s1, 28);
    return result;
  }

  // Uniform in [0, 1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }
  float next_float() { return float(next_u64() >> 40) * 0x1.0p-24f; }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

  bool bernoulli(double p) { return next_double() < p; }

  // Uniform in [-limit, limit].
  float next_uniform(float limit) { return (2.0f * next_float() - 1.0f) * limit; }

  uint64_t state0() const { return state_[0]; }
  uint64_t state1() const { return state_[1]; }
  void set_state(uint64_t s0, uint64_t s1) { state_[0] = s0; state_[1] = s1; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t state_[2];
};

// FNV-1a, used for replay/dataset content hashes.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace marl
