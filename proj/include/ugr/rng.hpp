#ifndef UGR_RNG_HPP
#define UGR_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

namespace ugr {

// splitmix64 finalizer; bijective on u64.
constexpr uint64_t hash_mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr uint64_t key_combine(uint64_t a, uint64_t b) {
  return hash_mix(a ^ hash_mix(b));
}

// Counter-based stream: value depends only on (seed, stream, element),
// never on call order or thread schedule.
inline float counter_uniform(uint64_t seed, uint64_t stream, uint64_t element) {
  uint64_t h = hash_mix(key_combine(key_combine(seed, stream), element));
  return static_cast<float>(h >> 40) * (1.0f / 16777216.0f);  // 24-bit mantissa, [0,1)
}

/// Sequential deterministic RNG (splitmix64 stream). Not cryptographic.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  float uniform_f() { return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f); }

  // [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n) via 128-bit multiply; deterministic, slightly biased for huge n (fine here)
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>((static_cast<__uint128_t>(next_u64()) * static_cast<uint64_t>(n)) >> 64);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  float normal_f() { return static_cast<float>(normal()); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ugr

#endif
