#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace casecohort {

// Seedable generator with explicitly coded distributions so that output is
// reproducible across platforms (std distributions are not portable).
// Substream rule: replicate r draws from seed' = splitmix64(seed ^ golden*(r+1)),
// so parallel and serial Monte Carlo runs see identical streams.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(splitmix64(seed)) {}

  static uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  static Rng substream(uint64_t seed, uint64_t index) {
    return Rng(seed ^ (0x9E3779B97F4A7C15ull * (index + 1)));
  }

  // in [0, 1)
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // strictly positive uniform, safe for log()
  double uniform_pos() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

  bool bernoulli(double p) { return uniform01() < p; }

  // uniform integer in [0, n), rejection sampled
  int uniform_int(int n) {
    const uint64_t bound = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return static_cast<int>(x % bound);
  }

  // SRSWOR of m items out of {0,...,n-1}; result sorted ascending
  std::vector<int> sample_without_replacement(int n, int m) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int k = 0; k < m; ++k) {
      const int j = k + uniform_int(n - k);
      std::swap(pool[k], pool[j]);
    }
    std::vector<int> picked(pool.begin(), pool.begin() + m);
    std::sort(picked.begin(), picked.end());
    return picked;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace casecohort
