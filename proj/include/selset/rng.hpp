#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

namespace selset {

// Derives an independent stream seed from a base seed and up to two tags
// (splitmix64 finalizer). Used everywhere a sub-computation needs its own
// reproducible random stream.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t index = 0);

// Deterministic random source. The bit-to-double mappings are spelled out
// here instead of going through std:: distributions, so that identical seeds
// give identical streams independent of the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal();

  // Uniform integer in {0, ..., n-1}; n must be positive.
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  Eigen::VectorXd normal_vector(int n);
  Eigen::VectorXd uniform_vector(int n, double lo, double hi);

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace selset
