#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace temba {

// Seeded generator shared by initialization, shuffling and the synthetic data
// generator. Same seed, same sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  double exponential(double mean) { return std::exponential_distribution<double>(1.0 / mean)(engine_); }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

  template <typename S>
  std::vector<S> normal_vec(std::size_t n, double stddev) {
    std::vector<S> v(n);
    for (auto& x : v) x = static_cast<S>(normal(0.0, stddev));
    return v;
  }
  template <typename S>
  std::vector<S> uniform_vec(std::size_t n, double lo, double hi) {
    std::vector<S> v(n);
    for (auto& x : v) x = static_cast<S>(uniform(lo, hi));
    return v;
  }

  template <typename It>
  void shuffle(It first, It last) {
    // Fisher-Yates with our own draws; std::shuffle's algorithm is unspecified.
    const auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      const auto j = integer(0, i);
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace temba
