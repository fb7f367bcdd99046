#pragma once
#include <cstdint>
#include <initializer_list>
#include <random>

#include "lrtd/types.hpp"

namespace lrtd {

// SplitMix64 finalizer; used both as a bit mixer and to derive stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic child seed: chain the path components through the mixer so
// (seed, iteration, chain) and (seed, chain) style keys never collide by layout.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t x = splitmix64(master ^ 0xa02bdbf7bb3c0a7ULL);
  for (std::uint64_t p : path) x = splitmix64(x ^ splitmix64(p));
  return x;
}

// One independent random stream. Streams derived from distinct seeds are
// treated as independent; every concurrent chain owns exactly one.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }  // [0,1)

  std::uint64_t integer(std::uint64_t n) {  // [0,n)
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(engine_);
  }

  Vector normal_vector(Index d) {
    Vector v(d);
    for (Index i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  std::mt19937_64 &engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace lrtd
