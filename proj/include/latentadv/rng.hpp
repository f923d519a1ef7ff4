#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace latentadv {

// 64-bit FNV-1a. Used for vocabulary hashes, config hashes and seed derivation.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 1469598103934665603ULL);

// Seeded random source. The engine (mt19937_64) is bit-exact across standard
// libraries; the distributions below are written out so that results do not
// depend on the library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Named sub-stream of a global seed, e.g. derive(seed, "attack", {case, len}).
  static Rng derive(std::uint64_t seed, std::string_view stream,
                    std::initializer_list<std::uint64_t> salt = {});
  static Rng derive(std::uint64_t seed, std::string_view stream, std::string_view key,
                    std::initializer_list<std::uint64_t> salt = {});

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n);
  double normal();
  // Index drawn with probability proportional to weights (non-negative, non-zero sum).
  std::size_t categorical(const std::vector<double>& weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace latentadv
