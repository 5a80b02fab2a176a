#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace mpac {

// Deterministic random stream. The engine is std::mt19937_64; the
// distribution mappings are pinned here so that a serialized stream
// resumes bit-for-bit and no hidden distribution state exists.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller, recomputed each call (no cached pair).
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Bernoulli with success probability p.
  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64.
    return bits() % n;
  }

  std::string serialize() const;
  void deserialize(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

// Stateless seed derivation (splitmix64 over a mixed key) so that
// independent streams can be spawned from one run seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                          std::uint64_t substream);

}  // namespace mpac
