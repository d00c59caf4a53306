#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

#include <Eigen/Core>

namespace agpolab {

/// splitmix64 finalizer. Used for all seed derivation so that derived
/// streams are reproducible bit-for-bit across platforms and runs.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// FNV-1a on bytes; turns prompt ids into stream labels.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Folds a label path into a root seed, one mix64 round per element.
/// derive_seed(root, {a}) != derive_seed(root, {a, 0}) by construction, so
/// callers can nest namespaces freely.
constexpr std::uint64_t derive_seed(std::uint64_t root,
                                    std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t s = mix64(root);
  for (std::uint64_t p : path) s = mix64(s ^ mix64(p));
  return s;
}

/// A deterministic random stream. mt19937_64 is fully specified by the
/// standard; uniform doubles and bounded ints are produced here rather than
/// through std distributions, whose output is implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased via rejection.
  std::uint32_t next_below(std::uint32_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::uint32_t>(x % bound);
  }

  /// Draws an index from a probability vector by CDF inversion. The vector
  /// must sum to ~1; the final index absorbs rounding slack.
  int sample_categorical(const Eigen::Ref<const Eigen::VectorXd>& probs) {
    const double u = next_unit();
    double acc = 0.0;
    const Eigen::Index n = probs.size();
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(n - 1);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace agpolab
