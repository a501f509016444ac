#pragma once

#include <cstdint>
#include <random>

namespace cmlab {

// splitmix64 finalizer; used as the counter-mode mixer for replica streams.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream namespaces keep pilot, main and auxiliary draws disjoint for the
// same (masterSeed, replicaIndex).
enum class Stream : std::uint64_t {
  kMain = 1,
  kPilot = 2,
  kSeedMatrix = 3,
  kAudit = 4,
};

struct ReplicaSeed {
  std::uint64_t master_seed = 0;
  std::uint64_t replica_index = 0;
  Stream stream = Stream::kMain;

  [[nodiscard]] std::uint64_t derive() const noexcept {
    std::uint64_t h = mix64(master_seed);
    h = mix64(h ^ static_cast<std::uint64_t>(stream) * 0xd1342543de82ef95ULL);
    return mix64(h ^ replica_index);
  }
};

// Per-worker randomness source. Not thread-safe; one instance per replica.
class RandomSource {
 public:
  using engine_type = std::mt19937_64;

  explicit RandomSource(std::uint64_t seed = 0x5eedULL) { reseed(seed); }
  explicit RandomSource(const ReplicaSeed& rs) { reseed(rs.derive()); }

  void reseed(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(mix64(seed)),
                      static_cast<std::uint32_t>(mix64(seed) >> 32)};
    engine_.seed(seq);
  }

  // Uniform on [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  // Uniform on {0, ..., count - 1}; count must be positive.
  std::size_t index(std::size_t count) {
    return std::uniform_int_distribution<std::size_t>(0, count - 1)(engine_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  engine_type& engine() { return engine_; }

 private:
  engine_type engine_;
};

}  // namespace cmlab
