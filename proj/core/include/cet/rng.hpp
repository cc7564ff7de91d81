#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cet {

// Seed-stream tags. Every stochastic component draws its seed through
// derive_seed(root, tag, index) so that runs are reproducible and cells
// of an experiment get independent streams from one root seed.
enum SeedTag : std::uint64_t {
  kSeedSynth = 1,
  kSeedInit = 2,
  kSeedPretrain = 3,
  kSeedFinetune = 4,
  kSeedSelector = 5,
  kSeedSubsample = 6,
  kSeedShuffle = 7,
  kSeedHash = 8,
  kSeedRun = 9,
};

std::uint64_t splitmix64(std::uint64_t& state);

// Stateless derivation: root -> (tag, index) -> child seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag,
                          std::uint64_t index = 0);

// mt19937_64 engine with hand-rolled bounded draws and shuffling.
// std::shuffle / std::uniform_int_distribution are implementation-defined,
// which would break the byte-identical reproducibility contract across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n);

  // In-place Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices drawn uniformly from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k);

 private:
  std::mt19937_64 gen_;
};

}  // namespace cet
