#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace covtest {

// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
// easy as 1, 2, 3"). Pure: identical (counter, key) always gives the same block.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key) noexcept;

// One independent random stream per (master seed, stream index).
//
// Derivation: the Philox key is the 64-bit master seed split into two 32-bit
// words (low word first); the counter is (block_lo, block_hi, index_lo,
// index_hi) where `block` starts at 0 and increments once per 128 output bits.
// Distinct (seed, index) pairs therefore address disjoint counter/key
// sequences, which is what makes the derivation injective.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t index) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t index() const noexcept { return index_; }

  std::uint64_t next_u64() noexcept;

  // Uniform on the open interval (0, 1), 53 bits of resolution.
  double uniform() noexcept;

  // Standard normal via the Box-Muller transform; values come in pairs and the
  // second of each pair is cached.
  double normal() noexcept;

  void fill_normal(std::span<double> out) noexcept;

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t index_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

// Mixes a master seed with a purpose tag (SplitMix64 finalizer) so that, e.g.,
// null calibration and power evaluation never share streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept;

}  // namespace covtest
