#pragma once

#include <array>
#include <cstdint>

namespace hgff {

// Counter-based generator (Philox 4x32, 10 rounds).  A (seed, stream) pair
// keys an independent random sequence addressable by index, so samples can be
// produced in any order or split across threads and still come out
// bit-identical.
struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

namespace philox {

std::array<std::uint32_t, 4> block(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

}  // namespace philox

// Random-access stream of iid uniforms / standard normals for one (seed,
// stream) pair.  normal(k) is the k-th variate regardless of evaluation
// order; pairs are produced from one counter block via Box-Muller.
class NormalStream {
 public:
  explicit NormalStream(RngSpec spec) : spec_(spec) {}

  double normal(std::uint64_t index) const;
  // Uniform on (0, 1), one per counter block.
  double uniform(std::uint64_t index) const;

  RngSpec spec() const { return spec_; }

 private:
  RngSpec spec_;
};

// Sequential 32-bit generator over the same keyed counter sequence, for
// consumers that just need a stream of words (random walks in tests).
class CounterRng {
 public:
  explicit CounterRng(RngSpec spec) : spec_(spec) {}

  std::uint32_t next_u32();
  // Uniform draw in [0, m) for m a power of two.
  std::uint32_t next_below_pow2(std::uint32_t m) { return next_u32() & (m - 1); }

 private:
  RngSpec spec_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int have_ = 0;
};

}  // namespace hgff
