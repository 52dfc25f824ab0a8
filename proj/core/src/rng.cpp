#include "hgff/rng.hpp"

#include <cmath>
#include <numbers>

namespace hgff {
namespace philox {
namespace {

constexpr std::uint32_t kW32A = 0x9E3779B9u;  // golden ratio
constexpr std::uint32_t kW32B = 0xBB67AE85u;  // sqrt(3) - 1
constexpr std::uint32_t kM4x32A = 0xD2511F53u;
constexpr std::uint32_t kM4x32B = 0xCD9E8D57u;

inline std::uint32_t mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t* hi) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  *hi = static_cast<std::uint32_t>(p >> 32);
  return static_cast<std::uint32_t>(p);
}

inline void round_once(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
  std::uint32_t hi0, hi1;
  const std::uint32_t lo0 = mulhilo(kM4x32A, ctr[0], &hi0);
  const std::uint32_t lo1 = mulhilo(kM4x32B, ctr[2], &hi1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  key[0] += kW32A;
  key[1] += kW32B;
}

}  // namespace

std::array<std::uint32_t, 4> block(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                      static_cast<std::uint32_t>(seed >> 32)};
  for (int r = 0; r < 10; ++r) round_once(ctr, key);
  return ctr;
}

}  // namespace philox

namespace {

// Strictly inside (0, 1): 53-bit mantissa offset by half an ulp.
inline double u01(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

double NormalStream::uniform(std::uint64_t index) const {
  const auto b = philox::block(spec_.seed, spec_.stream, index);
  return u01(b[0], b[1]);
}

double NormalStream::normal(std::uint64_t index) const {
  const std::uint64_t pair = index >> 1;
  const auto b = philox::block(spec_.seed, spec_.stream, pair);
  const double u1 = u01(b[0], b[1]);
  const double u2 = u01(b[2], b[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  return (index & 1) == 0 ? r * std::cos(a) : r * std::sin(a);
}

std::uint32_t CounterRng::next_u32() {
  if (have_ == 0) {
    buffer_ = philox::block(spec_.seed, spec_.stream, counter_++);
    have_ = 4;
  }
  return buffer_[static_cast<size_t>(--have_)];
}

}  // namespace hgff
