#include "nvmap/rng.hpp"

namespace nvmap {

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t substream) noexcept
    : key_(mix64(mix64(mix64(seed) ^ stream) ^ (substream * 0xd1b54a32d192ed03ULL))) {}

CounterRng::result_type CounterRng::operator()() noexcept {
  return mix64(key_ ^ mix64(counter_++));
}

double CounterRng::uniform() noexcept {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

std::int64_t CounterRng::uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>((*this)());
  // Lemire-style rejection keeps the draw unbiased.
  const std::uint64_t limit = max() - max() % span;
  std::uint64_t r;
  do {
    r = (*this)();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % span);
}

}  // namespace nvmap
