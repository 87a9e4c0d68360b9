#include "hepml/crc32c.hpp"

#include <array>
#include <bit>

namespace hepml {
namespace {

// Reversed Castagnoli polynomial.
constexpr uint32_t kPolyReflected = 0x82f63b78u;

constexpr std::array<uint32_t, 256> make_table() {
  std::array<uint32_t, 256> t{};
  for (uint32_t i = 0; i < 256; ++i) {
    uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? (c >> 1) ^ kPolyReflected : c >> 1;
    t[i] = c;
  }
  return t;
}

constexpr auto kTable = make_table();

}  // namespace

uint32_t crc32c(const void* data, size_t n, uint32_t seed_crc) {
  const auto* p = static_cast<const uint8_t*>(data);
  uint32_t c = ~seed_crc;
  for (size_t i = 0; i < n; ++i) c = kTable[(c ^ p[i]) & 0xff] ^ (c >> 8);
  return ~c;
}

uint32_t mask_crc(uint32_t crc) { return std::rotr(crc, 15) + kCrcMaskDelta; }

uint32_t unmask_crc(uint32_t masked) {
  return std::rotl(uint32_t(masked - kCrcMaskDelta), 15);
}

}  // namespace hepml
