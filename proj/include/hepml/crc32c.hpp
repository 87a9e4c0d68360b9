#pragma once

#include <cstddef>
#include <cstdint>

namespace hepml {

/// CRC-32C (Castagnoli, reflected, polynomial 0x1EDC6F41).
uint32_t crc32c(const void* data, size_t n, uint32_t seed_crc = 0);

/// Record-framing mask applied to CRCs stored on disk:
/// masked = rotr(crc, 15) + 0xa282ead8 (mod 2^32).
constexpr uint32_t kCrcMaskDelta = 0xa282ead8u;

uint32_t mask_crc(uint32_t crc);
uint32_t unmask_crc(uint32_t masked);

}  // namespace hepml
