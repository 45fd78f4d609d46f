#pragma once

#include <cstdint>
#include <span>

namespace icrm {

// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out.
// Check value: crc16_ccitt("123456789") == 0x29B1.
std::uint16_t crc16_ccitt(std::span<const std::uint8_t> data);

// CRC-32 (IEEE 802.3, reflected, init/xor-out 0xFFFFFFFF).
// Check value: crc32("123456789") == 0xCBF43926.
std::uint32_t crc32(std::span<const std::uint8_t> data);

} // namespace icrm
