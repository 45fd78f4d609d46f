#include <doctest.h>

#include <cstdint>
#include <string_view>
#include <vector>

#include "icrm/checksum.hpp"

using namespace icrm;

namespace {

std::vector<std::uint8_t> bytes_of(std::string_view s) {
    return {s.begin(), s.end()};
}

} // namespace

TEST_CASE("crc16-ccitt matches published check values") {
    CHECK(crc16_ccitt(bytes_of("123456789")) == 0x29B1);
    CHECK(crc16_ccitt({}) == 0xFFFF);              // init value survives empty input
    CHECK(crc16_ccitt(bytes_of("A")) == 0xB915);   // single byte
}

TEST_CASE("crc32 matches published check values") {
    CHECK(crc32(bytes_of("123456789")) == 0xCBF43926);
    CHECK(crc32({}) == 0x00000000);
    CHECK(crc32(bytes_of("a")) == 0xE8B7BE43);
}

TEST_CASE("checksums react to any single-bit change") {
    std::vector<std::uint8_t> data(64);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<std::uint8_t>(i * 7);
    const std::uint16_t c16 = crc16_ccitt(data);
    const std::uint32_t c32 = crc32(data);
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (int bit = 0; bit < 8; ++bit) {
            std::vector<std::uint8_t> tweaked = data;
            tweaked[i] ^= static_cast<std::uint8_t>(1u << bit);
            CHECK(crc16_ccitt(tweaked) != c16);
            CHECK(crc32(tweaked) != c32);
        }
    }
}
