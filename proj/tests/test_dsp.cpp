#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "icrm/dsp.hpp"
#include "icrm/rng.hpp"

using namespace icrm;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

std::vector<double> sine(double freq_hz, double rate_hz, std::size_t n, double amp = 1.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = amp * std::sin(2.0 * kPi * freq_hz * static_cast<double>(i) / rate_hz);
    return x;
}

} // namespace

TEST_CASE("plain decimation keeps every factor-th sample") {
    const std::vector<double> x{1, 2, 3, 4};
    CHECK(decimate(x, 2, false) == std::vector<double>{1, 3});
    CHECK(decimate(x, 1, false) == x);
    CHECK(decimate(x, 4, false) == std::vector<double>{1});
    CHECK(decimate(x, 5, false).empty());
    CHECK_THROWS_AS((void)decimate(x, 0, false), ZeroFactor);
    CHECK_THROWS_AS((void)decimate({}, 2, false), EmptySignal);
}

TEST_CASE("output length is floor(n/factor) with or without the filter") {
    Rng rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 1 + rng.bounded(500);
        const std::size_t f = 1 + rng.bounded(12);
        std::vector<double> x(n);
        for (double& v : x) v = rng.normal();
        CHECK(decimate(x, f, false).size() == n / f);
        CHECK(decimate(x, f, true).size() == n / f);
    }
}

TEST_CASE("anti-alias filter passes a low tone and kills a high one") {
    // 1 kHz rate, factor 8 -> decimated Nyquist 62.5 Hz
    const std::vector<double> low = sine(5.0, 1000.0, 4000);
    const std::vector<double> low_d = decimate(low, 8, true);
    // compare against the ideal 5 Hz tone sampled at 125 Hz, skipping edges
    double worst = 0.0;
    for (std::size_t k = 20; k + 20 < low_d.size(); ++k) {
        const double want = std::sin(2.0 * kPi * 5.0 * static_cast<double>(8 * k) / 1000.0);
        worst = std::max(worst, std::abs(low_d[k] - want));
    }
    CHECK(worst < 0.02);

    const std::vector<double> high = sine(250.0, 1000.0, 4000);
    const std::vector<double> high_d = decimate(high, 8, true);
    double peak = 0.0;
    for (std::size_t k = 20; k + 20 < high_d.size(); ++k) peak = std::max(peak, std::abs(high_d[k]));
    CHECK(peak < 0.02);
}

TEST_CASE("fir taps: unity DC gain, symmetric, 32 taps") {
    const std::vector<double> taps = decimation_fir_taps(8);
    REQUIRE(taps.size() == 32);
    CHECK(std::accumulate(taps.begin(), taps.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < taps.size() / 2; ++i)
        CHECK(taps[i] == doctest::Approx(taps[taps.size() - 1 - i]).epsilon(1e-12));
    // a DC signal must come through unchanged away from nothing: constant in, constant out
    const std::vector<double> flat(512, 3.25);
    for (double v : decimate(flat, 8, true)) CHECK(v == doctest::Approx(3.25).epsilon(1e-9));
}

TEST_CASE("reflect_index folds out-of-range indices symmetrically") {
    // n = 5: ..., x[2], x[1], x[0] | x[0], x[1], ..., x[4] | x[4], x[3], ...
    CHECK(reflect_index(0, 5) == 0);
    CHECK(reflect_index(4, 5) == 4);
    CHECK(reflect_index(-1, 5) == 0);
    CHECK(reflect_index(-2, 5) == 1);
    CHECK(reflect_index(5, 5) == 4);
    CHECK(reflect_index(6, 5) == 3);
    CHECK(reflect_index(-6, 5) == 4); // f(-6) = f(5) = f(4): bounces twice
    // reflection never leaves [0, n)
    for (std::int64_t i = -30; i < 30; ++i) CHECK(reflect_index(i, 7) < 7);
}

TEST_CASE("segmentation tiles without overlap and drops the tail") {
    std::vector<double> x(1810);
    std::iota(x.begin(), x.end(), 0.0);
    SegmentSource origin;
    origin.record_id = "rec";
    origin.channel = 2;
    const std::vector<Segment> segs = segment_signal(x, 106, 106, origin);
    REQUIRE(segs.size() == 17); // floor(1810 / 106)
    for (std::size_t k = 0; k < segs.size(); ++k) {
        REQUIRE(segs[k].samples.size() == 106);
        CHECK(segs[k].samples.front() == static_cast<double>(k * 106));
        CHECK(segs[k].samples.back() == static_cast<double>(k * 106 + 105));
        CHECK(segs[k].source.record_id == "rec");
        CHECK(segs[k].source.channel == 2);
        CHECK(segs[k].source.start_sample == k * 106);
        CHECK(!segs[k].label.has_value());
    }

    CHECK(segment_signal(std::vector<double>(105), 106, 106).empty());
    CHECK(segment_signal(std::vector<double>(106), 106, 106).size() == 1);
    CHECK_THROWS_AS((void)segment_signal(x, 0, 106), ZeroFactor);
    CHECK_THROWS_AS((void)segment_signal(x, 106, 0), ZeroFactor);
}

TEST_CASE("segmentation with a hop shorter than the window overlaps") {
    std::vector<double> x(20);
    std::iota(x.begin(), x.end(), 0.0);
    const std::vector<Segment> segs = segment_signal(x, 10, 5);
    REQUIRE(segs.size() == 3); // starts 0, 5, 10
    CHECK(segs[1].samples.front() == 5.0);
    CHECK(segs[2].samples.back() == 19.0);
}

TEST_CASE("normalize yields zero mean and unit population sd") {
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> x(50 + rng.bounded(100));
        for (double& v : x) v = rng.uniform(-5.0, 40.0);
        const std::vector<double> z = normalize(x);
        REQUIRE(z.size() == x.size());
        double mean = 0.0;
        for (double v : z) mean += v;
        mean /= static_cast<double>(z.size());
        double var = 0.0;
        for (double v : z) var += (v - mean) * (v - mean);
        var /= static_cast<double>(z.size());
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("normalize maps flat lines to zeros and rejects empty input") {
    const std::vector<double> flat(32, 7.5);
    for (double v : normalize(flat)) CHECK(v == 0.0);
    CHECK_THROWS_AS((void)normalize({}), EmptySignal);
}

TEST_CASE("codec block layout is bit-exact") {
    const std::vector<std::int16_t> x{-416, -401, -396, -390};
    const CompressedBlock block = compress(x);
    CHECK(block.codec_id == 0x01);
    CHECK(block.first_sample == -416);
    CHECK(block.original_len == 4);
    // deltas 15, 5, 6 -> zig-zag 30, 10, 12 -> single varint bytes
    CHECK(block.deltas == std::vector<std::uint8_t>{30, 10, 12});

    const std::vector<std::uint8_t> bytes = block.to_bytes();
    REQUIRE(bytes.size() == 10);
    CHECK(bytes[0] == 0x01);
    CHECK(bytes[1] == 0x60); // -416 = 0xFE60 LE
    CHECK(bytes[2] == 0xFE);
    CHECK(bytes[3] == 0x04); // length 4 LE
    CHECK(bytes[4] == 0x00);
    CHECK(bytes[5] == 0x00);
    CHECK(bytes[6] == 0x00);

    const CompressedBlock back = CompressedBlock::from_bytes(bytes);
    CHECK(decompress(back) == x);
}

TEST_CASE("codec roundtrip over random and adversarial vectors") {
    Rng rng(2024);
    for (int trial = 0; trial < 10000; ++trial) {
        std::vector<std::int16_t> x(1 + rng.bounded(96));
        for (auto& v : x) v = static_cast<std::int16_t>(rng.bounded(65536) - 32768);
        const std::vector<std::int16_t> back = decompress(CompressedBlock::from_bytes(compress(x).to_bytes()));
        REQUIRE(back == x);
    }

    // extreme alternation exercises the widest deltas (three varint bytes)
    std::vector<std::int16_t> extreme;
    for (int i = 0; i < 64; ++i)
        extreme.push_back(i % 2 == 0 ? std::numeric_limits<std::int16_t>::min()
                                     : std::numeric_limits<std::int16_t>::max());
    const CompressedBlock block = compress(extreme);
    for (std::uint8_t d : block.deltas) CHECK((d & 0x80) == ((d == block.deltas.back()) ? 0 : 0x80));
    CHECK(decompress(CompressedBlock::from_bytes(block.to_bytes())) == extreme);

    const std::vector<std::int16_t> single{12345};
    CHECK(decompress(compress(single)) == single);
    CHECK(compress(single).byte_size() == 7);
}

TEST_CASE("codec compresses what it should") {
    // flat line: every delta is one byte of zero
    const std::vector<std::int16_t> flat(64, 1000);
    CHECK(compress(flat).byte_size() == 7 + 63);

    // a gentle ramp with small jitter stays well under the raw 2 bytes/sample
    Rng rng(55);
    std::vector<std::int16_t> ramp(1000);
    for (std::size_t i = 0; i < ramp.size(); ++i)
        ramp[i] = static_cast<std::int16_t>(static_cast<std::int64_t>(i / 4) +
                                            static_cast<std::int64_t>(rng.bounded(7)) - 3);
    const double ratio =
        static_cast<double>(compress(ramp).byte_size()) / static_cast<double>(2 * ramp.size());
    CHECK(ratio < 0.55);
}

TEST_CASE("codec rejects malformed byte streams") {
    CHECK_THROWS_AS((void)CompressedBlock::from_bytes(std::vector<std::uint8_t>{}),
                    TruncatedStream);
    CHECK_THROWS_AS((void)CompressedBlock::from_bytes(std::vector<std::uint8_t>{0x01, 0x00}),
                    TruncatedStream);

    // unknown codec id
    std::vector<std::uint8_t> bad = compress(std::vector<std::int16_t>{1, 2, 3}).to_bytes();
    bad[0] = 0x7F;
    CHECK_THROWS_AS((void)CompressedBlock::from_bytes(bad), MalformedBlock);

    // declared length exceeds the encoded deltas
    std::vector<std::uint8_t> short_deltas = compress(std::vector<std::int16_t>{1, 2, 3}).to_bytes();
    short_deltas.pop_back();
    CHECK_THROWS_AS((void)decompress(CompressedBlock::from_bytes(short_deltas)), TruncatedStream);

    // varint runs past its 3-byte budget for int16 deltas
    CompressedBlock forged;
    forged.first_sample = 0;
    forged.original_len = 2;
    forged.deltas = {0x80, 0x80, 0x80, 0x01};
    CHECK_THROWS_AS((void)decompress(forged), OverlongVarint);

    // trailing bytes after the declared samples
    CompressedBlock padded = compress(std::vector<std::int16_t>{5, 6});
    padded.deltas.push_back(0x00);
    CHECK_THROWS_AS((void)decompress(padded), MalformedBlock);

    CHECK_THROWS_AS((void)compress({}), EmptySignal);
}
