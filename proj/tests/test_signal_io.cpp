#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "icrm/rng.hpp"
#include "icrm/signal_io.hpp"

using namespace icrm;

namespace {

SignalRecord small_record() {
    SignalRecord r;
    r.header.record_name = "unit";
    r.header.num_signals = 2;
    r.header.sampling_rate = 250.0;
    r.header.num_samples = 4;
    SignalDescriptor ecg;
    ecg.gain = 200.0;
    ecg.baseline = 0;
    ecg.description = "ECG lead I";
    SignalDescriptor egm;
    egm.gain = 100.0;
    egm.baseline = -12;
    egm.description = "EGM pole 1";
    r.header.signals = {ecg, egm};
    r.channels = {{0.0, 1.0, -0.5, 0.25}, {-1.0, 0.0, 2.0, -2.0}};
    return r;
}

} // namespace

TEST_CASE("wfdb header roundtrip keeps every field") {
    const SignalRecord r = small_record();
    const std::string text = write_wfdb_header(r.header);
    const RecordHeader back = parse_wfdb_header(text);
    CHECK(back.record_name == "unit");
    CHECK(back.num_signals == 2);
    CHECK(back.sampling_rate == 250.0);
    CHECK(back.num_samples == 4);
    REQUIRE(back.signals.size() == 2);
    CHECK(back.signals[0].gain == 200.0);
    CHECK(back.signals[0].baseline == 0);
    CHECK(back.signals[1].gain == 100.0);
    CHECK(back.signals[1].baseline == -12);
    CHECK(back.signals[0].description == "ECG lead I");
    CHECK(back.signals[1].description == "EGM pole 1");
}

TEST_CASE("wfdb gain(baseline)/units syntax parses") {
    const RecordHeader h = parse_wfdb_header(
        "rec 1 360 650000\n"
        "rec.dat 16 200(-128)/mV 16 0 0 0 0 MLII\n");
    CHECK(h.sampling_rate == 360.0);
    CHECK(h.num_samples == 650000);
    REQUIRE(h.num_signals == 1);
    CHECK(h.signals[0].gain == 200.0);
    CHECK(h.signals[0].baseline == -128);
    CHECK(h.signals[0].units == "mV");
    CHECK(h.signals[0].description == "MLII");
}

TEST_CASE("wfdb header defaults: bare gain, no units, no description") {
    const RecordHeader h = parse_wfdb_header("r 1 1000 32\nr.dat 16 100\n");
    REQUIRE(h.num_signals == 1);
    CHECK(h.signals[0].gain == 100.0);
    CHECK(h.signals[0].baseline == 0);
    CHECK(h.signals[0].units == "mV");
}

TEST_CASE("wfdb rejects what it cannot represent") {
    // wrong storage format
    CHECK_THROWS_AS((void)parse_wfdb_header("r 1 1000 32\nr.dat 212 200\n"), UnsupportedFormat);
    // zero signals
    CHECK_THROWS_AS((void)parse_wfdb_header("r 0 1000 32\n"), InvalidCounts);
    // descriptor line count mismatch
    CHECK_THROWS_AS((void)parse_wfdb_header("r 2 1000 32\nr.dat 16 200\n"), MalformedHeader);
    // negative sampling rate
    CHECK_THROWS_AS((void)parse_wfdb_header("r 1 -5 32\nr.dat 16 200\n"), InvalidCounts);
    // garbage where a number belongs
    CHECK_THROWS_AS((void)parse_wfdb_header("r x 1000 32\n"), MalformedHeader);
    CHECK_THROWS_AS((void)parse_wfdb_header(""), MalformedHeader);
}

TEST_CASE("wfdb stored gain of zero means uncalibrated: default 200") {
    const RecordHeader h = parse_wfdb_header("r 1 1000 32\nr.dat 16 0\n");
    CHECK(h.signals[0].gain == 200.0);
}

TEST_CASE("samples roundtrip: physical -> raw -> physical is exact on grid") {
    const SignalRecord r = small_record();
    const std::vector<std::uint8_t> dat = write_wfdb_samples(r);
    CHECK(dat.size() == 2 * 2 * 4); // two channels, int16, four samples
    const SignalRecord back = read_wfdb_samples(dat, r.header);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(back.channels[c][i] == doctest::Approx(r.channels[c][i]).epsilon(1e-12));
}

TEST_CASE("interleaving is channel-fastest") {
    SignalRecord r = small_record();
    r.channels = {{1.0, 2.0, 3.0, 4.0}, {-1.0, -2.0, -3.0, -4.0}};
    const std::vector<std::uint8_t> dat = write_wfdb_samples(r);
    // sample 0: ch0 = 1.0mV * 200 = 200 = 0x00C8 LE, ch1 = -1*100 - 12 = -112
    CHECK(dat[0] == 0xC8);
    CHECK(dat[1] == 0x00);
    const std::int16_t ch1raw = static_cast<std::int16_t>(dat[2] | (dat[3] << 8));
    CHECK(ch1raw == -112);
}

TEST_CASE("dat length must match the header") {
    const SignalRecord r = small_record();
    std::vector<std::uint8_t> dat = write_wfdb_samples(r);
    dat.pop_back();
    CHECK_THROWS_AS((void)read_wfdb_samples(dat, r.header), LengthMismatch);
    dat.push_back(0);
    dat.push_back(0);
    CHECK_THROWS_AS((void)read_wfdb_samples(dat, r.header), LengthMismatch);
}

TEST_CASE("seeded wfdb roundtrip property over random records") {
    Rng rng(1234);
    for (int trial = 0; trial < 25; ++trial) {
        SignalRecord r;
        r.header.record_name = "prop";
        r.header.num_signals = 1 + rng.bounded(3);
        r.header.sampling_rate = 125.0 * static_cast<double>(1 + rng.bounded(8));
        r.header.num_samples = 1 + rng.bounded(200);
        for (std::size_t s = 0; s < r.header.num_signals; ++s) {
            SignalDescriptor d;
            d.gain = 100.0 * static_cast<double>(1 + rng.bounded(4));
            d.baseline = static_cast<int>(rng.bounded(100)) - 50;
            d.description = "ch" + std::to_string(s);
            r.header.signals.push_back(d);
            std::vector<double> ch(r.header.num_samples);
            for (double& v : ch) {
                // quantize to the gain grid so the roundtrip is exact
                const double mv = rng.uniform(-10.0, 10.0);
                v = std::round(mv * d.gain) / d.gain;
            }
            r.channels.push_back(std::move(ch));
        }
        const std::string head = write_wfdb_header(r.header);
        const std::vector<std::uint8_t> dat = write_wfdb_samples(r);
        const SignalRecord back = read_wfdb_samples(dat, parse_wfdb_header(head));
        REQUIRE(back.channels.size() == r.channels.size());
        for (std::size_t c = 0; c < r.channels.size(); ++c)
            for (std::size_t i = 0; i < r.header.num_samples; ++i)
                CHECK(back.channels[c][i] == doctest::Approx(r.channels[c][i]).epsilon(1e-9));
    }
}

TEST_CASE("header parser survives fuzzed inputs without crashing") {
    Rng rng(999);
    const std::string seedtext = "rec 2 1000 64\nrec.dat 16 200(0)/mV 16 0 0 0 0 a\nrec.dat 16 200\n";
    for (int trial = 0; trial < 300; ++trial) {
        std::string mangled = seedtext;
        const std::size_t cuts = 1 + rng.bounded(4);
        for (std::size_t c = 0; c < cuts && !mangled.empty(); ++c) {
            const std::size_t pos = rng.bounded(mangled.size());
            switch (rng.bounded(3)) {
                case 0: mangled[pos] = static_cast<char>(rng.bounded(256)); break;
                case 1: mangled.erase(pos, 1 + rng.bounded(5)); break;
                default: mangled.insert(pos, std::string(1 + rng.bounded(3), ' ')); break;
            }
        }
        try {
            const RecordHeader h = parse_wfdb_header(mangled);
            h.validate(); // anything accepted must be internally consistent
        } catch (const Error&) {
            // typed rejection is the expected outcome
        }
    }
}

TEST_CASE("csv roundtrip reproduces values and rate") {
    const SignalRecord r = small_record();
    const std::string text = write_csv_record(r);
    const SignalRecord back = read_csv_record(text);
    CHECK(back.header.sampling_rate == doctest::Approx(250.0));
    CHECK(back.header.num_signals == 2);
    REQUIRE(back.channels.size() == 2);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(back.channels[c][i] == r.channels[c][i]); // exact, shortest-roundtrip print
}

TEST_CASE("csv is strict about its grid") {
    CHECK_THROWS_AS((void)read_csv_record("t,ch0\n0,1\n0.001,2\n0.001,3\n"), NonMonotonicTime);
    CHECK_THROWS_AS((void)read_csv_record("t,ch0,ch1\n0,1\n"), RaggedRows);
    CHECK_THROWS_AS((void)read_csv_record("t,ch0\n0,abc\n"), ParseError);
    CHECK_THROWS_AS((void)read_csv_record(""), MalformedHeader);
    CHECK_THROWS_AS((void)read_csv_record("t,ch0\n"), MalformedHeader);
}

TEST_CASE("channel kinds follow the descriptor text unless overridden") {
    CHECK(infer_channel_kind("ECG lead II") == ChannelKind::SurfaceECG);
    CHECK(infer_channel_kind("surface ecg") == ChannelKind::SurfaceECG);
    CHECK(infer_channel_kind("EGM pole 1") == ChannelKind::IntracardiacEGM);
    CHECK(infer_channel_kind("") == ChannelKind::IntracardiacEGM);

    RecordHeader h = small_record().header;
    CHECK(channel_kind(h, 0) == ChannelKind::SurfaceECG);
    CHECK(channel_kind(h, 1) == ChannelKind::IntracardiacEGM);
    CHECK(channel_kind(h, 1, {{1, ChannelKind::SurfaceECG}}) == ChannelKind::SurfaceECG);
}

TEST_CASE("file helpers write and reload both formats") {
    const SignalRecord r = small_record();
    save_wfdb(r, "tsio_unit");
    const SignalRecord w = load_wfdb("tsio_unit.hea"); // suffix tolerated
    CHECK(w.header.num_samples == 4);
    CHECK(w.channels == load_wfdb("tsio_unit").channels);

    save_csv(r, "tsio_unit.csv");
    const SignalRecord c = load_csv("tsio_unit.csv");
    CHECK(c.channels == w.channels);

    CHECK_THROWS_AS((void)load_wfdb("tsio_missing"), IOFailure);
    CHECK_THROWS_AS((void)load_csv("tsio_missing.csv"), IOFailure);

    std::remove("tsio_unit.hea");
    std::remove("tsio_unit.dat");
    std::remove("tsio_unit.csv");
}
