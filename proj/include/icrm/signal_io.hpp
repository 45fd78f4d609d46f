#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "icrm/errors.hpp"

namespace icrm {

struct MalformedHeader : Error { using Error::Error; };
struct UnsupportedFormat : Error { using Error::Error; };
struct InvalidCounts : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct RaggedRows : Error { using Error::Error; };
struct NonMonotonicTime : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };

struct SignalDescriptor {
    double gain = 200.0; // ADC units per millivolt; never zero
    int baseline = 0;    // ADC value corresponding to 0 mV
    std::string units = "mV";
    std::string description;
};

struct RecordHeader {
    std::string record_name;
    std::size_t num_signals = 0;
    double sampling_rate = 0.0; // Hz
    std::size_t num_samples = 0; // per channel; 0 = unknown until data is read
    std::vector<SignalDescriptor> signals;

    // Throws InvalidCounts / MalformedHeader when an invariant is broken.
    void validate() const;
};

// Multichannel record in physical units (millivolts), channel-major.
struct SignalRecord {
    RecordHeader header;
    std::vector<std::vector<double>> channels;

    void validate() const;
};

enum class ChannelKind : std::uint8_t { SurfaceECG, IntracardiacEGM };

// Descriptor text containing "ECG" (any case) maps to SurfaceECG, everything
// else to IntracardiacEGM. Archive descriptor strings are inconsistent, so
// callers can force a kind per channel through the override map.
ChannelKind infer_channel_kind(const std::string& description);
ChannelKind channel_kind(const RecordHeader& header, std::size_t channel,
                         const std::map<std::size_t, ChannelKind>& overrides = {});

// WFDB subset: ASCII header plus one 16-bit little-endian two's-complement
// interleaved .dat file. Only format 16 is accepted; anything else raises
// UnsupportedFormat rather than being misread.
RecordHeader parse_wfdb_header(const std::string& text);
std::string write_wfdb_header(const RecordHeader& header);

SignalRecord read_wfdb_samples(std::span<const std::uint8_t> bytes, const RecordHeader& header);
std::vector<std::uint8_t> write_wfdb_samples(const SignalRecord& record);

// File helpers; `path_base` may be given with or without the .hea suffix.
SignalRecord load_wfdb(const std::string& path_base);
void save_wfdb(const SignalRecord& record, const std::string& path_base);

// CSV interchange: header row `t,ch0,ch1,...`, one row per sample instant,
// comma separator, '.' decimal point, LF line endings, no quoting. Values
// are printed in shortest round-trip form, so read(write(r)) reproduces the
// sample values exactly. When sampling_rate_hz is 0 the rate is inferred
// from the t column spacing (single-row records default to 1000 Hz).
SignalRecord read_csv_record(const std::string& text, double sampling_rate_hz = 0.0);
std::string write_csv_record(const SignalRecord& record);

SignalRecord load_csv(const std::string& path, double sampling_rate_hz = 0.0);
void save_csv(const SignalRecord& record, const std::string& path);

} // namespace icrm
