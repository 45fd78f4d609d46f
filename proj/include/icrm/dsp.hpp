#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icrm/class_label.hpp"
#include "icrm/errors.hpp"

namespace icrm {

struct EmptySignal : Error { using Error::Error; };
struct ZeroFactor : Error { using Error::Error; };
struct TruncatedStream : Error { using Error::Error; };
struct OverlongVarint : Error { using Error::Error; };
struct MalformedBlock : Error { using Error::Error; };

inline constexpr std::size_t kDefaultWindowLen = 106;
inline constexpr std::size_t kDefaultDecimation = 8;

struct SegmentSource {
    std::string record_id;
    std::size_t channel = 0;
    std::size_t start_sample = 0;
};

// One classifier input window.
struct Segment {
    std::vector<double> samples;
    SegmentSource source;
    std::optional<ClassLabel> label;
};

// Keeps every factor-th sample, output[k] = x[k*factor], output length
// floor(len/factor). With anti_alias set the signal first passes through a
// 32-tap (order 31) Hamming-windowed linear-phase FIR low-pass with cutoff
// at the decimated Nyquist; edges use symmetric reflection.
std::vector<double> decimate(std::span<const double> signal, std::size_t factor, bool anti_alias);

// The FIR taps used by decimate(), unity DC gain. Exposed so the streaming
// path in the communicator applies the identical filter.
std::vector<double> decimation_fir_taps(std::size_t factor);

// Symmetric (half-sample) reflection of an out-of-range index into [0, n),
// the edge policy decimate() uses. Exposed for the streaming decimator.
std::size_t reflect_index(std::int64_t idx, std::size_t n);

// Tiles the signal into windows [k*hop, k*hop + window_len); a trailing
// partial window is discarded. A too-short signal yields an empty list.
std::vector<Segment> segment_signal(std::span<const double> signal, std::size_t window_len,
                                    std::size_t hop, const SegmentSource& origin = {});

// Z-score per segment: mean 0, population standard deviation 1. Flat-line
// inputs (sigma < 1e-12) come back as all zeros.
std::vector<double> normalize(std::span<const double> samples);

inline constexpr std::uint8_t kCodecDeltaVarint = 0x01;

// Lossless delta/zig-zag/varint block. Serialized layout (bit-exact):
//   byte 0      codec id (0x01)
//   bytes 1-2   first sample, 16-bit LE two's complement
//   bytes 3-6   original length, 32-bit LE
//   bytes 7..   successive differences, zig-zag mapped, base-128 varints
//               (7 data bits per byte, high bit = continuation)
struct CompressedBlock {
    std::uint8_t codec_id = kCodecDeltaVarint;
    std::int16_t first_sample = 0;
    std::uint32_t original_len = 0;
    std::vector<std::uint8_t> deltas;

    std::vector<std::uint8_t> to_bytes() const;
    static CompressedBlock from_bytes(std::span<const std::uint8_t> bytes);

    std::size_t byte_size() const { return 7 + deltas.size(); }
};

CompressedBlock compress(std::span<const std::int16_t> samples);
std::vector<std::int16_t> decompress(const CompressedBlock& block);

} // namespace icrm
