#include "icrm/dsp.hpp"

#include <cmath>

namespace icrm {

namespace {

constexpr std::size_t kFirTaps = 32; // order 31, linear phase

} // namespace

// Symmetric (half-sample) reflection, folded until the index lands in range.
std::size_t reflect_index(std::int64_t i, std::size_t n) {
    const auto nn = static_cast<std::int64_t>(n);
    while (i < 0 || i >= nn) {
        if (i < 0) i = -1 - i;
        if (i >= nn) i = 2 * nn - 1 - i;
    }
    return static_cast<std::size_t>(i);
}

std::vector<double> decimation_fir_taps(std::size_t factor) {
    // Hamming-windowed sinc, cutoff at the decimated Nyquist (1/(2*factor)
    // cycles per input sample), normalized to unity DC gain.
    const double fc = 1.0 / (2.0 * static_cast<double>(factor));
    const double center = (kFirTaps - 1) / 2.0;
    std::vector<double> h(kFirTaps);
    double sum = 0.0;
    for (std::size_t n = 0; n < kFirTaps; ++n) {
        const double t = static_cast<double>(n) - center;
        const double x = 2.0 * M_PI * fc * t;
        const double sinc = (std::abs(x) < 1e-12) ? 1.0 : std::sin(x) / x;
        const double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (kFirTaps - 1));
        h[n] = 2.0 * fc * sinc * w;
        sum += h[n];
    }
    for (double& v : h) v /= sum;
    return h;
}

std::vector<double> decimate(std::span<const double> signal, std::size_t factor, bool anti_alias) {
    if (signal.empty()) throw EmptySignal("decimate: empty input");
    if (factor == 0) throw ZeroFactor("decimate: factor must be >= 1");

    const std::size_t n_out = signal.size() / factor;
    std::vector<double> out;
    out.reserve(n_out);

    if (!anti_alias) {
        for (std::size_t k = 0; k < n_out; ++k) out.push_back(signal[k * factor]);
        return out;
    }

    const std::vector<double> h = decimation_fir_taps(factor);
    for (std::size_t k = 0; k < n_out; ++k) {
        // group-delay-compensated convolution; reads source indices
        // [k*factor - 15, k*factor + 16]
        const long long base = static_cast<long long>(k * factor) + 16;
        double acc = 0.0;
        for (std::size_t j = 0; j < kFirTaps; ++j)
            acc += h[j] * signal[reflect_index(base - static_cast<long long>(j), signal.size())];
        out.push_back(acc);
    }
    return out;
}

std::vector<Segment> segment_signal(std::span<const double> signal, std::size_t window_len,
                                    std::size_t hop, const SegmentSource& origin) {
    if (window_len < 1) throw ZeroFactor("segment_signal: window_len must be >= 1");
    if (hop < 1) throw ZeroFactor("segment_signal: hop must be >= 1");

    std::vector<Segment> out;
    if (signal.size() < window_len) return out;

    const std::size_t count = (signal.size() - window_len) / hop + 1;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        Segment seg;
        const std::size_t start = k * hop;
        seg.samples.assign(signal.begin() + static_cast<std::ptrdiff_t>(start),
                           signal.begin() + static_cast<std::ptrdiff_t>(start + window_len));
        seg.source = origin;
        seg.source.start_sample = origin.start_sample + start;
        out.push_back(std::move(seg));
    }
    return out;
}

std::vector<double> normalize(std::span<const double> samples) {
    if (samples.empty()) throw EmptySignal("normalize: empty input");
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    var /= n;
    const double sigma = std::sqrt(var);

    std::vector<double> out(samples.size());
    if (sigma < 1e-12) return out; // flat-line guard: all zeros
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = (samples[i] - mean) / sigma;
    return out;
}

CompressedBlock compress(std::span<const std::int16_t> samples) {
    if (samples.empty()) throw EmptySignal("compress: empty input");

    CompressedBlock block;
    block.first_sample = samples[0];
    block.original_len = static_cast<std::uint32_t>(samples.size());
    block.deltas.reserve(samples.size());
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const std::int32_t d =
            static_cast<std::int32_t>(samples[i]) - static_cast<std::int32_t>(samples[i - 1]);
        std::uint32_t zz = (static_cast<std::uint32_t>(d) << 1) ^ static_cast<std::uint32_t>(d >> 31);
        do {
            std::uint8_t byte = static_cast<std::uint8_t>(zz & 0x7F);
            zz >>= 7;
            if (zz != 0) byte |= 0x80;
            block.deltas.push_back(byte);
        } while (zz != 0);
    }
    return block;
}

std::vector<std::int16_t> decompress(const CompressedBlock& block) {
    if (block.codec_id != kCodecDeltaVarint)
        throw MalformedBlock("unknown codec id " + std::to_string(block.codec_id));
    if (block.original_len == 0) throw MalformedBlock("zero-length block");

    std::vector<std::int16_t> out;
    out.reserve(block.original_len);
    out.push_back(block.first_sample);

    std::size_t pos = 0;
    std::int32_t prev = block.first_sample;
    for (std::uint32_t i = 1; i < block.original_len; ++i) {
        std::uint32_t zz = 0;
        int shift = 0;
        int nbytes = 0;
        while (true) {
            if (pos >= block.deltas.size())
                throw TruncatedStream("delta stream ended inside sample " + std::to_string(i));
            const std::uint8_t byte = block.deltas[pos++];
            ++nbytes;
            if (nbytes > 3)
                throw OverlongVarint("varint longer than 3 bytes for a 16-bit delta");
            zz |= static_cast<std::uint32_t>(byte & 0x7F) << shift;
            if (!(byte & 0x80)) break;
            shift += 7;
        }
        const std::int32_t d =
            static_cast<std::int32_t>(zz >> 1) ^ -static_cast<std::int32_t>(zz & 1);
        prev += d;
        if (prev < -32768 || prev > 32767)
            throw MalformedBlock("delta stream leaves the 16-bit sample range");
        out.push_back(static_cast<std::int16_t>(prev));
    }
    if (pos != block.deltas.size())
        throw MalformedBlock("trailing bytes after the final delta");
    return out;
}

std::vector<std::uint8_t> CompressedBlock::to_bytes() const {
    std::vector<std::uint8_t> out;
    out.reserve(byte_size());
    out.push_back(codec_id);
    const std::uint16_t fs = static_cast<std::uint16_t>(first_sample);
    out.push_back(static_cast<std::uint8_t>(fs & 0xFF));
    out.push_back(static_cast<std::uint8_t>(fs >> 8));
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>((original_len >> (8 * i)) & 0xFF));
    out.insert(out.end(), deltas.begin(), deltas.end());
    return out;
}

CompressedBlock CompressedBlock::from_bytes(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 7) throw TruncatedStream("block shorter than its 7-byte header");
    CompressedBlock block;
    block.codec_id = bytes[0];
    if (block.codec_id != kCodecDeltaVarint)
        throw MalformedBlock("unknown codec id " + std::to_string(bytes[0]));
    block.first_sample = static_cast<std::int16_t>(
        static_cast<std::uint16_t>(bytes[1]) |
        static_cast<std::uint16_t>(static_cast<std::uint16_t>(bytes[2]) << 8));
    block.original_len = 0;
    for (int i = 0; i < 4; ++i)
        block.original_len |= static_cast<std::uint32_t>(bytes[3 + i]) << (8 * i);
    block.deltas.assign(bytes.begin() + 7, bytes.end());
    return block;
}

} // namespace icrm
