#include "icrm/signal_io.hpp"

#include "icrm/class_label.hpp"
#include "icrm/file_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace icrm {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) {
        if (cur.back() == '\r') cur.pop_back();
        lines.push_back(cur);
    }
    return lines;
}

bool parse_double(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last && std::isfinite(out);
}

bool parse_long(const std::string& s, long long& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

// Signal-line gain field: gain[(baseline)][/units]. A stored gain of zero
// means "unspecified" and maps to the conventional default of 200.
void parse_gain_spec(const std::string& tok, SignalDescriptor& sig, bool& baseline_given) {
    std::string gain_part = tok;
    baseline_given = false;

    auto slash = gain_part.find('/');
    if (slash != std::string::npos) {
        sig.units = gain_part.substr(slash + 1);
        if (sig.units.empty()) throw MalformedHeader("empty units in gain field: " + tok);
        gain_part = gain_part.substr(0, slash);
    }
    auto paren = gain_part.find('(');
    if (paren != std::string::npos) {
        auto close = gain_part.find(')', paren);
        if (close == std::string::npos)
            throw MalformedHeader("unterminated baseline in gain field: " + tok);
        long long base = 0;
        if (!parse_long(gain_part.substr(paren + 1, close - paren - 1), base))
            throw MalformedHeader("non-numeric baseline in gain field: " + tok);
        sig.baseline = static_cast<int>(base);
        baseline_given = true;
        gain_part = gain_part.substr(0, paren);
    }
    double gain = 0.0;
    if (!parse_double(gain_part, gain))
        throw MalformedHeader("non-numeric gain: " + tok);
    sig.gain = (gain == 0.0) ? 200.0 : gain;
}

} // namespace

void RecordHeader::validate() const {
    if (num_signals < 1) throw InvalidCounts("record must declare at least one signal");
    if (!(sampling_rate > 0.0)) throw InvalidCounts("sampling rate must be positive");
    if (signals.size() != num_signals)
        throw MalformedHeader("descriptor count does not match declared signal count");
    for (const auto& sig : signals)
        if (sig.gain == 0.0) throw MalformedHeader("signal gain must be nonzero");
}

void SignalRecord::validate() const {
    header.validate();
    if (channels.size() != header.num_signals)
        throw LengthMismatch("channel count does not match header");
    for (const auto& ch : channels) {
        if (ch.size() != header.num_samples)
            throw LengthMismatch("channel length does not match header sample count");
        for (double v : ch)
            if (!std::isfinite(v)) throw ParseError("non-finite sample value");
    }
}

ChannelKind infer_channel_kind(const std::string& description) {
    std::string upper = description;
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return upper.find("ECG") != std::string::npos ? ChannelKind::SurfaceECG
                                                  : ChannelKind::IntracardiacEGM;
}

ChannelKind channel_kind(const RecordHeader& header, std::size_t channel,
                         const std::map<std::size_t, ChannelKind>& overrides) {
    if (channel >= header.num_signals)
        throw LengthMismatch("channel index out of range");
    auto it = overrides.find(channel);
    if (it != overrides.end()) return it->second;
    return infer_channel_kind(header.signals[channel].description);
}

RecordHeader parse_wfdb_header(const std::string& text) {
    std::vector<std::string> lines;
    for (auto& line : split_lines(text)) {
        // comment lines and blank lines are skipped
        std::size_t i = line.find_first_not_of(" \t");
        if (i == std::string::npos || line[i] == '#') continue;
        lines.push_back(line);
    }
    if (lines.empty()) throw MalformedHeader("empty header");

    const auto rec = split_ws(lines[0]);
    if (rec.size() < 4)
        throw MalformedHeader("record line needs name, signal count, rate, sample count");

    RecordHeader header;
    header.record_name = rec[0];

    long long nsig = 0;
    if (!parse_long(rec[1], nsig) || nsig < 0)
        throw MalformedHeader("non-numeric signal count: " + rec[1]);
    if (nsig == 0) throw InvalidCounts("record declares zero signals");
    header.num_signals = static_cast<std::size_t>(nsig);

    // The rate token may carry a counter frequency after '/': take the lead.
    std::string rate_tok = rec[2].substr(0, rec[2].find('/'));
    double rate = 0.0;
    if (!parse_double(rate_tok, rate))
        throw MalformedHeader("non-numeric sampling rate: " + rec[2]);
    if (!(rate > 0.0)) throw InvalidCounts("sampling rate must be positive");
    header.sampling_rate = rate;

    long long nsamp = 0;
    if (!parse_long(rec[3], nsamp) || nsamp < 0)
        throw MalformedHeader("non-numeric sample count: " + rec[3]);
    header.num_samples = static_cast<std::size_t>(nsamp);

    if (lines.size() < 1 + header.num_signals)
        throw MalformedHeader("fewer signal lines than declared signals");

    std::string dat_file;
    for (std::size_t s = 0; s < header.num_signals; ++s) {
        const auto toks = split_ws(lines[1 + s]);
        if (toks.size() < 2)
            throw MalformedHeader("signal line needs at least file name and format");

        if (s == 0)
            dat_file = toks[0];
        else if (toks[0] != dat_file)
            throw UnsupportedFormat("multi-file records are not supported");

        // Format must be plain 16; sample-per-frame/skew/offset suffixes are
        // rejected rather than misread.
        if (toks[1] != "16")
            throw UnsupportedFormat("unsupported signal format: " + toks[1]);

        SignalDescriptor sig;
        bool baseline_given = false;
        if (toks.size() >= 3) parse_gain_spec(toks[2], sig, baseline_given);

        long long adc_zero = 0;
        bool have_adc_zero = false;
        // optional numeric tail: adc resolution, adc zero, initial value,
        // checksum, block size
        static constexpr std::size_t kNumericTail = 5;
        std::size_t t = 3;
        for (std::size_t k = 0; k < kNumericTail && t < toks.size(); ++k, ++t) {
            long long v = 0;
            if (!parse_long(toks[t], v))
                throw MalformedHeader("non-numeric field in signal line: " + toks[t]);
            if (k == 1) {
                adc_zero = v;
                have_adc_zero = true;
            }
        }
        if (!baseline_given && have_adc_zero) sig.baseline = static_cast<int>(adc_zero);

        // everything after the numeric tail is the description
        std::string desc;
        for (; t < toks.size(); ++t) {
            if (!desc.empty()) desc += ' ';
            desc += toks[t];
        }
        sig.description = desc;
        header.signals.push_back(std::move(sig));
    }

    header.validate();
    return header;
}

std::string write_wfdb_header(const RecordHeader& header) {
    header.validate();
    std::string out = header.record_name + " " + std::to_string(header.num_signals) + " " +
                      format_double(header.sampling_rate) + " " +
                      std::to_string(header.num_samples) + "\n";
    for (const auto& sig : header.signals) {
        out += header.record_name + ".dat 16 " + format_double(sig.gain) + "(" +
               std::to_string(sig.baseline) + ")/" + (sig.units.empty() ? "mV" : sig.units) +
               " 16 " + std::to_string(sig.baseline) + " 0 0 0";
        if (!sig.description.empty()) out += " " + sig.description;
        out += "\n";
    }
    return out;
}

SignalRecord read_wfdb_samples(std::span<const std::uint8_t> bytes, const RecordHeader& header) {
    header.validate();
    const std::size_t nsig = header.num_signals;
    const std::size_t expected = 2 * nsig * header.num_samples;
    if (bytes.size() != expected)
        throw LengthMismatch("data file holds " + std::to_string(bytes.size()) +
                             " bytes, header implies " + std::to_string(expected));

    SignalRecord record;
    record.header = header;
    record.channels.assign(nsig, std::vector<double>(header.num_samples));
    for (std::size_t i = 0; i < header.num_samples; ++i) {
        for (std::size_t c = 0; c < nsig; ++c) {
            const std::size_t off = 2 * (i * nsig + c);
            const std::uint16_t u =
                static_cast<std::uint16_t>(bytes[off]) |
                static_cast<std::uint16_t>(static_cast<std::uint16_t>(bytes[off + 1]) << 8);
            const std::int16_t raw = static_cast<std::int16_t>(u);
            const auto& sig = header.signals[c];
            record.channels[c][i] = (static_cast<double>(raw) - sig.baseline) / sig.gain;
        }
    }
    return record;
}

std::vector<std::uint8_t> write_wfdb_samples(const SignalRecord& record) {
    record.validate();
    const std::size_t nsig = record.header.num_signals;
    const std::size_t nsamp = record.header.num_samples;
    std::vector<std::uint8_t> bytes(2 * nsig * nsamp);
    for (std::size_t i = 0; i < nsamp; ++i) {
        for (std::size_t c = 0; c < nsig; ++c) {
            const auto& sig = record.header.signals[c];
            double raw = std::llround(record.channels[c][i] * sig.gain) + sig.baseline;
            // ADC saturation for values outside the 16-bit range
            raw = std::clamp(raw, -32768.0, 32767.0);
            const std::int16_t v = static_cast<std::int16_t>(raw);
            const std::uint16_t u = static_cast<std::uint16_t>(v);
            const std::size_t off = 2 * (i * nsig + c);
            bytes[off] = static_cast<std::uint8_t>(u & 0xFF);
            bytes[off + 1] = static_cast<std::uint8_t>(u >> 8);
        }
    }
    return bytes;
}

namespace {

std::string strip_hea_suffix(const std::string& path) {
    if (path.size() > 4 && path.compare(path.size() - 4, 4, ".hea") == 0)
        return path.substr(0, path.size() - 4);
    return path;
}

} // namespace

SignalRecord load_wfdb(const std::string& path_base) {
    const std::string base = strip_hea_suffix(path_base);
    RecordHeader header = parse_wfdb_header(read_file_text(base + ".hea"));
    std::vector<std::uint8_t> bytes = read_file_bytes(base + ".dat");
    if (header.num_samples == 0) {
        // headers may leave the length unspecified; infer it from the file
        const std::size_t stride = 2 * header.num_signals;
        if (bytes.size() % stride != 0)
            throw LengthMismatch("data file size is not a whole number of frames");
        header.num_samples = bytes.size() / stride;
    }
    return read_wfdb_samples(bytes, header);
}

void save_wfdb(const SignalRecord& record, const std::string& path_base) {
    const std::string base = strip_hea_suffix(path_base);
    const std::string hea = write_wfdb_header(record.header);
    write_file(base + ".hea", hea.data(), hea.size());
    const std::vector<std::uint8_t> bytes = write_wfdb_samples(record);
    write_file(base + ".dat", bytes.data(), bytes.size());
}

SignalRecord read_csv_record(const std::string& text, double sampling_rate_hz) {
    const auto lines = split_lines(text);
    std::size_t n_lines = lines.size();
    while (n_lines > 0 && lines[n_lines - 1].empty()) --n_lines;
    if (n_lines == 0) throw MalformedHeader("empty CSV");

    auto split_commas = [](const std::string& line) {
        std::vector<std::string> cells;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        cells.push_back(cur);
        return cells;
    };

    const auto head = split_commas(lines[0]);
    if (head.size() < 2 || head[0] != "t")
        throw MalformedHeader("CSV header row must be t,ch0,ch1,...");
    const std::size_t ncols = head.size();
    const std::size_t nch = ncols - 1;

    std::vector<double> times;
    std::vector<std::vector<double>> channels(nch);
    for (std::size_t li = 1; li < n_lines; ++li) {
        const auto cells = split_commas(lines[li]);
        if (cells.size() != ncols)
            throw RaggedRows("row " + std::to_string(li) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(ncols));
        double t = 0.0;
        if (!parse_double(cells[0], t)) throw ParseError("bad time value: " + cells[0]);
        if (!times.empty() && t <= times.back())
            throw NonMonotonicTime("time column must be strictly increasing");
        times.push_back(t);
        for (std::size_t c = 0; c < nch; ++c) {
            double v = 0.0;
            if (!parse_double(cells[c + 1], v)) throw ParseError("bad sample value: " + cells[c + 1]);
            channels[c].push_back(v);
        }
    }
    if (times.empty()) throw MalformedHeader("CSV has no sample rows");

    double rate = sampling_rate_hz;
    if (!(rate > 0.0)) {
        if (times.size() >= 2)
            rate = static_cast<double>(times.size() - 1) / (times.back() - times.front());
        else
            rate = 1000.0;
    }

    SignalRecord record;
    record.header.record_name = "csv";
    record.header.num_signals = nch;
    record.header.sampling_rate = rate;
    record.header.num_samples = times.size();
    for (std::size_t c = 0; c < nch; ++c) {
        SignalDescriptor sig;
        sig.description = head[c + 1];
        record.header.signals.push_back(std::move(sig));
    }
    record.channels = std::move(channels);
    record.validate();
    return record;
}

std::string write_csv_record(const SignalRecord& record) {
    record.validate();
    std::string out = "t";
    for (std::size_t c = 0; c < record.header.num_signals; ++c)
        out += ",ch" + std::to_string(c);
    out += "\n";
    const double dt = 1.0 / record.header.sampling_rate;
    for (std::size_t i = 0; i < record.header.num_samples; ++i) {
        out += format_double(static_cast<double>(i) * dt);
        for (const auto& ch : record.channels) {
            out += ',';
            out += format_double(ch[i]);
        }
        out += "\n";
    }
    return out;
}

SignalRecord load_csv(const std::string& path, double sampling_rate_hz) {
    return read_csv_record(read_file_text(path), sampling_rate_hz);
}

void save_csv(const SignalRecord& record, const std::string& path) {
    const std::string text = write_csv_record(record);
    write_file(path, text.data(), text.size());
}

std::optional<ClassLabel> label_from_string(std::string_view text) {
    std::string upper(text);
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (upper == "AFB") return ClassLabel::AFB;
    if (upper == "AFL") return ClassLabel::AFL;
    if (upper == "NSR") return ClassLabel::NSR;
    return std::nullopt;
}

} // namespace icrm
