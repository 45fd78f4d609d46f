#include "icrm/pipeline.hpp"

#include <filesystem>

#include "icrm/devices.hpp"
#include "icrm/text.hpp"

namespace icrm {

std::vector<LabelMapEntry> parse_label_map(const std::string& text) {
    std::vector<LabelMapEntry> entries;
    std::size_t line_no = 0;
    for (const std::string_view raw : text::split_lines(text)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = text::trim(line);
        if (line.empty()) continue;

        const std::vector<std::string_view> parts = text::split(line, ',');
        if (parts.size() != 3)
            throw ParseError("label map line " + std::to_string(line_no) +
                             ": want record,channel,label");
        LabelMapEntry e;
        e.record_name = text::trim(parts[0]);
        const auto channel = text::parse_long(text::trim(parts[1]));
        if (e.record_name.empty() || !channel || *channel < 0)
            throw ParseError("label map line " + std::to_string(line_no) + ": bad record/channel");
        e.channel = static_cast<std::size_t>(*channel);
        const auto label = label_from_string(text::trim(parts[2]));
        if (!label)
            throw ParseError("label map line " + std::to_string(line_no) + ": unknown class '" +
                             std::string(text::trim(parts[2])) + "'");
        e.label = *label;
        entries.push_back(std::move(e));
    }
    return entries;
}

void append_record(LabeledDataset& dataset, const SignalRecord& record, std::size_t channel,
                   ClassLabel label, std::size_t window_len, std::size_t decimation) {
    const std::vector<std::int16_t> adc = channel_to_adc(record, channel);
    const std::vector<double> raw(adc.begin(), adc.end());
    const std::vector<double> decimated = decimate(raw, decimation, true);

    SegmentSource origin;
    origin.record_id = record.header.record_name;
    origin.channel = channel;
    for (Segment& seg : segment_signal(decimated, window_len, window_len, origin)) {
        seg.samples = normalize(seg.samples);
        seg.label = label;
        dataset.items.push_back({std::move(seg), label});
    }
}

LabeledDataset load_dataset(const std::string& dir, const std::vector<LabelMapEntry>& labels,
                            std::size_t window_len, std::size_t decimation) {
    namespace fs = std::filesystem;
    LabeledDataset dataset;
    dataset.provenance = dir;
    for (const LabelMapEntry& entry : labels) {
        const fs::path hea = fs::path(dir) / (entry.record_name + ".hea");
        const fs::path csv = fs::path(dir) / (entry.record_name + ".csv");
        SignalRecord record;
        if (fs::exists(hea))
            record = load_wfdb(hea.string());
        else if (fs::exists(csv))
            record = load_csv(csv.string());
        else
            throw IOFailure("no " + entry.record_name + ".hea or .csv under " + dir);
        if (entry.channel >= record.channels.size())
            throw InvalidCounts(entry.record_name + ": channel " +
                                std::to_string(entry.channel) + " out of range");
        append_record(dataset, record, entry.channel, entry.label, window_len, decimation);
    }
    return dataset;
}

LabeledDataset synthetic_dataset(std::size_t per_class, double duration_s,
                                 double sampling_rate_hz, std::uint64_t seed_base,
                                 std::size_t window_len, std::size_t decimation) {
    LabeledDataset dataset;
    dataset.provenance = "synthetic x" + std::to_string(per_class) + " per class, seeds " +
                         std::to_string(seed_base) + "..." +
                         std::to_string(seed_base + 3 * per_class - 1);
    std::uint64_t seed = seed_base;
    for (const ClassLabel klass : {ClassLabel::AFB, ClassLabel::AFL, ClassLabel::NSR}) {
        for (std::size_t i = 0; i < per_class; ++i, ++seed) {
            const SignalRecord record =
                generate_synthetic(RhythmSpec::defaults(klass), duration_s, sampling_rate_hz, seed);
            append_record(dataset, record, 0, klass, window_len, decimation);
        }
    }
    return dataset;
}

std::string confusion_text(const ConfusionMatrix& cm, const std::string& title) {
    static constexpr const char* kNames[kNumClasses] = {"AFB", "AFL", "NSR"};
    std::string s = title + " (rows = true, columns = predicted)\n";
    auto cell = [](const std::string& v) {
        std::string c = v;
        while (c.size() < 10) c.insert(c.begin(), ' ');
        return c;
    };
    s += cell("");
    for (const char* name : kNames) s += cell(name);
    s += '\n';
    for (std::size_t r = 0; r < kNumClasses; ++r) {
        s += cell(kNames[r]);
        for (std::size_t c = 0; c < kNumClasses; ++c)
            s += cell(std::to_string(cm.counts[r][c]));
        s += '\n';
    }
    s += "accuracy=" + text::format_double(cm.accuracy()) + " n=" + std::to_string(cm.total()) +
         "\n";
    return s;
}

} // namespace icrm
