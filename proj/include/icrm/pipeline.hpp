#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icrm/ann.hpp"
#include "icrm/class_label.hpp"
#include "icrm/dsp.hpp"
#include "icrm/signal_io.hpp"

namespace icrm {

// One line of a label map file: `record_name,channel,label`.
struct LabelMapEntry {
    std::string record_name;
    std::size_t channel = 0;
    ClassLabel label = ClassLabel::NSR;
};

// Parses label map text; `#` starts a comment, blank lines are skipped.
std::vector<LabelMapEntry> parse_label_map(const std::string& text);

// The offline version of the classifier front end: raw ADC units ->
// anti-aliased decimation -> non-overlapping windows -> per-window z-score.
// Identical filtering and normalization to the streaming path, so models
// train on exactly what the communicator will feed them.
void append_record(LabeledDataset& dataset, const SignalRecord& record, std::size_t channel,
                   ClassLabel label, std::size_t window_len = kDefaultWindowLen,
                   std::size_t decimation = kDefaultDecimation);

// Loads every label-map entry from `dir` (tries <name>.hea, then <name>.csv).
LabeledDataset load_dataset(const std::string& dir, const std::vector<LabelMapEntry>& labels,
                            std::size_t window_len = kDefaultWindowLen,
                            std::size_t decimation = kDefaultDecimation);

// `per_class` synthetic records per rhythm class, seeds assigned contiguously
// (AFB gets seed_base..seed_base+per_class-1, then AFL, then NSR).
LabeledDataset synthetic_dataset(std::size_t per_class, double duration_s,
                                 double sampling_rate_hz, std::uint64_t seed_base,
                                 std::size_t window_len = kDefaultWindowLen,
                                 std::size_t decimation = kDefaultDecimation);

// Fixed-width text table, rows = true class, columns = predicted class.
std::string confusion_text(const ConfusionMatrix& cm, const std::string& title);

} // namespace icrm
