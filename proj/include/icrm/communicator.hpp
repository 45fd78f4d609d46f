#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icrm/ann.hpp"
#include "icrm/class_label.hpp"
#include "icrm/dsp.hpp"
#include "icrm/errors.hpp"
#include "icrm/protocol.hpp"

namespace icrm {

struct EpochMismatch : Error { using Error::Error; };
struct ModelNotLoaded : Error { using Error::Error; };
struct SinkFailure : Error { using Error::Error; };

struct Decision {
    std::uint64_t window_idx = 0;
    double t_start_ms = 0.0; // source time range covered by the window
    double t_end_ms = 0.0;
    ClassLabel label = ClassLabel::NSR;
    double confidence = 0.0;
    std::array<double, kNumClasses> probs{};
};

struct ActuationCommand {
    CommandKind kind = CommandKind::StandDown;
    std::uint64_t first_window = 0; // the K windows that triggered it
    std::uint64_t last_window = 0;
    double issue_ms = 0.0;
};

struct PolicyConfig {
    std::size_t k = 3;                  // consecutive windows required
    double confidence_threshold = 0.8;

    void validate() const;
};

// Debounce rule: a command fires only after k consecutive usable windows with
// the same label, each at confidence >= threshold. NSR stands the actuator
// down only when therapy is active; AFL paces at k; AFB arms at k and
// confirms the shock at 2k (then the run restarts). Any differing label,
// low-confidence decision, or skipped window resets the run.
class DecisionPolicy {
public:
    explicit DecisionPolicy(const PolicyConfig& config = {});

    std::optional<ActuationCommand> on_decision(double now_ms, const Decision& d);
    void on_skipped(std::uint64_t window_idx);

    bool therapy_active() const { return therapy_active_; }
    std::size_t run_length() const { return run_length_; }

private:
    PolicyConfig cfg_;
    ClassLabel run_label_ = ClassLabel::NSR;
    std::size_t run_length_ = 0;
    std::uint64_t run_start_window_ = 0;
    bool therapy_active_ = false;
};

// Streaming decimate -> window -> classify engine. Feeds on reassembled
// source chunks and finalized gaps; emits one outcome per complete window in
// order. Applies the same FIR, reflection policy, and z-score as the offline
// dsp path, with gap taint spread across the filter's support.
class WindowEngine {
public:
    struct Outcome {
        std::uint64_t window_idx = 0;
        bool usable = false;
        Decision decision; // meaningful only when usable
    };

    WindowEngine(const Network* net, double source_rate_hz, std::size_t decim_factor,
                 std::size_t window_len);

    std::vector<Outcome> on_chunk(std::size_t start_sample, std::span<const std::int16_t> samples);
    std::vector<Outcome> on_gap(std::size_t start_sample, std::size_t end_sample);
    std::vector<Outcome> on_eos(std::size_t total_source_samples);

    std::uint64_t windows_emitted() const { return next_window_; }
    bool eos() const { return eos_; }
    // source samples past the last complete window (defined once eos is set)
    std::size_t partial_tail_samples() const;

private:
    std::vector<Outcome> advance();
    double decimated_at(std::size_t d) const;
    bool window_tainted(std::uint64_t w) const;
    void ensure_capacity(std::size_t n);

    const Network* net_;
    double rate_hz_;
    std::size_t factor_;
    std::size_t window_len_;
    std::vector<double> taps_;
    std::vector<double> source_;     // gap spans hold zeros
    std::vector<bool> tainted_;
    std::size_t known_prefix_ = 0;   // samples [0, known) are settled
    bool eos_ = false;
    std::size_t total_source_ = 0;
    std::uint64_t next_window_ = 0;
};

// Append-only report destination. Failures must never interrupt
// classification or actuation: FileSink logs the first failure to stderr and
// swallows the rest.
struct ReportSink {
    virtual ~ReportSink() = default;
    virtual void append(std::string_view line) = 0;
};

struct StringSink final : ReportSink {
    std::string text;
    void append(std::string_view line) override { text += line; }
};

class FileSink final : public ReportSink {
public:
    explicit FileSink(const std::string& path);
    void append(std::string_view line) override;
    bool failed() const { return failed_; }

private:
    std::ofstream out_;
    bool failed_ = false;
};

// `ts_ms;device_ids;window_idx;label;confidence;p_afb;p_afl;p_nsr`
std::string format_decision_line(double ts_ms, std::string_view device_ids, const Decision& d);
// `ts_ms;COMMAND;name;trigger_windows`
std::string format_command_line(const ActuationCommand& cmd);

// Cross-stream epoch agreement: both devices must sit on the shared timeline
// within `tolerance_ms` (one decimated sample period by default).
struct AlignmentInfo {
    double ecg_epoch_ms = 0.0;
    double egm_epoch_ms = 0.0;
    double skew_ms = 0.0;
};
AlignmentInfo align_streams(double ecg_epoch_estimate_ms, double egm_epoch_estimate_ms,
                            double tolerance_ms);

} // namespace icrm
