#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "icrm/ann.hpp"
#include "icrm/communicator.hpp"
#include "icrm/devices.hpp"
#include "icrm/protocol.hpp"
#include "icrm/signal_io.hpp"

namespace icrm {

// One full §IV.C-style run: sensor emulators stream their records over lossy
// links to the communicator, which reassembles, windows, classifies, applies
// the decision policy, drives the actuator, and appends hospital reports.
//
// Everything runs on a single simulated clock inside one deterministic
// discrete-event loop; `pace_factor` optionally maps simulated ms to wall ms
// (1.0 = realtime, 0 = free-running) without touching the simulated timeline,
// so outputs are byte-identical regardless of pacing.
struct SimConfig {
    SignalRecord ecg;
    std::size_t ecg_channel = 0;
    std::optional<SignalRecord> egm; // logged + aligned, never classified
    std::size_t egm_channel = 0;

    Network net;

    double loss = 0.0;
    double delay_ms = 10.0;
    double jitter_ms = 2.0;
    std::uint64_t seed = 1;
    bool compression = true;
    std::size_t samples_per_frame = 64;
    PolicyConfig policy{};
    std::size_t decimation = kDefaultDecimation;
    std::size_t window_len = kDefaultWindowLen;
    double pace_factor = 0.0; // wall ms per simulated ms

    void validate() const;
};

struct SimulationSummary {
    bool eos = false;

    // ECG stream accounting (sample conservation: delivered + gaps + tail == total)
    std::uint64_t total_source_samples = 0;
    std::uint64_t delivered_samples = 0;
    std::uint64_t gap_samples = 0;
    std::uint64_t unaccounted_tail_samples = 0;
    std::uint64_t gaps_finalized = 0;
    std::uint64_t duplicate_frames = 0;

    // traffic over both sensor links
    std::uint64_t data_frames = 0;
    std::uint64_t data_frames_lost = 0;
    std::uint64_t retransmissions = 0;
    std::uint64_t retransmissions_lost = 0;
    std::uint64_t heartbeats = 0;
    std::uint64_t heartbeats_lost = 0;
    std::uint64_t nacks = 0;
    std::uint64_t nacks_lost = 0;
    std::uint64_t syncs_sent = 0;
    std::uint64_t losses_injected = 0; // dropped DATA sends (originals + resends)
    std::uint64_t losses_healed = 0;   // lost seqs later delivered by retransmission

    // classification pipeline
    std::uint64_t windows_total = 0;
    std::uint64_t windows_processed = 0;
    std::uint64_t windows_skipped = 0;
    std::uint64_t partial_tail_samples = 0;
    std::uint64_t decisions = 0;
    std::uint64_t commands = 0;
    std::uint64_t actuator_transitions = 0;

    double compression_ratio = 0.0; // DATA payload bytes / raw 16-bit bytes
    double alignment_skew_ms = 0.0; // estimated EGM epoch minus ECG epoch

    std::uint64_t egm_total_samples = 0;
    std::uint64_t egm_delivered_samples = 0;
    std::uint64_t egm_gap_samples = 0;

    std::string actuator_log;         // line-delimited transition log
    std::vector<double> latency_ms;   // wall-clock processing time per usable window

    // Deterministic key=value block (excludes wall-clock measurements).
    std::string metrics_text() const;
};

SimulationSummary run_simulation(const SimConfig& cfg, ReportSink& report);

} // namespace icrm
