#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "icrm/class_label.hpp"
#include "icrm/errors.hpp"
#include "icrm/protocol.hpp"
#include "icrm/signal_io.hpp"

namespace icrm {

struct LinkClosed : Error { using Error::Error; };

enum class SessionState : std::uint8_t { AwaitSync, Streaming, Closed };

struct EmulatorConfig {
    std::uint8_t device_id = 1;
    std::size_t channel = 0;
    bool compression = true;
    std::size_t samples_per_frame = 64;

    void validate() const;
};

struct ScheduledFrame {
    double stream_ms = 0.0; // device stream time of emission (0 = first sample)
    Frame frame;
};

// Streams one channel as DATA frames once synchronized: samples_per_frame per
// frame, a HEARTBEAT every second of stream time, a zero-payload DATA
// terminator, then three closing heartbeats so the receiver can spot tail
// losses. Retransmissions come from a sliding window of the last
// kRetransmitWindow DATA frames.
class SensorEmulator {
public:
    static constexpr std::size_t kRetransmitWindow = 64;
    static constexpr std::size_t kClosingHeartbeats = 3;
    static constexpr double kHeartbeatIntervalMs = 1000.0;

    SensorEmulator(const EmulatorConfig& config, std::vector<std::int16_t> samples,
                   double sampling_rate_hz);

    const EmulatorConfig& config() const { return cfg_; }
    SessionState state() const { return state_; }
    void enter_streaming() { state_ = SessionState::Streaming; }
    void close() { state_ = SessionState::Closed; }

    // Full emission schedule in stream time, heartbeats interleaved.
    const std::vector<ScheduledFrame>& schedule() const { return schedule_; }

    // DATA frames only (terminator last); index == seq.
    std::size_t data_frame_count() const { return data_frames_.size(); }
    const Frame& data_frame(std::uint16_t seq) const;

    // Byte-identical retransmission, if the frame is still inside the window
    // at the device's current stream time. Must be Streaming.
    std::optional<Frame> retransmit(double device_stream_ms, std::uint16_t seq) const;

    std::size_t total_samples() const { return samples_.size(); }
    double sampling_rate_hz() const { return rate_hz_; }

private:
    std::size_t frames_sent_by(double device_stream_ms) const;

    EmulatorConfig cfg_;
    std::vector<std::int16_t> samples_;
    double rate_hz_;
    SessionState state_ = SessionState::AwaitSync;
    std::vector<Frame> data_frames_;       // seq-indexed, terminator included
    std::vector<double> emission_ms_;      // per DATA frame
    std::vector<ScheduledFrame> schedule_; // DATA + HEARTBEAT merged, time order
};

enum class ActuatorState : std::uint8_t {
    Idle = 0,
    Pacing = 1,
    ShockArmed = 2,
    ShockDelivered = 3,
};

constexpr const char* to_string(ActuatorState s) {
    switch (s) {
        case ActuatorState::Idle: return "IDLE";
        case ActuatorState::Pacing: return "PACING";
        case ActuatorState::ShockArmed: return "SHOCK_ARMED";
        case ActuatorState::ShockDelivered: return "SHOCK_DELIVERED";
    }
    return "?";
}

struct ActuatorLogEntry {
    std::uint64_t timestamp_ms = 0;
    CommandKind command = CommandKind::StandDown;
    ActuatorState prior = ActuatorState::Idle;
    ActuatorState next = ActuatorState::Idle;
};

// The ICD/CRT stand-in: applies DECISION commands, logging every transition.
// The decision-to-therapy mapping is illustrative, not clinical: StandDown
// idles the device, Pace enters anti-tachycardia pacing, ArmShock arms, and
// ConfirmShock fires only from the armed state (anything else is a logged
// no-op, preserving the ShockDelivered-only-from-ShockArmed invariant).
class ActuatorEmulator {
public:
    ActuatorState state() const { return state_; }
    const std::vector<ActuatorLogEntry>& log() const { return log_; }

    void on_decision(double now_ms, const DecisionPayload& decision);

    // Line-delimited export: timestamp_ms,command,prior_state,new_state
    std::string log_text() const;

private:
    ActuatorState state_ = ActuatorState::Idle;
    std::vector<ActuatorLogEntry> log_;
};

struct RhythmSpec {
    ClassLabel klass = ClassLabel::NSR;
    double rate_per_min = 72.0;  // mean event rate
    double irregularity = 0.0;   // target CV of inter-event intervals
    double amplitude_mv = 1.0;   // principal deflection height
    double rate_scatter = 0.0;   // per-record rate spread, relative half-range

    static RhythmSpec defaults(ClassLabel klass);
};

// Deterministic synthetic rhythms: NSR is a ~72/min PQRST train with +-3%
// beat-interval jitter (and a small per-record rate draw, so training data
// covers beats phase-locked to the segment window), AFL a 300/min regular
// sawtooth, AFB a >350/min irregular fibrillatory wave (interval CV ~0.35,
// +-30% amplitude jitter).
SignalRecord generate_synthetic(const RhythmSpec& spec, double duration_s,
                                double sampling_rate_hz, std::uint64_t seed);

// Channel -> raw ADC codes using the channel's gain/baseline (the device-side
// inverse of the WFDB physical mapping, with the same saturation).
std::vector<std::int16_t> channel_to_adc(const SignalRecord& record, std::size_t channel);

} // namespace icrm
