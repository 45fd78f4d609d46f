#include "icrm/devices.hpp"

#include <algorithm>
#include <cmath>

#include "icrm/rng.hpp"

namespace icrm {

void EmulatorConfig::validate() const {
    if (samples_per_frame < 1) throw Error("samples_per_frame must be at least 1");
    // raw framing needs a codec byte plus two bytes per sample
    if (2 * samples_per_frame + 1 > kMaxPayload)
        throw Error("samples_per_frame " + std::to_string(samples_per_frame) +
                    " cannot fit the payload cap");
}

SensorEmulator::SensorEmulator(const EmulatorConfig& config, std::vector<std::int16_t> samples,
                               double sampling_rate_hz)
    : cfg_(config), samples_(std::move(samples)), rate_hz_(sampling_rate_hz) {
    cfg_.validate();
    if (!(rate_hz_ > 0.0)) throw Error("sampling rate must be positive");

    const double dt_ms = 1000.0 / rate_hz_;
    const std::size_t spf = cfg_.samples_per_frame;
    const std::size_t total = samples_.size();
    const std::size_t n_frames = (total + spf - 1) / spf;
    if (n_frames + 1 > 65536)
        throw Error("record needs " + std::to_string(n_frames + 1) +
                    " frames, beyond the 16-bit seq space");

    for (std::size_t k = 0; k < n_frames; ++k) {
        const std::size_t start = k * spf;
        const std::size_t count = std::min(spf, total - start);
        Frame f;
        f.device_id = cfg_.device_id;
        f.msg_type = MsgType::Data;
        f.seq = static_cast<std::uint16_t>(k);
        f.timestamp_ms =
            static_cast<std::uint32_t>(std::llround(static_cast<double>(start) * dt_ms));
        f.payload = pack_samples(std::span(samples_.data() + start, count), cfg_.compression);
        data_frames_.push_back(std::move(f));
        // a frame can only leave once its last sample has been acquired
        emission_ms_.push_back(static_cast<double>(start + count) * dt_ms);
    }

    const double end_ms = static_cast<double>(total) * dt_ms;
    Frame terminator;
    terminator.device_id = cfg_.device_id;
    terminator.msg_type = MsgType::Data;
    terminator.seq = static_cast<std::uint16_t>(n_frames);
    terminator.timestamp_ms = static_cast<std::uint32_t>(std::llround(end_ms));
    data_frames_.push_back(std::move(terminator));
    // emitted one frame period after the last frame, where the next frame
    // would have gone: co-emitted frames could race through link jitter and
    // trip a pointless NACK
    emission_ms_.push_back(end_ms + static_cast<double>(spf) * dt_ms);

    for (std::size_t k = 0; k < data_frames_.size(); ++k)
        schedule_.push_back({emission_ms_[k], data_frames_[k]});

    auto heartbeat_at = [&](double t_ms) {
        // strictly-before: a frame emitted at the same instant may still lose
        // the arrival race against this heartbeat, and must not be claimed
        const std::size_t sent = static_cast<std::size_t>(
            std::lower_bound(emission_ms_.begin(), emission_ms_.end(), t_ms) -
            emission_ms_.begin());
        Frame hb;
        hb.device_id = cfg_.device_id;
        hb.msg_type = MsgType::Heartbeat;
        hb.timestamp_ms = static_cast<std::uint32_t>(std::llround(t_ms));
        hb.payload = encode_heartbeat_payload(static_cast<std::uint16_t>(sent));
        schedule_.push_back({t_ms, std::move(hb)});
    };
    for (double h = kHeartbeatIntervalMs; h < end_ms; h += kHeartbeatIntervalMs) heartbeat_at(h);
    for (std::size_t j = 1; j <= kClosingHeartbeats; ++j)
        heartbeat_at(end_ms + static_cast<double>(j) * kSyncRetryMs);

    // time order, DATA ahead of HEARTBEAT at equal instants
    std::stable_sort(schedule_.begin(), schedule_.end(),
                     [](const ScheduledFrame& a, const ScheduledFrame& b) {
                         if (a.stream_ms != b.stream_ms) return a.stream_ms < b.stream_ms;
                         return a.frame.msg_type == MsgType::Data &&
                                b.frame.msg_type != MsgType::Data;
                     });
}

const Frame& SensorEmulator::data_frame(std::uint16_t seq) const {
    if (seq >= data_frames_.size()) throw Error("no DATA frame with seq " + std::to_string(seq));
    return data_frames_[seq];
}

std::size_t SensorEmulator::frames_sent_by(double device_stream_ms) const {
    return static_cast<std::size_t>(
        std::upper_bound(emission_ms_.begin(), emission_ms_.end(), device_stream_ms) -
        emission_ms_.begin());
}

std::optional<Frame> SensorEmulator::retransmit(double device_stream_ms,
                                                std::uint16_t seq) const {
    if (state_ == SessionState::AwaitSync)
        throw LinkClosed("sensor cannot retransmit before synchronization");
    const std::size_t sent = frames_sent_by(device_stream_ms);
    if (seq >= sent) return std::nullopt;              // never sent yet
    if (sent - seq > kRetransmitWindow) return std::nullopt; // aged out of the buffer
    return data_frames_[seq];
}

void ActuatorEmulator::on_decision(double now_ms, const DecisionPayload& decision) {
    const ActuatorState prior = state_;
    switch (decision.command) {
        case CommandKind::StandDown: state_ = ActuatorState::Idle; break;
        case CommandKind::Pace: state_ = ActuatorState::Pacing; break;
        case CommandKind::ArmShock: state_ = ActuatorState::ShockArmed; break;
        case CommandKind::ConfirmShock:
            // only an armed device fires; anything else is a logged no-op
            if (state_ == ActuatorState::ShockArmed) state_ = ActuatorState::ShockDelivered;
            break;
    }
    log_.push_back({static_cast<std::uint64_t>(std::llround(std::max(0.0, now_ms))),
                    decision.command, prior, state_});
}

std::string ActuatorEmulator::log_text() const {
    std::string out;
    for (const auto& e : log_) {
        out += std::to_string(e.timestamp_ms);
        out += ',';
        out += to_string(e.command);
        out += ',';
        out += to_string(e.prior);
        out += ',';
        out += to_string(e.next);
        out += '\n';
    }
    return out;
}

RhythmSpec RhythmSpec::defaults(ClassLabel klass) {
    RhythmSpec spec;
    spec.klass = klass;
    switch (klass) {
        case ClassLabel::NSR:
            spec.rate_per_min = 72.0;
            spec.irregularity = 0.03 / std::sqrt(3.0); // uniform +-3% beat jitter
            spec.amplitude_mv = 1.0;
            spec.rate_scatter = 0.028; // record-to-record spread, ~70..74/min
            break;
        case ClassLabel::AFL:
            spec.rate_per_min = 300.0;
            spec.irregularity = 0.0;
            spec.amplitude_mv = 0.4;
            break;
        case ClassLabel::AFB:
            spec.rate_per_min = 400.0;
            spec.irregularity = 0.35;
            spec.amplitude_mv = 0.6;
            break;
    }
    return spec;
}

namespace {

void add_bump(std::vector<double>& x, double rate_hz, double center_ms, double width_ms,
              double amp) {
    const double dt_ms = 1000.0 / rate_hz;
    const double reach = 4.0 * width_ms;
    const auto lo = static_cast<std::int64_t>(std::floor((center_ms - reach) / dt_ms));
    const auto hi = static_cast<std::int64_t>(std::ceil((center_ms + reach) / dt_ms));
    for (std::int64_t i = std::max<std::int64_t>(lo, 0);
         i <= hi && i < static_cast<std::int64_t>(x.size()); ++i) {
        const double t = static_cast<double>(i) * dt_ms;
        const double z = (t - center_ms) / width_ms;
        x[static_cast<std::size_t>(i)] += amp * std::exp(-0.5 * z * z);
    }
}

} // namespace

SignalRecord generate_synthetic(const RhythmSpec& spec, double duration_s,
                                double sampling_rate_hz, std::uint64_t seed) {
    if (!(duration_s > 0.0)) throw Error("duration must be positive");
    if (!(sampling_rate_hz > 0.0)) throw Error("sampling rate must be positive");
    if (!(spec.rate_per_min > 0.0)) throw Error("event rate must be positive");

    const auto n = static_cast<std::size_t>(std::llround(duration_s * sampling_rate_hz));
    const double dur_ms = duration_s * 1000.0;
    std::vector<double> x(n, 0.0);
    Rng rng(seed);

    // one draw up front fixes this record's mean rate within the scatter band
    const double rate =
        spec.rate_per_min * (1.0 + spec.rate_scatter * (2.0 * rng.uniform() - 1.0));
    const double base_ms = 60000.0 / rate;
    // uniform interval factor on [1-w, 1+w] has CV = w/sqrt(3)
    const double w = spec.irregularity * std::sqrt(3.0);

    switch (spec.klass) {
        case ClassLabel::NSR: {
            // PQRST as Gaussian bumps: (offset ms, width ms, amplitude factor)
            static constexpr double kBumps[5][3] = {
                {-160.0, 22.0, 0.12}, // P
                {-24.0, 9.0, -0.10},  // Q
                {0.0, 12.0, 1.0},     // R
                {28.0, 9.0, -0.18},   // S
                {190.0, 40.0, 0.25},  // T
            };
            double t = 500.0;
            while (t < dur_ms) {
                for (const auto& b : kBumps)
                    add_bump(x, sampling_rate_hz, t + b[0], b[1], spec.amplitude_mv * b[2]);
                t += base_ms * (1.0 + w * (2.0 * rng.uniform() - 1.0));
            }
            break;
        }
        case ClassLabel::AFL: {
            const double dt_ms = 1000.0 / sampling_rate_hz;
            for (std::size_t i = 0; i < n; ++i) {
                const double phase = std::fmod(static_cast<double>(i) * dt_ms, base_ms) / base_ms;
                x[i] = spec.amplitude_mv * (2.0 * phase - 1.0);
            }
            break;
        }
        case ClassLabel::AFB: {
            // wide alternating bumps overlap into a continuous irregular
            // fibrillatory wave rather than isolated spikes
            double t = 150.0;
            double sign = 1.0;
            while (t < dur_ms) {
                // per event: amplitude draw first, then the next interval
                const double amp =
                    spec.amplitude_mv * (1.0 + 0.3 * (2.0 * rng.uniform() - 1.0));
                add_bump(x, sampling_rate_hz, t, 26.0, sign * amp);
                t += base_ms * (1.0 + w * (2.0 * rng.uniform() - 1.0));
                sign = -sign;
            }
            break;
        }
    }

    SignalRecord record;
    record.header.record_name = std::string("synth-") + [&] {
        switch (spec.klass) {
            case ClassLabel::AFB: return "afb";
            case ClassLabel::AFL: return "afl";
            case ClassLabel::NSR: return "nsr";
        }
        return "?";
    }();
    record.header.num_signals = 1;
    record.header.sampling_rate = sampling_rate_hz;
    record.header.num_samples = n;
    SignalDescriptor sig;
    sig.description = std::string("synthetic ") + to_string(spec.klass) + " surface ECG";
    record.header.signals.push_back(std::move(sig));
    record.channels.push_back(std::move(x));
    record.validate();
    return record;
}

std::vector<std::int16_t> channel_to_adc(const SignalRecord& record, std::size_t channel) {
    record.validate();
    if (channel >= record.header.num_signals)
        throw LengthMismatch("channel index out of range");
    const auto& sig = record.header.signals[channel];
    const auto& ch = record.channels[channel];
    std::vector<std::int16_t> out(ch.size());
    for (std::size_t i = 0; i < ch.size(); ++i) {
        double raw = static_cast<double>(std::llround(ch[i] * sig.gain)) + sig.baseline;
        raw = std::clamp(raw, -32768.0, 32767.0);
        out[i] = static_cast<std::int16_t>(raw);
    }
    return out;
}

} // namespace icrm
