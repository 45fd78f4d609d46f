#include "icrm/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <queue>
#include <set>
#include <thread>
#include <utility>

#include "icrm/rng.hpp"
#include "icrm/text.hpp"

namespace icrm {

namespace {

constexpr std::uint8_t kEcgDeviceId = 1;
constexpr std::uint8_t kEgmDeviceId = 2;
constexpr std::uint8_t kActuatorId = 3;

enum class EventKind : std::uint8_t {
    SyncAttempt,   // communicator (re)sends a SYNC
    SyncCheck,     // communicator gives up if still not established
    DeviceArrive,  // SYNC or NACK reaches a sensor
    CommArrive,    // SYNC_ACK / DATA / HEARTBEAT reaches the communicator
    ScheduledSend, // sensor emits its next schedule entry
    GapTick,       // reassembly deadline check
    ActuatorDeliver,
};

struct Event {
    double t = 0.0;
    std::uint64_t order = 0; // insertion index: stable handling of equal times
    EventKind kind{};
    int dev = 0;
    std::size_t index = 0;
    std::vector<std::uint8_t> wire;
};

struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
        if (a.t != b.t) return a.t > b.t;
        return a.order > b.order;
    }
};

struct DeviceCtx {
    SensorEmulator emu;
    LossyLink down; // communicator -> device
    LossyLink up;   // device -> communicator
    Reassembler rx;
    std::uint32_t token;

    double epoch_ms = 0.0; // device stream epoch: first SYNC heard
    bool established = false;
    double epoch_estimate_ms = 0.0; // communicator's estimate from the ACK
    std::set<std::uint16_t> lost_seqs;

    std::size_t fed = 0; // source samples already handed to the window engine
    std::size_t gap_cursor = 0;
    std::size_t chunk_cursor = 0;

    DeviceCtx(const EmulatorConfig& ecfg, std::vector<std::int16_t> samples, double rate_hz,
              const LinkConfig& down_cfg, const LinkConfig& up_cfg, std::uint32_t session_token)
        : emu(ecfg, std::move(samples), rate_hz),
          down(down_cfg),
          up(up_cfg),
          rx(rate_hz),
          token(session_token) {}

    std::uint8_t id() const { return emu.config().device_id; }
};

class Sim {
public:
    Sim(const SimConfig& cfg, ReportSink& report)
        : cfg_(cfg),
          report_(report),
          engine_(&cfg.net, cfg.ecg.header.sampling_rate, cfg.decimation, cfg.window_len),
          policy_(cfg.policy) {
        Rng seeder(cfg_.seed);
        // fixed draw layout: (down, up, token) per device slot, EGM drawn
        // even when absent so the ECG stream never depends on its presence
        std::array<std::array<std::uint64_t, 3>, 2> draws{};
        for (auto& slot : draws)
            for (auto& v : slot) v = seeder.next();

        auto make_device = [&](std::uint8_t id, const SignalRecord& rec, std::size_t channel,
                               std::size_t slot) {
            EmulatorConfig ecfg;
            ecfg.device_id = id;
            ecfg.channel = channel;
            ecfg.compression = cfg_.compression;
            ecfg.samples_per_frame = cfg_.samples_per_frame;
            LinkConfig down{cfg_.loss, cfg_.delay_ms, cfg_.jitter_ms, draws[slot][0]};
            LinkConfig up{cfg_.loss, cfg_.delay_ms, cfg_.jitter_ms, draws[slot][1]};
            return std::make_unique<DeviceCtx>(ecfg, channel_to_adc(rec, channel),
                                               rec.header.sampling_rate, down, up,
                                               static_cast<std::uint32_t>(draws[slot][2] >> 32));
        };
        devices_.push_back(make_device(kEcgDeviceId, cfg_.ecg, cfg_.ecg_channel, 0));
        device_ids_ = "1";
        if (cfg_.egm) {
            devices_.push_back(make_device(kEgmDeviceId, *cfg_.egm, cfg_.egm_channel, 1));
            device_ids_ = "1+2";
        }
    }

    SimulationSummary run();

private:
    using Clock = std::chrono::steady_clock;

    DeviceCtx& dev(int i) { return *devices_[static_cast<std::size_t>(i)]; }

    void push(double t, EventKind kind, int d, std::size_t index, std::vector<std::uint8_t> wire) {
        queue_.push(Event{t, order_++, kind, d, index, std::move(wire)});
    }

    void pace(double sim_ms) {
        if (cfg_.pace_factor <= 0.0) return;
        const std::chrono::duration<double, std::milli> offset(sim_ms * cfg_.pace_factor);
        std::this_thread::sleep_until(
            wall_start_ + std::chrono::duration_cast<Clock::duration>(offset));
    }

    void dispatch(const Event& ev);
    void on_sync_at_device(int d, const Frame& sync, double now);
    void on_nack_at_device(int d, const Frame& nack, double now);
    void on_comm_frame(int d, const Frame& frame, double now);
    void send_sensor_frame(int d, const Frame& frame, double now, bool is_retransmit);
    void pump_nacks(int d, double now);
    void drain(int d, double now);
    void handle_outcomes(const std::vector<WindowEngine::Outcome>& outs, double now);

    const SimConfig& cfg_;
    ReportSink& report_;
    std::vector<std::unique_ptr<DeviceCtx>> devices_;
    WindowEngine engine_;
    DecisionPolicy policy_;
    ActuatorEmulator actuator_;
    SimulationSummary summary_;
    std::string device_ids_;

    std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
    std::uint64_t order_ = 0;
    double last_t_ = 0.0;
    bool eos_fed_ = false;
    std::uint64_t usable_this_event_ = 0;
    std::uint64_t raw_payload_bytes_ = 0;
    std::uint64_t sent_payload_bytes_ = 0;
    Clock::time_point wall_start_;
};

SimulationSummary Sim::run() {
    for (std::size_t d = 0; d < devices_.size(); ++d) {
        for (std::size_t k = 0; k < kSyncAttempts; ++k)
            push(static_cast<double>(k) * kSyncRetryMs, EventKind::SyncAttempt,
                 static_cast<int>(d), k, {});
        push(static_cast<double>(kSyncAttempts) * kSyncRetryMs, EventKind::SyncCheck,
             static_cast<int>(d), 0, {});
        raw_payload_bytes_ += 2 * devices_[d]->emu.total_samples();
    }

    wall_start_ = Clock::now();
    while (!queue_.empty()) {
        Event ev = queue_.top();
        queue_.pop();
        pace(ev.t);
        last_t_ = std::max(last_t_, ev.t);
        usable_this_event_ = 0;
        const Clock::time_point t0 = Clock::now();
        dispatch(ev);
        if (usable_this_event_ > 0) {
            const std::chrono::duration<double, std::milli> spent = Clock::now() - t0;
            for (std::uint64_t i = 0; i < usable_this_event_; ++i)
                summary_.latency_ms.push_back(spent.count());
        }
    }

    for (std::size_t d = 0; d < devices_.size(); ++d) {
        if (!devices_[d]->rx.eos()) {
            devices_[d]->rx.finish(last_t_);
            drain(static_cast<int>(d), last_t_);
        }
    }

    DeviceCtx& ecg = dev(0);
    summary_.eos = ecg.rx.eos();
    summary_.total_source_samples = ecg.emu.total_samples();
    summary_.delivered_samples = ecg.rx.delivered_samples();
    auto bounded_gap_sum = [](const Reassembler& rx) {
        std::uint64_t sum = 0;
        for (const GapReport& g : rx.gaps())
            if (g.end_sample != GapReport::kUnknownEnd) sum += g.end_sample - g.start_sample;
        return sum;
    };
    summary_.gap_samples = bounded_gap_sum(ecg.rx);
    summary_.unaccounted_tail_samples =
        summary_.total_source_samples - summary_.delivered_samples - summary_.gap_samples;
    for (const auto& d : devices_) {
        summary_.gaps_finalized += d->rx.gaps().size();
        summary_.duplicate_frames += d->rx.duplicate_frames();
    }
    summary_.losses_injected = summary_.data_frames_lost + summary_.retransmissions_lost;
    summary_.windows_total = engine_.windows_emitted();
    summary_.partial_tail_samples = engine_.partial_tail_samples();
    summary_.compression_ratio =
        raw_payload_bytes_ == 0
            ? 0.0
            : static_cast<double>(sent_payload_bytes_) / static_cast<double>(raw_payload_bytes_);
    if (devices_.size() > 1) {
        DeviceCtx& egm = dev(1);
        summary_.egm_total_samples = egm.emu.total_samples();
        summary_.egm_delivered_samples = egm.rx.delivered_samples();
        summary_.egm_gap_samples = bounded_gap_sum(egm.rx);
    }
    summary_.actuator_transitions = actuator_.log().size();
    summary_.actuator_log = actuator_.log_text();
    return summary_;
}

void Sim::dispatch(const Event& ev) {
    switch (ev.kind) {
        case EventKind::SyncAttempt: {
            DeviceCtx& d = dev(ev.dev);
            if (d.established) return;
            ++summary_.syncs_sent;
            const Frame sync =
                make_sync_frame(d.id(), d.token, static_cast<std::uint16_t>(ev.index),
                                static_cast<std::uint32_t>(std::llround(ev.t)));
            if (auto at = d.down.offer(ev.t))
                push(*at, EventKind::DeviceArrive, ev.dev, 0, encode_frame(sync));
            return;
        }
        case EventKind::SyncCheck: {
            if (!dev(ev.dev).established)
                throw SyncTimeout("device " + std::to_string(dev(ev.dev).id()) +
                                  ": no SYNC_ACK after " + std::to_string(kSyncAttempts) +
                                  " attempts");
            return;
        }
        case EventKind::DeviceArrive: {
            const Frame f = decode_frame(ev.wire);
            if (f.msg_type == MsgType::Sync)
                on_sync_at_device(ev.dev, f, ev.t);
            else if (f.msg_type == MsgType::Nack)
                on_nack_at_device(ev.dev, f, ev.t);
            return;
        }
        case EventKind::CommArrive:
            on_comm_frame(ev.dev, decode_frame(ev.wire), ev.t);
            return;
        case EventKind::ScheduledSend: {
            DeviceCtx& d = dev(ev.dev);
            send_sensor_frame(ev.dev, d.emu.schedule()[ev.index].frame, ev.t, false);
            return;
        }
        case EventKind::GapTick: {
            dev(ev.dev).rx.on_tick(ev.t);
            drain(ev.dev, ev.t);
            return;
        }
        case EventKind::ActuatorDeliver: {
            const Frame f = decode_frame(ev.wire);
            actuator_.on_decision(ev.t, decode_decision(f.payload));
            return;
        }
    }
}

void Sim::on_sync_at_device(int di, const Frame& sync, double now) {
    DeviceCtx& d = dev(di);
    if (d.emu.state() == SessionState::AwaitSync) {
        d.emu.enter_streaming();
        d.epoch_ms = now;
        const auto& schedule = d.emu.schedule();
        for (std::size_t i = 0; i < schedule.size(); ++i)
            push(d.epoch_ms + schedule[i].stream_ms, EventKind::ScheduledSend, di, i, {});
    }
    const auto clock = static_cast<std::uint32_t>(std::llround(now - d.epoch_ms));
    const Frame ack = make_sync_ack_frame(d.id(), decode_sync_token(sync), clock, sync.seq);
    if (auto at = d.up.offer(now)) push(*at, EventKind::CommArrive, di, 0, encode_frame(ack));
}

void Sim::on_nack_at_device(int di, const Frame& nack, double now) {
    DeviceCtx& d = dev(di);
    if (d.emu.state() != SessionState::Streaming) return;
    if (auto f = d.emu.retransmit(now - d.epoch_ms, nack.seq))
        send_sensor_frame(di, *f, now, true);
}

void Sim::send_sensor_frame(int di, const Frame& frame, double now, bool is_retransmit) {
    DeviceCtx& d = dev(di);
    const auto at = d.up.offer(now);
    if (frame.msg_type == MsgType::Data) {
        if (is_retransmit) {
            ++summary_.retransmissions;
            if (!at) ++summary_.retransmissions_lost;
        } else {
            ++summary_.data_frames;
            sent_payload_bytes_ += frame.payload.size();
            if (!at) {
                ++summary_.data_frames_lost;
                d.lost_seqs.insert(frame.seq);
            }
        }
    } else {
        ++summary_.heartbeats;
        if (!at) ++summary_.heartbeats_lost;
    }
    if (at) push(*at, EventKind::CommArrive, di, 0, encode_frame(frame));
}

void Sim::on_comm_frame(int di, const Frame& frame, double now) {
    DeviceCtx& d = dev(di);
    switch (frame.msg_type) {
        case MsgType::SyncAck: {
            const SyncAckInfo info = decode_sync_ack(frame);
            if (info.token != d.token)
                throw TokenMismatch("SYNC_ACK echoed the wrong epoch token");
            if (d.established) return; // duplicate ACK from a retried SYNC
            d.established = true;
            d.epoch_estimate_ms =
                now - static_cast<double>(info.stream_clock_ms) - cfg_.delay_ms;
            if (devices_.size() > 1 && devices_[0]->established && devices_[1]->established) {
                // one decimated sample period of skew is the alignment budget
                const double tolerance =
                    1000.0 * static_cast<double>(cfg_.decimation) / cfg_.ecg.header.sampling_rate;
                summary_.alignment_skew_ms =
                    align_streams(devices_[0]->epoch_estimate_ms, devices_[1]->epoch_estimate_ms,
                                  tolerance)
                        .skew_ms;
            }
            return;
        }
        case MsgType::Data:
            if (d.lost_seqs.erase(frame.seq) > 0) ++summary_.losses_healed;
            d.rx.on_data(now, frame);
            pump_nacks(di, now);
            drain(di, now);
            return;
        case MsgType::Heartbeat:
            d.rx.on_heartbeat(now, frame);
            pump_nacks(di, now);
            drain(di, now);
            return;
        default:
            return; // sensors emit nothing else
    }
}

void Sim::pump_nacks(int di, double now) {
    DeviceCtx& d = dev(di);
    const std::vector<NackRequest> requests = d.rx.take_nacks();
    if (requests.empty()) return;
    for (const NackRequest& req : requests) {
        ++summary_.nacks;
        Frame nack;
        nack.device_id = d.id();
        nack.msg_type = MsgType::Nack;
        nack.seq = req.seq;
        nack.timestamp_ms = static_cast<std::uint32_t>(std::llround(now));
        if (auto at = d.down.offer(now))
            push(*at, EventKind::DeviceArrive, di, 0, encode_frame(nack));
        else
            ++summary_.nacks_lost;
    }
    push(now + kGapDeadlineMs, EventKind::GapTick, di, 0, {});
}

void Sim::drain(int di, double now) {
    if (di != 0) return; // the EGM stream is logged, not classified
    DeviceCtx& d = dev(di);
    while (true) {
        const auto& gaps = d.rx.gaps();
        if (d.gap_cursor < gaps.size() && gaps[d.gap_cursor].start_sample == d.fed) {
            const GapReport& g = gaps[d.gap_cursor];
            if (g.end_sample == GapReport::kUnknownEnd) return; // tail never settled
            ++d.gap_cursor;
            handle_outcomes(engine_.on_gap(g.start_sample, g.end_sample), now);
            d.fed = g.end_sample;
            continue;
        }
        const auto& chunks = d.rx.chunks();
        // a fully consumed chunk is skipped only once a successor exists: the
        // reassembler keeps extending its last chunk in place
        while (d.chunk_cursor + 1 < chunks.size() &&
               chunks[d.chunk_cursor].start_sample + chunks[d.chunk_cursor].samples.size() <=
                   d.fed)
            ++d.chunk_cursor;
        if (d.chunk_cursor < chunks.size()) {
            const DeliveredChunk& c = chunks[d.chunk_cursor];
            const std::size_t end = c.start_sample + c.samples.size();
            if (c.start_sample <= d.fed && end > d.fed) {
                const std::size_t offset = d.fed - c.start_sample;
                handle_outcomes(
                    engine_.on_chunk(d.fed, std::span<const std::int16_t>(
                                                c.samples.data() + offset,
                                                c.samples.size() - offset)),
                    now);
                d.fed = end;
                continue;
            }
        }
        break;
    }
    if (d.rx.eos() && !eos_fed_) {
        eos_fed_ = true;
        handle_outcomes(engine_.on_eos(d.rx.total_source_samples()), now);
    }
}

void Sim::handle_outcomes(const std::vector<WindowEngine::Outcome>& outs, double now) {
    for (const WindowEngine::Outcome& o : outs) {
        if (!o.usable) {
            ++summary_.windows_skipped;
            policy_.on_skipped(o.window_idx);
            continue;
        }
        ++summary_.windows_processed;
        ++summary_.decisions;
        ++usable_this_event_;
        report_.append(format_decision_line(now, device_ids_, o.decision));
        if (auto cmd = policy_.on_decision(now, o.decision)) {
            ++summary_.commands;
            report_.append(format_command_line(*cmd));

            DecisionPayload payload;
            payload.command = cmd->kind;
            payload.label = o.decision.label;
            payload.confidence = o.decision.confidence;
            payload.first_window = static_cast<std::uint32_t>(cmd->first_window);
            payload.last_window = static_cast<std::uint32_t>(cmd->last_window);
            Frame f;
            f.device_id = kActuatorId;
            f.msg_type = MsgType::Decision;
            f.seq = static_cast<std::uint16_t>(summary_.commands - 1);
            f.timestamp_ms = static_cast<std::uint32_t>(std::llround(now));
            f.payload = encode_decision(payload);
            // the actuator sits on a short-range reliable link: delay, no loss
            push(now + cfg_.delay_ms, EventKind::ActuatorDeliver, -1, 0, encode_frame(f));
        }
    }
}

} // namespace

void SimConfig::validate() const {
    ecg.validate();
    if (ecg_channel >= ecg.channels.size()) throw Error("ECG channel out of range");
    if (egm) {
        egm->validate();
        if (egm_channel >= egm->channels.size()) throw Error("EGM channel out of range");
    }
    LinkConfig link{loss, delay_ms, jitter_ms, seed};
    link.validate();
    EmulatorConfig ecfg;
    ecfg.samples_per_frame = samples_per_frame;
    ecfg.validate();
    policy.validate();
    if (decimation == 0) throw Error("decimation factor must be nonzero");
    if (window_len == 0) throw Error("window length must be nonzero");
    if (pace_factor < 0.0) throw Error("pace factor must be >= 0");
    if (net.input_dim() != window_len)
        throw DimensionMismatch("model input width " + std::to_string(net.input_dim()) +
                                " does not match window length " + std::to_string(window_len));
    if (net.output_dim() != kNumClasses)
        throw DimensionMismatch("model must emit one probability per class");
}

std::string SimulationSummary::metrics_text() const {
    std::string s;
    auto put = [&s](const char* key, std::uint64_t v) {
        s += key;
        s += '=';
        s += std::to_string(v);
        s += '\n';
    };
    auto putd = [&s](const char* key, double v) {
        s += key;
        s += '=';
        s += text::format_double(v);
        s += '\n';
    };
    put("eos", eos ? 1 : 0);
    put("total_source_samples", total_source_samples);
    put("delivered_samples", delivered_samples);
    put("gap_samples", gap_samples);
    put("unaccounted_tail_samples", unaccounted_tail_samples);
    put("gaps_finalized", gaps_finalized);
    put("duplicate_frames", duplicate_frames);
    put("data_frames", data_frames);
    put("data_frames_lost", data_frames_lost);
    put("retransmissions", retransmissions);
    put("retransmissions_lost", retransmissions_lost);
    put("heartbeats", heartbeats);
    put("heartbeats_lost", heartbeats_lost);
    put("nacks", nacks);
    put("nacks_lost", nacks_lost);
    put("syncs_sent", syncs_sent);
    put("losses_injected", losses_injected);
    put("losses_healed", losses_healed);
    put("windows_total", windows_total);
    put("windows_processed", windows_processed);
    put("windows_skipped", windows_skipped);
    put("partial_tail_samples", partial_tail_samples);
    put("decisions", decisions);
    put("commands", commands);
    put("actuator_transitions", actuator_transitions);
    putd("compression_ratio", compression_ratio);
    putd("alignment_skew_ms", alignment_skew_ms);
    put("egm_total_samples", egm_total_samples);
    put("egm_delivered_samples", egm_delivered_samples);
    put("egm_gap_samples", egm_gap_samples);
    return s;
}

SimulationSummary run_simulation(const SimConfig& cfg, ReportSink& report) {
    cfg.validate();
    Sim sim(cfg, report);
    return sim.run();
}

} // namespace icrm
