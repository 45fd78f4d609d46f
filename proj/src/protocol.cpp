#include "icrm/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "icrm/checksum.hpp"
#include "icrm/dsp.hpp"

namespace icrm {

namespace {

void append_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

bool valid_msg_type(std::uint8_t t) {
    return t >= static_cast<std::uint8_t>(MsgType::Sync) &&
           t <= static_cast<std::uint8_t>(MsgType::Heartbeat);
}

// Signed seq distance in wrap-around space; exactly 2^15 is unresolvable.
int wrap_distance(std::uint16_t seq, std::uint16_t expected) {
    const auto d = static_cast<std::int16_t>(static_cast<std::uint16_t>(seq - expected));
    if (d == INT16_MIN)
        throw SeqWrapAmbiguity("seq " + std::to_string(seq) + " is 2^15 away from expected " +
                               std::to_string(expected));
    return d;
}

} // namespace

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    if (frame.payload.size() > kMaxPayload)
        throw BadLength("payload of " + std::to_string(frame.payload.size()) +
                        " bytes exceeds the " + std::to_string(kMaxPayload) + " cap");
    if (!valid_msg_type(static_cast<std::uint8_t>(frame.msg_type)))
        throw UnknownMsgType("message type " +
                             std::to_string(static_cast<int>(frame.msg_type)));

    std::vector<std::uint8_t> out;
    out.reserve(kFrameOverhead + frame.payload.size());
    out.push_back(kMagic0);
    out.push_back(kMagic1);
    out.push_back(kProtocolVersion);
    out.push_back(frame.device_id);
    out.push_back(static_cast<std::uint8_t>(frame.msg_type));
    append_u16(out, frame.seq);
    append_u32(out, frame.timestamp_ms);
    append_u16(out, static_cast<std::uint16_t>(frame.payload.size()));
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    append_u16(out, crc16_ccitt(out));
    return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kFrameOverhead)
        throw BadLength("frame of " + std::to_string(bytes.size()) + " bytes is shorter than " +
                        std::to_string(kFrameOverhead));
    if (bytes[0] != kMagic0 || bytes[1] != kMagic1) throw BadMagic("bad frame magic");

    const std::uint16_t stored_crc = read_u16(bytes, bytes.size() - 2);
    if (crc16_ccitt(bytes.first(bytes.size() - 2)) != stored_crc)
        throw BadCrc("frame checksum mismatch");

    // version rides with the magic: both identify "a frame we speak"
    if (bytes[2] != kProtocolVersion)
        throw BadMagic("unsupported protocol version " + std::to_string(bytes[2]));
    if (!valid_msg_type(bytes[4]))
        throw UnknownMsgType("message type " + std::to_string(bytes[4]));

    const std::uint16_t payload_len = read_u16(bytes, 11);
    if (payload_len > kMaxPayload)
        throw BadLength("declared payload of " + std::to_string(payload_len) + " bytes");
    if (payload_len != bytes.size() - kFrameOverhead)
        throw BadLength("payload length field disagrees with frame size");

    Frame frame;
    frame.device_id = bytes[3];
    frame.msg_type = static_cast<MsgType>(bytes[4]);
    frame.seq = read_u16(bytes, 5);
    frame.timestamp_ms = read_u32(bytes, 7);
    frame.payload.assign(bytes.begin() + kHeaderLen, bytes.end() - 2);
    return frame;
}

std::vector<std::uint8_t> pack_samples(std::span<const std::int16_t> samples, bool compress_on) {
    if (samples.empty()) return {}; // zero-payload DATA is the end-of-stream mark

    const std::size_t raw_size = 1 + 2 * samples.size();
    if (compress_on) {
        const std::vector<std::uint8_t> blob = compress(samples).to_bytes();
        // fall back to raw if the codec cannot win on this block
        if (blob.size() <= kMaxPayload && blob.size() <= raw_size) return blob;
    }
    if (raw_size > kMaxPayload)
        throw BadLength("raw sample payload of " + std::to_string(raw_size) + " bytes");
    std::vector<std::uint8_t> out;
    out.reserve(raw_size);
    out.push_back(kPayloadRaw);
    for (std::int16_t s : samples) append_u16(out, static_cast<std::uint16_t>(s));
    return out;
}

std::vector<std::int16_t> unpack_samples(std::span<const std::uint8_t> payload) {
    if (payload.empty()) return {};
    if (payload[0] == kPayloadRaw) {
        if ((payload.size() - 1) % 2 != 0)
            throw MalformedBlock("raw sample payload has an odd byte count");
        std::vector<std::int16_t> out((payload.size() - 1) / 2);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<std::int16_t>(read_u16(payload, 1 + 2 * i));
        return out;
    }
    if (payload[0] == kCodecDeltaVarint)
        return decompress(CompressedBlock::from_bytes(payload));
    throw MalformedBlock("unknown sample payload codec " + std::to_string(payload[0]));
}

std::vector<std::uint8_t> encode_decision(const DecisionPayload& d) {
    std::vector<std::uint8_t> out;
    out.reserve(18);
    out.push_back(static_cast<std::uint8_t>(d.command));
    out.push_back(static_cast<std::uint8_t>(d.label));
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(d.confidence);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
    append_u32(out, d.first_window);
    append_u32(out, d.last_window);
    return out;
}

DecisionPayload decode_decision(std::span<const std::uint8_t> payload) {
    if (payload.size() != 18)
        throw BadLength("decision payload must be 18 bytes, got " +
                        std::to_string(payload.size()));
    if (payload[0] > static_cast<std::uint8_t>(CommandKind::ConfirmShock))
        throw UnknownCommand("command byte " + std::to_string(payload[0]));
    if (payload[1] >= kNumClasses)
        throw UnknownCommand("label byte " + std::to_string(payload[1]));

    DecisionPayload d;
    d.command = static_cast<CommandKind>(payload[0]);
    d.label = static_cast<ClassLabel>(payload[1]);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(payload[2 + static_cast<std::size_t>(i)]) << (8 * i);
    d.confidence = std::bit_cast<double>(bits);
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
        throw UnknownCommand("confidence outside [0,1]");
    d.first_window = read_u32(payload, 10);
    d.last_window = read_u32(payload, 14);
    return d;
}

std::vector<std::uint8_t> encode_heartbeat_payload(std::uint16_t next_seq) {
    std::vector<std::uint8_t> out;
    append_u16(out, next_seq);
    return out;
}

std::uint16_t decode_heartbeat_payload(std::span<const std::uint8_t> payload) {
    if (payload.size() != 2) throw BadLength("heartbeat payload must be 2 bytes");
    return read_u16(payload, 0);
}

void LinkConfig::validate() const {
    if (!(loss_probability >= 0.0 && loss_probability < 1.0))
        throw Error("loss probability must lie in [0, 1)");
    if (delay_ms < 0.0 || jitter_ms < 0.0) throw Error("delay and jitter must be nonnegative");
}

LossyLink::LossyLink(const LinkConfig& config) : cfg_(config), rng_(config.seed) {
    cfg_.validate();
}

std::optional<double> LossyLink::offer(double send_ms) {
    if (send_ms < last_send_ms_) throw Error("link send times must be nondecreasing");
    last_send_ms_ = send_ms;
    ++offered_;

    // both draws happen unconditionally so the schedule never depends on
    // which frames happened to survive
    const double u_loss = rng_.uniform();
    const double u_jitter = rng_.uniform();
    if (u_loss < cfg_.loss_probability) return std::nullopt;

    ++delivered_;
    const double jitter = (2.0 * u_jitter - 1.0) * cfg_.jitter_ms;
    return send_ms + std::max(0.0, cfg_.delay_ms + jitter);
}

std::vector<LinkDelivery> simulate_link(std::span<const double> send_times_ms,
                                        const LinkConfig& config) {
    LossyLink link(config);
    std::vector<LinkDelivery> out;
    for (std::size_t i = 0; i < send_times_ms.size(); ++i)
        if (auto arrival = link.offer(send_times_ms[i]))
            out.push_back({i, send_times_ms[i], *arrival});
    return out;
}

Frame make_sync_frame(std::uint8_t device_id, std::uint32_t token, std::uint16_t seq,
                      std::uint32_t timestamp_ms) {
    Frame sync;
    sync.device_id = device_id;
    sync.msg_type = MsgType::Sync;
    sync.seq = seq;
    sync.timestamp_ms = timestamp_ms;
    append_u32(sync.payload, token);
    return sync;
}

Frame make_sync_ack_frame(std::uint8_t device_id, std::uint32_t token,
                          std::uint32_t stream_clock_ms, std::uint16_t seq) {
    Frame ack;
    ack.device_id = device_id;
    ack.msg_type = MsgType::SyncAck;
    ack.seq = seq;
    ack.timestamp_ms = stream_clock_ms;
    append_u32(ack.payload, token);
    append_u32(ack.payload, stream_clock_ms);
    return ack;
}

std::uint32_t decode_sync_token(const Frame& sync) {
    if (sync.msg_type != MsgType::Sync || sync.payload.size() != 4)
        throw BadLength("SYNC payload must be a 4-byte token");
    return read_u32(sync.payload, 0);
}

SyncAckInfo decode_sync_ack(const Frame& ack) {
    if (ack.msg_type != MsgType::SyncAck || ack.payload.size() != 8)
        throw BadLength("SYNC_ACK payload must be token + stream clock (8 bytes)");
    return {read_u32(ack.payload, 0), read_u32(ack.payload, 4)};
}

HandshakeResult sync_handshake(LossyLink& to_device, LossyLink& to_communicator,
                               std::uint8_t device_id, std::uint32_t epoch_token,
                               double start_ms) {
    HandshakeResult result;
    result.epoch_token = epoch_token;
    bool device_streaming = false;

    for (std::size_t attempt = 0; attempt < kSyncAttempts; ++attempt) {
        const double t_send = start_ms + static_cast<double>(attempt) * kSyncRetryMs;
        const Frame sync = make_sync_frame(
            device_id, epoch_token, static_cast<std::uint16_t>(attempt),
            static_cast<std::uint32_t>(std::llround(std::max(0.0, t_send))));
        const std::vector<std::uint8_t> wire = encode_frame(sync);
        ++result.syncs_sent;

        const std::optional<double> at_device = to_device.offer(t_send);
        if (!at_device) continue;

        const Frame heard = decode_frame(wire);
        if (!device_streaming) {
            device_streaming = true;
            result.device_epoch_ms = *at_device;
        }

        const auto clock =
            static_cast<std::uint32_t>(std::llround(*at_device - result.device_epoch_ms));
        const std::vector<std::uint8_t> ack_wire = encode_frame(
            make_sync_ack_frame(device_id, decode_sync_token(heard), clock, heard.seq));

        const std::optional<double> at_comm = to_communicator.offer(*at_device);
        if (!at_comm) continue;

        const SyncAckInfo info = decode_sync_ack(decode_frame(ack_wire));
        if (info.token != epoch_token)
            throw TokenMismatch("SYNC_ACK echoed the wrong epoch token");
        result.established_ms = *at_comm;
        return result;
    }
    throw SyncTimeout("no SYNC_ACK after " + std::to_string(kSyncAttempts) + " attempts");
}

Reassembler::Reassembler(double sampling_rate_hz, double gap_deadline_ms)
    : rate_hz_(sampling_rate_hz), deadline_ms_(gap_deadline_ms) {
    if (!(rate_hz_ > 0.0)) throw Error("sampling rate must be positive");
}

std::size_t Reassembler::sample_index(std::uint32_t timestamp_ms) const {
    return static_cast<std::size_t>(
        std::llround(static_cast<double>(timestamp_ms) * rate_hz_ / 1000.0));
}

std::uint64_t Reassembler::absolute_seq(std::uint16_t seq) const {
    const int d = wrap_distance(seq, static_cast<std::uint16_t>(abs_expected_));
    const auto abs = static_cast<std::int64_t>(abs_expected_) + d;
    return abs < 0 ? std::uint64_t(0) : static_cast<std::uint64_t>(abs);
}

void Reassembler::note_missing_until(double now_ms, std::uint64_t abs_end) {
    for (std::uint64_t m = abs_expected_; m < abs_end; ++m) {
        if (buffer_.count(m) || missing_.count(m)) continue;
        missing_.emplace(m, now_ms);
        pending_nacks_.push_back({static_cast<std::uint16_t>(m), now_ms});
        ++nacks_sent_;
    }
}

void Reassembler::on_data(double now_ms, const Frame& frame) {
    if (eos_) {
        ++duplicates_;
        return;
    }
    const int d = wrap_distance(frame.seq, static_cast<std::uint16_t>(abs_expected_));
    if (d < 0) {
        ++duplicates_; // already delivered, or its gap was finalized
        return;
    }
    const std::uint64_t abs = abs_expected_ + static_cast<std::uint64_t>(d);
    if (buffer_.count(abs)) {
        ++duplicates_;
        return;
    }
    note_missing_until(now_ms, abs);
    missing_.erase(abs); // a retransmission fills its hole
    buffer_.emplace(abs, frame);
    flush();
    finalize_overdue(now_ms);
}

void Reassembler::on_heartbeat(double now_ms, const Frame& frame) {
    if (eos_) return;
    const std::uint16_t next_seq = decode_heartbeat_payload(frame.payload);
    const int d = wrap_distance(next_seq, static_cast<std::uint16_t>(abs_expected_));
    if (d > 0) note_missing_until(now_ms, abs_expected_ + static_cast<std::uint64_t>(d));
    finalize_overdue(now_ms);
}

void Reassembler::on_tick(double now_ms) { finalize_overdue(now_ms); }

void Reassembler::flush() {
    while (!buffer_.empty() && buffer_.begin()->first == abs_expected_) {
        Frame frame = std::move(buffer_.begin()->second);
        buffer_.erase(buffer_.begin());
        ++abs_expected_;

        if (frame.payload.empty()) { // end-of-stream: timestamp marks total length
            eos_ = true;
            total_source_samples_ = sample_index(frame.timestamp_ms);
            buffer_.clear();
            missing_.clear();
            return;
        }

        std::vector<std::int16_t> samples = unpack_samples(frame.payload);
        const std::size_t start = sample_index(frame.timestamp_ms);
        if (start != next_source_sample_)
            throw Error("sample index discontinuity at seq " + std::to_string(frame.seq) +
                        ": frame starts at " + std::to_string(start) + ", stream is at " +
                        std::to_string(next_source_sample_));
        delivered_samples_ += samples.size();
        next_source_sample_ = start + samples.size();
        if (!chunks_.empty() &&
            chunks_.back().start_sample + chunks_.back().samples.size() == start) {
            auto& tail = chunks_.back().samples;
            tail.insert(tail.end(), samples.begin(), samples.end());
        } else {
            chunks_.push_back({start, std::move(samples)});
        }
    }
}

void Reassembler::finalize_head_gap(double now_ms, std::size_t end_sample) {
    GapReport gap;
    gap.first_seq = static_cast<std::uint16_t>(abs_expected_);
    gap.start_sample = next_source_sample_;
    gap.end_sample = end_sample;
    gap.finalized_ms = now_ms;
    std::uint64_t run = abs_expected_;
    while (missing_.count(run)) {
        missing_.erase(run);
        ++run;
    }
    gap.last_seq = static_cast<std::uint16_t>(run - 1);
    abs_expected_ = run;
    if (end_sample != GapReport::kUnknownEnd) next_source_sample_ = end_sample;
    gaps_.push_back(gap);
}

void Reassembler::finalize_overdue(double now_ms) {
    while (!eos_ && !missing_.empty() && missing_.begin()->first == abs_expected_) {
        std::uint64_t run = abs_expected_;
        double last_discovery = 0.0;
        while (missing_.count(run)) {
            last_discovery = std::max(last_discovery, missing_.at(run));
            ++run;
        }
        const auto next_frame = buffer_.find(run);
        if (next_frame == buffer_.end()) return; // tail hole: extent still unknown
        if (now_ms - last_discovery < deadline_ms_) return; // retransmission may still land

        // the bounding frame's timestamp marks where the stream resumes
        // (an empty terminator payload bounds the gap just the same)
        finalize_head_gap(now_ms, sample_index(next_frame->second.timestamp_ms));
        flush();
    }
}

void Reassembler::finish(double now_ms) {
    while (!eos_ && !missing_.empty() && missing_.begin()->first == abs_expected_) {
        std::uint64_t run = abs_expected_;
        while (missing_.count(run)) ++run;
        const auto next_frame = buffer_.find(run);
        const std::size_t end = next_frame == buffer_.end()
                                    ? GapReport::kUnknownEnd
                                    : sample_index(next_frame->second.timestamp_ms);
        finalize_head_gap(now_ms, end);
        flush();
    }
    // nothing should remain buffered past an un-NACKed hole; drop defensively
    buffer_.clear();
    missing_.clear();
}

std::vector<NackRequest> Reassembler::take_nacks() {
    std::vector<NackRequest> out = std::move(pending_nacks_);
    pending_nacks_.clear();
    return out;
}

} // namespace icrm
