#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "icrm/class_label.hpp"
#include "icrm/errors.hpp"
#include "icrm/rng.hpp"

namespace icrm {

struct BadMagic : Error { using Error::Error; };
struct BadCrc : Error { using Error::Error; };
struct BadLength : Error { using Error::Error; };
struct UnknownMsgType : Error { using Error::Error; };
struct SyncTimeout : Error { using Error::Error; };
struct TokenMismatch : Error { using Error::Error; };
struct SeqWrapAmbiguity : Error { using Error::Error; };
struct UnknownCommand : Error { using Error::Error; };

enum class MsgType : std::uint8_t {
    Sync = 1,
    SyncAck = 2,
    Data = 3,
    Nack = 4,
    Decision = 5,
    Heartbeat = 6,
};

inline constexpr std::uint8_t kMagic0 = 0x43; // 'C'
inline constexpr std::uint8_t kMagic1 = 0x47; // 'G'
inline constexpr std::uint8_t kProtocolVersion = 0x01;
inline constexpr std::size_t kMaxPayload = 1024;
// magic(2) version(1) device(1) type(1) seq(2) timestamp(4) payload_len(2)
inline constexpr std::size_t kHeaderLen = 13;
inline constexpr std::size_t kFrameOverhead = kHeaderLen + 2; // + crc16

// Wire layout (all multi-byte fields little-endian):
//   magic(2) | version(1) | device_id(1) | msg_type(1) | seq(2) |
//   timestamp_ms(4) | payload_len(2) | payload | crc16-ccitt(2)
// The CRC covers every preceding byte.
struct Frame {
    std::uint8_t device_id = 0;
    MsgType msg_type = MsgType::Heartbeat;
    std::uint16_t seq = 0;
    std::uint32_t timestamp_ms = 0;
    std::vector<std::uint8_t> payload;

    bool operator==(const Frame&) const = default;
};

std::vector<std::uint8_t> encode_frame(const Frame& frame);
Frame decode_frame(std::span<const std::uint8_t> bytes);

// ---- sample payloads ------------------------------------------------------
// First payload byte selects the sample codec; the delta/varint id matches
// the dsp block format, so a compressed payload IS a CompressedBlock image.
inline constexpr std::uint8_t kPayloadRaw = 0x00;

std::vector<std::uint8_t> pack_samples(std::span<const std::int16_t> samples, bool compress);
std::vector<std::int16_t> unpack_samples(std::span<const std::uint8_t> payload);

// ---- decision payloads ----------------------------------------------------
enum class CommandKind : std::uint8_t {
    StandDown = 0,
    Pace = 1,
    ArmShock = 2,
    ConfirmShock = 3,
};

constexpr const char* to_string(CommandKind k) {
    switch (k) {
        case CommandKind::StandDown: return "STAND_DOWN";
        case CommandKind::Pace: return "PACE";
        case CommandKind::ArmShock: return "ARM_SHOCK";
        case CommandKind::ConfirmShock: return "CONFIRM_SHOCK";
    }
    return "?";
}

// command(1) | label(1) | confidence f64 LE(8) | first_window u32 | last_window u32
struct DecisionPayload {
    CommandKind command = CommandKind::StandDown;
    ClassLabel label = ClassLabel::NSR;
    double confidence = 0.0;
    std::uint32_t first_window = 0;
    std::uint32_t last_window = 0;

    bool operator==(const DecisionPayload&) const = default;
};

std::vector<std::uint8_t> encode_decision(const DecisionPayload& d);
DecisionPayload decode_decision(std::span<const std::uint8_t> payload);

// ---- heartbeat payloads ---------------------------------------------------
// A heartbeat advertises the sender's next DATA seq (u16 LE), letting the
// receiver spot holes at the tail of the stream where no later DATA frame
// would reveal them.
std::vector<std::uint8_t> encode_heartbeat_payload(std::uint16_t next_seq);
std::uint16_t decode_heartbeat_payload(std::span<const std::uint8_t> payload);

// ---- lossy link -----------------------------------------------------------
struct LinkConfig {
    double loss_probability = 0.0; // in [0, 1)
    double delay_ms = 10.0;
    double jitter_ms = 2.0; // uniform half-width
    std::uint64_t seed = 0;

    void validate() const;
};

// Deterministic unreliable channel. Every offered frame consumes exactly one
// loss draw and one jitter draw, in send order, so the delivery schedule is a
// pure function of (send times, config).
class LossyLink {
public:
    explicit LossyLink(const LinkConfig& config);

    // Arrival time for a frame handed over at send_ms, or nullopt if lost.
    // Send times must be nondecreasing.
    std::optional<double> offer(double send_ms);

    std::size_t offered() const { return offered_; }
    std::size_t delivered() const { return delivered_; }

private:
    LinkConfig cfg_;
    Rng rng_;
    double last_send_ms_ = -1e300;
    std::size_t offered_ = 0;
    std::size_t delivered_ = 0;
};

struct LinkDelivery {
    std::size_t index; // position in the send sequence
    double send_ms;
    double arrival_ms;
};

// Batch form: returns the surviving frames in send order with arrival times.
std::vector<LinkDelivery> simulate_link(std::span<const double> send_times_ms,
                                        const LinkConfig& config);

// ---- synchronization handshake --------------------------------------------
inline constexpr std::size_t kSyncAttempts = 5;
inline constexpr double kSyncRetryMs = 200.0;

struct HandshakeResult {
    std::size_t syncs_sent = 0;     // SYNC frames the communicator emitted
    double device_epoch_ms = 0.0;   // link time the device entered Streaming
    double established_ms = 0.0;    // link time the SYNC_ACK reached the communicator
    std::uint32_t epoch_token = 0;
};

// SYNC carries the communicator's session token; SYNC_ACK echoes it along
// with the device's stream clock at the moment of the reply, which lets the
// communicator place the stream epoch on its own timeline (retries would
// otherwise skew the estimate by whole retry intervals).
Frame make_sync_frame(std::uint8_t device_id, std::uint32_t token, std::uint16_t seq,
                      std::uint32_t timestamp_ms);
Frame make_sync_ack_frame(std::uint8_t device_id, std::uint32_t token,
                          std::uint32_t stream_clock_ms, std::uint16_t seq);
std::uint32_t decode_sync_token(const Frame& sync);

struct SyncAckInfo {
    std::uint32_t token = 0;
    std::uint32_t stream_clock_ms = 0; // device stream time when the ACK left
};
SyncAckInfo decode_sync_ack(const Frame& ack);

// Runs the SYNC / SYNC_ACK exchange over the two directional links. The
// communicator sends up to kSyncAttempts SYNCs at kSyncRetryMs intervals and
// accepts the first echoed token; the device pins its stream epoch to the
// first SYNC it hears.
HandshakeResult sync_handshake(LossyLink& to_device, LossyLink& to_communicator,
                               std::uint8_t device_id, std::uint32_t epoch_token,
                               double start_ms);

// ---- reassembly -----------------------------------------------------------
struct GapReport {
    std::uint16_t first_seq = 0;
    std::uint16_t last_seq = 0;   // inclusive
    std::size_t start_sample = 0; // source index, inclusive
    std::size_t end_sample = 0;   // source index, exclusive; kUnknownEnd if tail unknown
    double finalized_ms = 0.0;

    static constexpr std::size_t kUnknownEnd = static_cast<std::size_t>(-1);
};

struct DeliveredChunk {
    std::size_t start_sample = 0;
    std::vector<std::int16_t> samples;
};

struct NackRequest {
    std::uint16_t seq = 0;
    double issued_ms = 0.0;
};

inline constexpr double kGapDeadlineMs = 500.0;

// Orders DATA frames by seq, requests each missing seq exactly once via NACK,
// and finalizes unfilled holes as gap reports after the deadline. Sample
// indices come from frame timestamps (timestamp_ms * rate / 1000).
class Reassembler {
public:
    explicit Reassembler(double sampling_rate_hz, double gap_deadline_ms = kGapDeadlineMs);

    void on_data(double now_ms, const Frame& frame);
    void on_heartbeat(double now_ms, const Frame& frame);
    void on_tick(double now_ms);    // finalize any overdue holes
    void finish(double now_ms);     // end of run: force-finalize everything pending

    // NACKs issued since the last call (each missing seq exactly once).
    std::vector<NackRequest> take_nacks();

    const std::vector<DeliveredChunk>& chunks() const { return chunks_; }
    const std::vector<GapReport>& gaps() const { return gaps_; }
    bool eos() const { return eos_; }
    std::size_t total_source_samples() const { return total_source_samples_; }
    std::size_t delivered_samples() const { return delivered_samples_; }
    std::size_t duplicate_frames() const { return duplicates_; }
    std::size_t nacks_sent() const { return nacks_sent_; }
    std::uint16_t next_expected_seq() const { return static_cast<std::uint16_t>(abs_expected_); }

private:
    std::size_t sample_index(std::uint32_t timestamp_ms) const;
    std::uint64_t absolute_seq(std::uint16_t seq) const;
    void note_missing_until(double now_ms, std::uint64_t abs_end);
    void flush();
    void finalize_overdue(double now_ms);
    void finalize_head_gap(double now_ms, std::size_t end_sample);

    double rate_hz_;
    double deadline_ms_;
    std::uint64_t abs_expected_ = 0;    // next in-order absolute seq
    std::size_t next_source_sample_ = 0;
    std::map<std::uint64_t, Frame> buffer_;         // out-of-order arrivals
    std::map<std::uint64_t, double> missing_;       // hole -> discovery time
    std::vector<DeliveredChunk> chunks_;
    std::vector<GapReport> gaps_;
    std::vector<NackRequest> pending_nacks_;
    bool eos_ = false;
    std::size_t total_source_samples_ = 0;
    std::size_t delivered_samples_ = 0;
    std::size_t duplicates_ = 0;
    std::size_t nacks_sent_ = 0;
};

} // namespace icrm
