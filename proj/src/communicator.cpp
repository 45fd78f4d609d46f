#include "icrm/communicator.hpp"

#include <cmath>
#include <iostream>

#include "icrm/text.hpp"

namespace icrm {

void PolicyConfig::validate() const {
    if (k < 1) throw Error("policy needs k >= 1");
    if (!(confidence_threshold > 0.0 && confidence_threshold <= 1.0))
        throw Error("confidence threshold must lie in (0, 1]");
}

DecisionPolicy::DecisionPolicy(const PolicyConfig& config) : cfg_(config) {
    cfg_.validate();
}

std::optional<ActuationCommand> DecisionPolicy::on_decision(double now_ms, const Decision& d) {
    if (d.confidence < cfg_.confidence_threshold) {
        run_length_ = 0; // a shaky window breaks the run and starts nothing
        return std::nullopt;
    }
    if (run_length_ == 0 || d.label != run_label_) {
        run_label_ = d.label;
        run_length_ = 1;
        run_start_window_ = d.window_idx;
    } else {
        ++run_length_;
    }

    const std::size_t k = cfg_.k;
    auto make = [&](CommandKind kind) {
        ActuationCommand c;
        c.kind = kind;
        c.first_window = d.window_idx - (k - 1);
        c.last_window = d.window_idx;
        c.issue_ms = now_ms;
        return c;
    };

    switch (run_label_) {
        case ClassLabel::AFB:
            if (run_length_ == k) {
                therapy_active_ = true;
                return make(CommandKind::ArmShock);
            }
            if (run_length_ == 2 * k) {
                therapy_active_ = true;
                run_length_ = 0; // treatment delivered; a fresh run must re-arm
                return make(CommandKind::ConfirmShock);
            }
            break;
        case ClassLabel::AFL:
            if (run_length_ == k) {
                therapy_active_ = true;
                return make(CommandKind::Pace);
            }
            break;
        case ClassLabel::NSR:
            if (run_length_ == k && therapy_active_) {
                therapy_active_ = false;
                return make(CommandKind::StandDown);
            }
            break;
    }
    return std::nullopt;
}

void DecisionPolicy::on_skipped(std::uint64_t window_idx) {
    (void)window_idx;
    run_length_ = 0;
}

WindowEngine::WindowEngine(const Network* net, double source_rate_hz, std::size_t decim_factor,
                           std::size_t window_len)
    : net_(net),
      rate_hz_(source_rate_hz),
      factor_(decim_factor),
      window_len_(window_len),
      taps_(decimation_fir_taps(decim_factor == 0 ? 1 : decim_factor)) {
    if (!(rate_hz_ > 0.0)) throw Error("sampling rate must be positive");
    if (factor_ == 0) throw ZeroFactor("decimation factor must be nonzero");
    if (window_len_ == 0) throw Error("window length must be nonzero");
}

void WindowEngine::ensure_capacity(std::size_t n) {
    if (source_.size() < n) {
        source_.resize(n, 0.0);
        tainted_.resize(n, false);
    }
}

std::vector<WindowEngine::Outcome> WindowEngine::on_chunk(std::size_t start_sample,
                                                          std::span<const std::int16_t> samples) {
    if (start_sample > known_prefix_)
        throw Error("chunk starts at " + std::to_string(start_sample) +
                    " but the stream is settled only to " + std::to_string(known_prefix_));
    ensure_capacity(start_sample + samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        source_[start_sample + i] = static_cast<double>(samples[i]);
    known_prefix_ = std::max(known_prefix_, start_sample + samples.size());
    return advance();
}

std::vector<WindowEngine::Outcome> WindowEngine::on_gap(std::size_t start_sample,
                                                        std::size_t end_sample) {
    if (end_sample == GapReport::kUnknownEnd || end_sample <= start_sample) return {};
    if (start_sample > known_prefix_)
        throw Error("gap starts beyond the settled stream");
    ensure_capacity(end_sample);
    for (std::size_t i = start_sample; i < end_sample; ++i) tainted_[i] = true;
    known_prefix_ = std::max(known_prefix_, end_sample);
    return advance();
}

std::vector<WindowEngine::Outcome> WindowEngine::on_eos(std::size_t total_source_samples) {
    eos_ = true;
    total_source_ = total_source_samples;
    ensure_capacity(total_source_);
    if (known_prefix_ < total_source_) {
        // nothing ever bounded this tail; treat it as one big gap
        for (std::size_t i = known_prefix_; i < total_source_; ++i) tainted_[i] = true;
        known_prefix_ = total_source_;
    }
    return advance();
}

double WindowEngine::decimated_at(std::size_t d) const {
    const std::size_t n = eos_ ? total_source_ : known_prefix_;
    const auto base = static_cast<std::int64_t>(d * factor_ + taps_.size() / 2);
    double acc = 0.0;
    for (std::size_t j = 0; j < taps_.size(); ++j)
        acc += taps_[j] * source_[reflect_index(base - static_cast<std::int64_t>(j), n)];
    return acc;
}

bool WindowEngine::window_tainted(std::uint64_t w) const {
    const std::size_t half = taps_.size() / 2;
    const std::size_t first_d = w * window_len_;
    const std::size_t last_d = first_d + window_len_ - 1;
    const std::int64_t lo = static_cast<std::int64_t>(first_d * factor_) -
                            (static_cast<std::int64_t>(taps_.size()) - 1 -
                             static_cast<std::int64_t>(half));
    const std::int64_t hi = static_cast<std::int64_t>(last_d * factor_ + half);
    const std::size_t n = eos_ ? total_source_ : known_prefix_;
    for (std::int64_t i = std::max<std::int64_t>(lo, 0);
         i <= hi && i < static_cast<std::int64_t>(n); ++i)
        if (tainted_[static_cast<std::size_t>(i)]) return true;
    return false;
}

std::vector<WindowEngine::Outcome> WindowEngine::advance() {
    std::vector<Outcome> out;
    const std::size_t half = taps_.size() / 2;
    while (true) {
        const std::uint64_t w = next_window_;
        const std::size_t last_d = (w + 1) * window_len_ - 1;
        if (eos_) {
            // only windows fully inside the decimated stream exist
            if ((w + 1) * window_len_ > total_source_ / factor_) break;
        } else {
            const std::size_t need = last_d * factor_ + half + 1;
            if (known_prefix_ < need) break;
        }

        Outcome outcome;
        outcome.window_idx = w;
        outcome.usable = !window_tainted(w);
        if (outcome.usable) {
            if (net_ == nullptr) throw ModelNotLoaded("no model loaded for classification");
            std::vector<double> window(window_len_);
            for (std::size_t i = 0; i < window_len_; ++i)
                window[i] = decimated_at(w * window_len_ + i);
            const std::vector<double> norm = normalize(window);
            const std::vector<double> probs = forward(*net_, norm);
            const std::size_t idx = predict_index(probs);

            Decision d;
            d.window_idx = w;
            const double span_ms =
                static_cast<double>(window_len_ * factor_) * 1000.0 / rate_hz_;
            d.t_start_ms = static_cast<double>(w) * span_ms;
            d.t_end_ms = d.t_start_ms + span_ms;
            d.label = static_cast<ClassLabel>(idx);
            d.confidence = probs[idx];
            for (std::size_t c = 0; c < kNumClasses; ++c) d.probs[c] = probs[c];
            outcome.decision = d;
        }
        out.push_back(std::move(outcome));
        ++next_window_;
    }
    return out;
}

std::size_t WindowEngine::partial_tail_samples() const {
    if (!eos_) return 0;
    return total_source_ - static_cast<std::size_t>(next_window_) * window_len_ * factor_;
}

FileSink::FileSink(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) {
        failed_ = true;
        std::cerr << "report sink: " << SinkFailure("cannot open " + path).what() << "\n";
    }
}

void FileSink::append(std::string_view line) {
    if (failed_) return;
    out_ << line;
    out_.flush();
    if (!out_) {
        failed_ = true; // reporting must never block actuation: log and move on
        std::cerr << "report sink: " << SinkFailure("write failed").what() << "\n";
    }
}

std::string format_decision_line(double ts_ms, std::string_view device_ids, const Decision& d) {
    std::string line = std::to_string(std::llround(ts_ms));
    line += ';';
    line += device_ids;
    line += ';';
    line += std::to_string(d.window_idx);
    line += ';';
    line += to_string(d.label);
    line += ';';
    line += text::format_double(d.confidence);
    for (double p : d.probs) {
        line += ';';
        line += text::format_double(p);
    }
    line += '\n';
    return line;
}

std::string format_command_line(const ActuationCommand& cmd) {
    std::string line = std::to_string(std::llround(cmd.issue_ms));
    line += ";COMMAND;";
    line += to_string(cmd.kind);
    line += ';';
    line += std::to_string(cmd.first_window);
    line += '-';
    line += std::to_string(cmd.last_window);
    line += '\n';
    return line;
}

AlignmentInfo align_streams(double ecg_epoch_estimate_ms, double egm_epoch_estimate_ms,
                            double tolerance_ms) {
    AlignmentInfo info;
    info.ecg_epoch_ms = ecg_epoch_estimate_ms;
    info.egm_epoch_ms = egm_epoch_estimate_ms;
    info.skew_ms = egm_epoch_estimate_ms - ecg_epoch_estimate_ms;
    if (std::abs(info.skew_ms) > tolerance_ms)
        throw EpochMismatch("stream epochs differ by " + text::format_double(info.skew_ms) +
                            " ms, beyond the " + text::format_double(tolerance_ms) +
                            " ms tolerance");
    return info;
}

} // namespace icrm
