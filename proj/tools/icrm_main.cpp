#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icrm/ann.hpp"
#include "icrm/communicator.hpp"
#include "icrm/config.hpp"
#include "icrm/devices.hpp"
#include "icrm/dsp.hpp"
#include "icrm/file_io.hpp"
#include "icrm/pipeline.hpp"
#include "icrm/signal_io.hpp"
#include "icrm/simulation.hpp"
#include "icrm/text.hpp"

namespace fs = std::filesystem;

namespace {

struct UsageError : icrm::Error {
    using icrm::Error::Error;
};

using ConfigMap = std::map<std::string, std::string>;

ConfigMap load_config(const std::string& path) {
    if (path.empty()) return {};
    return icrm::parse_config_text(icrm::read_file_text(path));
}

// flags > config file > defaults
void merge(const CLI::Option* opt, const ConfigMap& cfg, const std::string& key,
           std::string& var) {
    if (opt->count() == 0 && cfg.contains(key)) var = cfg.at(key);
}

void merge(const CLI::Option* opt, const ConfigMap& cfg, const std::string& key, double& var) {
    if (opt->count() != 0 || !cfg.contains(key)) return;
    const auto v = icrm::text::parse_double(cfg.at(key));
    if (!v) throw icrm::ConfigError("config key '" + key + "': not a number");
    var = *v;
}

void merge(const CLI::Option* opt, const ConfigMap& cfg, const std::string& key,
           std::size_t& var) {
    if (opt->count() != 0 || !cfg.contains(key)) return;
    const auto v = icrm::text::parse_long(cfg.at(key));
    if (!v || *v < 0) throw icrm::ConfigError("config key '" + key + "': not a count");
    var = static_cast<std::size_t>(*v);
}

void merge(const CLI::Option* opt, const ConfigMap& cfg, const std::string& key, bool& var) {
    if (opt->count() != 0 || !cfg.contains(key)) return;
    const std::string& v = cfg.at(key);
    if (v == "1" || v == "true" || v == "on")
        var = true;
    else if (v == "0" || v == "false" || v == "off")
        var = false;
    else
        throw icrm::ConfigError("config key '" + key + "': not a boolean");
}

// flag > config file > ICRM_SEED > built-in default
std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t flag_value,
                           const ConfigMap& cfg) {
    if (opt->count() != 0) return flag_value;
    if (cfg.contains("seed")) {
        const auto v = icrm::text::parse_u64(cfg.at("seed"));
        if (!v) throw icrm::ConfigError("config key 'seed': not an integer");
        return *v;
    }
    if (const char* env = std::getenv("ICRM_SEED")) {
        const auto v = icrm::text::parse_u64(env);
        if (!v) throw icrm::ConfigError("ICRM_SEED: not an integer");
        return *v;
    }
    return flag_value;
}

icrm::SignalRecord load_record(const std::string& path) {
    if (path.ends_with(".csv")) return icrm::load_csv(path);
    return icrm::load_wfdb(path);
}

void save_record(const icrm::SignalRecord& rec, const std::string& path) {
    if (path.ends_with(".csv"))
        icrm::save_csv(rec, path);
    else
        icrm::save_wfdb(rec, path);
}

std::string out_base(const std::string& path) {
    if (path.ends_with(".csv")) return path.substr(0, path.size() - 4);
    if (path.ends_with(".hea") || path.ends_with(".dat")) return path.substr(0, path.size() - 4);
    return path;
}

void write_echo(const std::string& path, const ConfigMap& effective) {
    icrm::write_file(path, icrm::config_echo_text(effective));
}

std::string fmt(double v) { return icrm::text::format_double(v); }

double percentile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(values.size())));
    return values[std::min(values.size() - 1, rank == 0 ? 0 : rank - 1)];
}

icrm::SplitRatios parse_split(const std::string& s) {
    const std::vector<std::string_view> parts = icrm::text::split(s, ',');
    if (parts.size() != 3) throw UsageError("--split wants train,val,test fractions");
    std::array<double, 3> r{};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto v = icrm::text::parse_double(icrm::text::trim(parts[i]));
        if (!v) throw UsageError("--split: '" + std::string(parts[i]) + "' is not a number");
        r[i] = *v;
    }
    return {r[0], r[1], r[2]};
}

double parse_pace(const std::string& s) {
    if (s == "realtime") return 1.0;
    if (s == "fast") return 0.0;
    if (s.size() > 1 && s[0] == 'x') {
        const auto n = icrm::text::parse_double(s.substr(1));
        if (n && *n > 0.0) return 1.0 / *n;
    }
    throw UsageError("--pace wants realtime, fast, or xN (N > 0)");
}

// ---- subcommand argument bags ----------------------------------------------

struct ConvertArgs {
    std::string in, out, config;
};

struct SynthArgs {
    std::string klass = "nsr", out, config;
    double duration = 60.0, rate = 1000.0;
    std::uint64_t seed = 1;
    CLI::Option* seed_opt = nullptr;
};

struct DataArgs { // shared by train/eval dataset selection
    std::string data_dir, labels;
    std::size_t synthetic = 0;
    double duration = 30.0, rate = 1000.0;
    std::uint64_t synth_seed_base = 0;
    std::size_t window = icrm::kDefaultWindowLen;
    std::size_t decimation = icrm::kDefaultDecimation;
};

struct TrainArgs {
    DataArgs data;
    std::string out, config, split = "0.7,0.15,0.15";
    std::size_t hidden = 10, epochs = 1000, patience = 6;
    double lr = 0.05, momentum = 0.9;
    std::uint64_t seed = 1;
    CLI::Option* seed_opt = nullptr;
};

struct EvalArgs {
    DataArgs data;
    std::string model, config;
};

struct ClassifyArgs {
    std::string model, in, config;
    std::size_t lead = 0;
    std::size_t window = icrm::kDefaultWindowLen;
    std::size_t decimation = icrm::kDefaultDecimation;
};

struct SimulateArgs {
    std::string ecg_record, egm_record, model, out, config, pace = "fast";
    std::size_t ecg_lead = 0, egm_lead = 0, samples_per_frame = 64;
    double loss = 0.0, delay = 10.0, jitter = 2.0, threshold = 0.8;
    std::size_t k = 3;
    std::size_t window = icrm::kDefaultWindowLen;
    std::size_t decimation = icrm::kDefaultDecimation;
    bool no_compress = false;
    std::uint64_t seed = 1;
    CLI::Option* seed_opt = nullptr;
};

icrm::LabeledDataset build_dataset(const DataArgs& a) {
    if (a.synthetic > 0)
        return icrm::synthetic_dataset(a.synthetic, a.duration, a.rate, a.synth_seed_base,
                                       a.window, a.decimation);
    if (a.data_dir.empty() || a.labels.empty())
        throw UsageError("need --data and --labels, or --synthetic N");
    return icrm::load_dataset(a.data_dir, icrm::parse_label_map(icrm::read_file_text(a.labels)),
                              a.window, a.decimation);
}

void describe_dataset(ConfigMap& echo, const DataArgs& a) {
    echo["data"] = a.data_dir;
    echo["labels"] = a.labels;
    echo["synthetic"] = std::to_string(a.synthetic);
    echo["duration"] = fmt(a.duration);
    echo["rate"] = fmt(a.rate);
    echo["synth_seed_base"] = std::to_string(a.synth_seed_base);
    echo["window"] = std::to_string(a.window);
    echo["decimation"] = std::to_string(a.decimation);
}

// ---- subcommands ------------------------------------------------------------

int cmd_convert(const ConvertArgs& a) {
    const icrm::SignalRecord rec = load_record(a.in);
    save_record(rec, a.out);
    write_echo(out_base(a.out) + ".config",
               {{"command", "convert"}, {"in", a.in}, {"out", a.out}});
    std::cout << "wrote " << a.out << " (" << rec.header.num_signals << " signals, "
              << rec.header.num_samples << " samples @ " << fmt(rec.header.sampling_rate)
              << " Hz)\n";
    return 0;
}

int cmd_synth(const SynthArgs& a, const ConfigMap& cfg) {
    SynthArgs v = a;
    const std::uint64_t seed = resolve_seed(a.seed_opt, v.seed, cfg);
    const auto label = icrm::label_from_string(v.klass);
    if (!label) throw UsageError("--class wants afb, afl, or nsr");
    const icrm::SignalRecord rec =
        icrm::generate_synthetic(icrm::RhythmSpec::defaults(*label), v.duration, v.rate, seed);
    save_record(rec, v.out);
    write_echo(out_base(v.out) + ".config", {{"command", "synth"},
                                             {"class", v.klass},
                                             {"duration", fmt(v.duration)},
                                             {"rate", fmt(v.rate)},
                                             {"seed", std::to_string(seed)},
                                             {"out", v.out}});
    std::cout << "wrote " << v.out << " (" << rec.header.num_samples << " samples @ "
              << fmt(rec.header.sampling_rate) << " Hz)\n";
    return 0;
}

int cmd_train(const TrainArgs& a, const ConfigMap& cfg) {
    const std::uint64_t seed = resolve_seed(a.seed_opt, a.seed, cfg);

    const icrm::LabeledDataset dataset = build_dataset(a.data);
    const icrm::SplitRatios ratios = parse_split(a.split);
    const icrm::DatasetSplits splits = icrm::split_dataset(dataset, ratios, seed);

    icrm::NetConfig nc;
    nc.layer_sizes = {a.data.window, a.hidden, icrm::kNumClasses};
    nc.learning_rate = a.lr;
    nc.momentum = a.momentum;
    nc.max_epochs = a.epochs;
    nc.patience = a.patience;
    nc.seed = seed;
    auto [net, report] = icrm::train(splits, nc);

    icrm::save_network_file(net, a.out);
    icrm::write_file(a.out + ".train.csv", report.to_csv());

    std::cout << icrm::confusion_text(icrm::evaluate(net, splits.train), "train");
    std::cout << icrm::confusion_text(icrm::evaluate(net, splits.val), "validation");
    const icrm::ConfusionMatrix test_cm = icrm::evaluate(net, splits.test);
    std::cout << icrm::confusion_text(test_cm, "test");
    std::cout << "test_accuracy=" << fmt(test_cm.accuracy()) << "\n";
    std::cout << "epochs_run=" << report.epochs_run() << " best_epoch=" << report.best_epoch
              << " stopped="
              << (report.stop_reason == icrm::StopReason::EarlyStop ? "early" : "max_epochs")
              << "\n";

    ConfigMap echo{{"command", "train"},
                   {"out", a.out},
                   {"split", a.split},
                   {"hidden", std::to_string(a.hidden)},
                   {"lr", fmt(a.lr)},
                   {"momentum", fmt(a.momentum)},
                   {"epochs", std::to_string(a.epochs)},
                   {"patience", std::to_string(a.patience)},
                   {"seed", std::to_string(seed)}};
    describe_dataset(echo, a.data);
    write_echo(a.out + ".config", echo);
    return 0;
}

int cmd_eval(const EvalArgs& a) {
    const icrm::Network net = icrm::load_network_file(a.model);
    const icrm::LabeledDataset dataset = build_dataset(a.data);
    std::cout << icrm::confusion_text(icrm::evaluate(net, dataset), "eval");
    return 0;
}

int cmd_classify(const ClassifyArgs& a) {
    const icrm::Network net = icrm::load_network_file(a.model);
    const icrm::SignalRecord rec = load_record(a.in);
    if (a.lead >= rec.channels.size())
        throw icrm::InvalidCounts("lead " + std::to_string(a.lead) + " out of range (record has " +
                                  std::to_string(rec.channels.size()) + ")");

    const std::vector<std::int16_t> adc = icrm::channel_to_adc(rec, a.lead);
    const std::vector<double> raw(adc.begin(), adc.end());
    const std::vector<double> decimated = icrm::decimate(raw, a.decimation, true);
    const double span_ms = static_cast<double>(a.window * a.decimation) * 1000.0 /
                           rec.header.sampling_rate;

    std::uint64_t w = 0;
    for (const icrm::Segment& seg :
         icrm::segment_signal(decimated, a.window, a.window)) {
        const std::vector<double> norm = icrm::normalize(seg.samples);
        const std::vector<double> probs = icrm::forward(net, norm);
        const std::size_t idx = icrm::predict_index(probs);

        icrm::Decision d;
        d.window_idx = w;
        d.t_start_ms = static_cast<double>(w) * span_ms;
        d.t_end_ms = d.t_start_ms + span_ms;
        d.label = static_cast<icrm::ClassLabel>(idx);
        d.confidence = probs[idx];
        std::copy(probs.begin(), probs.end(), d.probs.begin());
        std::cout << icrm::format_decision_line(d.t_start_ms, rec.header.record_name, d);
        ++w;
    }
    return 0;
}

int cmd_simulate(const SimulateArgs& a, const ConfigMap& cfg) {
    const std::uint64_t seed = resolve_seed(a.seed_opt, a.seed, cfg);

    icrm::SimConfig sc;
    sc.ecg = load_record(a.ecg_record);
    sc.ecg_channel = a.ecg_lead;
    if (!a.egm_record.empty()) {
        sc.egm = load_record(a.egm_record);
        sc.egm_channel = a.egm_lead;
    }
    sc.net = icrm::load_network_file(a.model);
    sc.loss = a.loss;
    sc.delay_ms = a.delay;
    sc.jitter_ms = a.jitter;
    sc.seed = seed;
    sc.compression = !a.no_compress;
    sc.samples_per_frame = a.samples_per_frame;
    sc.policy.k = a.k;
    sc.policy.confidence_threshold = a.threshold;
    sc.window_len = a.window;
    sc.decimation = a.decimation;
    sc.pace_factor = parse_pace(a.pace);

    fs::create_directories(a.out);
    icrm::FileSink sink((fs::path(a.out) / "report.txt").string());
    const icrm::SimulationSummary sum = icrm::run_simulation(sc, sink);

    icrm::write_file((fs::path(a.out) / "actuator_log.txt").string(), sum.actuator_log);
    icrm::write_file((fs::path(a.out) / "metrics.txt").string(), sum.metrics_text());
    write_echo((fs::path(a.out) / "config_echo.txt").string(),
               {{"command", "simulate"},
                {"ecg_record", a.ecg_record},
                {"ecg_lead", std::to_string(a.ecg_lead)},
                {"egm_record", a.egm_record},
                {"egm_lead", std::to_string(a.egm_lead)},
                {"model", a.model},
                {"out", a.out},
                {"loss", fmt(a.loss)},
                {"delay_ms", fmt(a.delay)},
                {"jitter_ms", fmt(a.jitter)},
                {"seed", std::to_string(seed)},
                {"pace", a.pace},
                {"compression", sc.compression ? "1" : "0"},
                {"samples_per_frame", std::to_string(a.samples_per_frame)},
                {"policy_k", std::to_string(a.k)},
                {"policy_threshold", fmt(a.threshold)},
                {"window", std::to_string(a.window)},
                {"decimation", std::to_string(a.decimation)}});

    std::cout << sum.metrics_text();
    // wall-clock figures go to stderr so the determinism contract covers
    // stdout and every file in the output directory
    std::cerr << "latency_windows=" << sum.latency_ms.size()
              << " latency_p50_ms=" << fmt(percentile(sum.latency_ms, 0.50))
              << " latency_p99_ms=" << fmt(percentile(sum.latency_ms, 0.99))
              << " latency_max_ms=" << fmt(percentile(sum.latency_ms, 1.0)) << "\n";
    return 0;
}

int exit_code_for(const icrm::Error& e) {
    const bool data_error =
        dynamic_cast<const icrm::IOFailure*>(&e) || dynamic_cast<const icrm::ParseError*>(&e) ||
        dynamic_cast<const icrm::MalformedHeader*>(&e) ||
        dynamic_cast<const icrm::UnsupportedFormat*>(&e) ||
        dynamic_cast<const icrm::InvalidCounts*>(&e) ||
        dynamic_cast<const icrm::LengthMismatch*>(&e) ||
        dynamic_cast<const icrm::RaggedRows*>(&e) ||
        dynamic_cast<const icrm::NonMonotonicTime*>(&e) ||
        dynamic_cast<const icrm::ConfigError*>(&e) ||
        dynamic_cast<const icrm::ModelFormatError*>(&e) ||
        dynamic_cast<const icrm::ChecksumMismatch*>(&e) ||
        dynamic_cast<const icrm::VersionMismatch*>(&e) ||
        dynamic_cast<const icrm::EmptyDataset*>(&e) ||
        dynamic_cast<const icrm::EmptyTrainSet*>(&e) ||
        dynamic_cast<const icrm::ClassTooSmall*>(&e) ||
        dynamic_cast<const icrm::InvalidRatios*>(&e) ||
        dynamic_cast<const icrm::DimensionMismatch*>(&e) ||
        dynamic_cast<const icrm::MalformedBlock*>(&e) ||
        dynamic_cast<const icrm::EmptySignal*>(&e);
    return data_error ? 2 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"iCRM: cardiac rhythm classification, device emulation and system simulation"};
    app.require_subcommand(1);

    ConvertArgs conv;
    auto* conv_cmd = app.add_subcommand("convert", "convert a record between WFDB and CSV");
    conv_cmd->add_option("--in", conv.in, "input record (.hea/.dat base or .csv)")->required();
    conv_cmd->add_option("--out", conv.out, "output record path")->required();
    conv_cmd->add_option("--config", conv.config, "key=value config file");

    SynthArgs syn;
    auto* syn_cmd = app.add_subcommand("synth", "generate a synthetic rhythm record");
    auto* syn_class = syn_cmd->add_option("--class", syn.klass, "afb | afl | nsr");
    auto* syn_dur = syn_cmd->add_option("--duration", syn.duration, "seconds [60]");
    auto* syn_rate = syn_cmd->add_option("--rate", syn.rate, "sampling rate Hz [1000]");
    syn.seed_opt = syn_cmd->add_option("--seed", syn.seed, "generator seed [1]");
    syn_cmd->add_option("--out", syn.out, "output record path")->required();
    syn_cmd->add_option("--config", syn.config, "key=value config file");

    TrainArgs tr;
    auto* tr_cmd = app.add_subcommand("train", "train the rhythm classifier");
    auto* tr_data = tr_cmd->add_option("--data", tr.data.data_dir, "record directory");
    auto* tr_labels = tr_cmd->add_option("--labels", tr.data.labels,
                                         "label map: record_name,channel,label per line");
    auto* tr_synth =
        tr_cmd->add_option("--synthetic", tr.data.synthetic, "use N synthetic records per class");
    auto* tr_dur = tr_cmd->add_option("--duration", tr.data.duration,
                                      "synthetic record length, seconds [30]");
    auto* tr_rate = tr_cmd->add_option("--rate", tr.data.rate, "synthetic sampling rate [1000]");
    auto* tr_base = tr_cmd->add_option("--synth-seed-base", tr.data.synth_seed_base,
                                       "first synthetic record seed [0]");
    auto* tr_window = tr_cmd->add_option("--window", tr.data.window, "segment length [106]");
    auto* tr_decim = tr_cmd->add_option("--decimation", tr.data.decimation, "decimation [8]");
    auto* tr_hidden = tr_cmd->add_option("--hidden", tr.hidden, "hidden units [10]");
    auto* tr_lr = tr_cmd->add_option("--lr", tr.lr, "learning rate [0.05]");
    auto* tr_mom = tr_cmd->add_option("--momentum", tr.momentum, "momentum [0.9]");
    auto* tr_epochs = tr_cmd->add_option("--epochs", tr.epochs, "max epochs [1000]");
    auto* tr_pat = tr_cmd->add_option("--patience", tr.patience, "early-stop patience [6]");
    auto* tr_split = tr_cmd->add_option("--split", tr.split, "train,val,test [0.7,0.15,0.15]");
    tr.seed_opt = tr_cmd->add_option("--seed", tr.seed, "split/init seed [1]");
    tr_cmd->add_option("--out", tr.out, "model file to write")->required();
    tr_cmd->add_option("--config", tr.config, "key=value config file");

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "evaluate a model on a labeled dataset");
    ev_cmd->add_option("--model", ev.model, "model file")->required();
    auto* ev_data = ev_cmd->add_option("--data", ev.data.data_dir, "record directory");
    auto* ev_labels = ev_cmd->add_option("--labels", ev.data.labels, "label map file");
    auto* ev_synth =
        ev_cmd->add_option("--synthetic", ev.data.synthetic, "use N synthetic records per class");
    auto* ev_dur = ev_cmd->add_option("--duration", ev.data.duration,
                                      "synthetic record length, seconds [30]");
    auto* ev_rate = ev_cmd->add_option("--rate", ev.data.rate, "synthetic sampling rate [1000]");
    auto* ev_base = ev_cmd->add_option("--synth-seed-base", ev.data.synth_seed_base,
                                       "first synthetic record seed [0]");
    auto* ev_window = ev_cmd->add_option("--window", ev.data.window, "segment length [106]");
    auto* ev_decim = ev_cmd->add_option("--decimation", ev.data.decimation, "decimation [8]");
    ev_cmd->add_option("--config", ev.config, "key=value config file");

    ClassifyArgs cl;
    auto* cl_cmd = app.add_subcommand("classify", "classify one record lead window by window");
    cl_cmd->add_option("--model", cl.model, "model file")->required();
    cl_cmd->add_option("--in", cl.in, "record path")->required();
    auto* cl_lead = cl_cmd->add_option("--lead", cl.lead, "channel index [0]");
    auto* cl_window = cl_cmd->add_option("--window", cl.window, "segment length [106]");
    auto* cl_decim = cl_cmd->add_option("--decimation", cl.decimation, "decimation [8]");
    cl_cmd->add_option("--config", cl.config, "key=value config file");

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "run the whole-system emulation");
    sim_cmd->add_option("--ecg-record", sim.ecg_record, "ECG record path")->required();
    auto* sim_egm = sim_cmd->add_option("--egm-record", sim.egm_record, "EGM record path");
    sim_cmd->add_option("--model", sim.model, "model file")->required();
    sim_cmd->add_option("--out", sim.out, "output directory")->required();
    auto* sim_ecg_lead = sim_cmd->add_option("--ecg-lead", sim.ecg_lead, "ECG channel [0]");
    auto* sim_egm_lead = sim_cmd->add_option("--egm-lead", sim.egm_lead, "EGM channel [0]");
    auto* sim_loss = sim_cmd->add_option("--loss", sim.loss, "frame loss probability [0]");
    auto* sim_delay = sim_cmd->add_option("--delay", sim.delay, "link delay ms [10]");
    auto* sim_jitter = sim_cmd->add_option("--jitter", sim.jitter, "link jitter ms [2]");
    sim.seed_opt = sim_cmd->add_option("--seed", sim.seed, "link seed [1]");
    auto* sim_pace = sim_cmd->add_option("--pace", sim.pace, "realtime | fast | xN [fast]");
    auto* sim_nc = sim_cmd->add_flag("--no-compress", sim.no_compress, "send raw payloads");
    auto* sim_spf =
        sim_cmd->add_option("--samples-per-frame", sim.samples_per_frame, "per DATA frame [64]");
    auto* sim_k = sim_cmd->add_option("--policy-k", sim.k, "consecutive windows to act [3]");
    auto* sim_thr =
        sim_cmd->add_option("--policy-threshold", sim.threshold, "confidence threshold [0.8]");
    auto* sim_window = sim_cmd->add_option("--window", sim.window, "segment length [106]");
    auto* sim_decim = sim_cmd->add_option("--decimation", sim.decimation, "decimation [8]");
    sim_cmd->add_option("--config", sim.config, "key=value config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (conv_cmd->parsed()) {
            const ConfigMap cfg = load_config(conv.config);
            // convert has no tunables beyond paths; config accepted for symmetry
            (void)cfg;
            return cmd_convert(conv);
        }
        if (syn_cmd->parsed()) {
            const ConfigMap cfg = load_config(syn.config);
            merge(syn_class, cfg, "class", syn.klass);
            merge(syn_dur, cfg, "duration", syn.duration);
            merge(syn_rate, cfg, "rate", syn.rate);
            return cmd_synth(syn, cfg);
        }
        if (tr_cmd->parsed()) {
            const ConfigMap cfg = load_config(tr.config);
            merge(tr_data, cfg, "data", tr.data.data_dir);
            merge(tr_labels, cfg, "labels", tr.data.labels);
            merge(tr_synth, cfg, "synthetic", tr.data.synthetic);
            merge(tr_dur, cfg, "duration", tr.data.duration);
            merge(tr_rate, cfg, "rate", tr.data.rate);
            merge(tr_base, cfg, "synth_seed_base", tr.data.synth_seed_base);
            merge(tr_window, cfg, "window", tr.data.window);
            merge(tr_decim, cfg, "decimation", tr.data.decimation);
            merge(tr_hidden, cfg, "hidden", tr.hidden);
            merge(tr_lr, cfg, "lr", tr.lr);
            merge(tr_mom, cfg, "momentum", tr.momentum);
            merge(tr_epochs, cfg, "epochs", tr.epochs);
            merge(tr_pat, cfg, "patience", tr.patience);
            merge(tr_split, cfg, "split", tr.split);
            return cmd_train(tr, cfg);
        }
        if (ev_cmd->parsed()) {
            const ConfigMap cfg = load_config(ev.config);
            merge(ev_data, cfg, "data", ev.data.data_dir);
            merge(ev_labels, cfg, "labels", ev.data.labels);
            merge(ev_synth, cfg, "synthetic", ev.data.synthetic);
            merge(ev_dur, cfg, "duration", ev.data.duration);
            merge(ev_rate, cfg, "rate", ev.data.rate);
            merge(ev_base, cfg, "synth_seed_base", ev.data.synth_seed_base);
            merge(ev_window, cfg, "window", ev.data.window);
            merge(ev_decim, cfg, "decimation", ev.data.decimation);
            return cmd_eval(ev);
        }
        if (cl_cmd->parsed()) {
            const ConfigMap cfg = load_config(cl.config);
            merge(cl_lead, cfg, "lead", cl.lead);
            merge(cl_window, cfg, "window", cl.window);
            merge(cl_decim, cfg, "decimation", cl.decimation);
            return cmd_classify(cl);
        }
        if (sim_cmd->parsed()) {
            const ConfigMap cfg = load_config(sim.config);
            merge(sim_egm, cfg, "egm_record", sim.egm_record);
            merge(sim_ecg_lead, cfg, "ecg_lead", sim.ecg_lead);
            merge(sim_egm_lead, cfg, "egm_lead", sim.egm_lead);
            merge(sim_loss, cfg, "loss", sim.loss);
            merge(sim_delay, cfg, "delay_ms", sim.delay);
            merge(sim_jitter, cfg, "jitter_ms", sim.jitter);
            merge(sim_pace, cfg, "pace", sim.pace);
            bool compress_cfg = !sim.no_compress;
            merge(sim_nc, cfg, "compression", compress_cfg);
            sim.no_compress = !compress_cfg;
            merge(sim_spf, cfg, "samples_per_frame", sim.samples_per_frame);
            merge(sim_k, cfg, "policy_k", sim.k);
            merge(sim_thr, cfg, "policy_threshold", sim.threshold);
            merge(sim_window, cfg, "window", sim.window);
            merge(sim_decim, cfg, "decimation", sim.decimation);
            return cmd_simulate(sim, cfg);
        }
        throw UsageError("no subcommand");
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const icrm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
