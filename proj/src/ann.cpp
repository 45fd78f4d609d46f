#include "icrm/ann.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "icrm/checksum.hpp"
#include "icrm/file_io.hpp"
#include "icrm/text.hpp"

namespace icrm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_input(const Network& net, std::span<const double> input) {
    if (input.size() != net.input_dim())
        throw DimensionMismatch("input has " + std::to_string(input.size()) +
                                " samples, network expects " + std::to_string(net.input_dim()));
}

Network init_network_from(Rng& rng, const NetConfig& config) {
    Network net;
    net.layer_sizes = config.layer_sizes;
    net.output_activation = config.output_activation;
    const std::size_t in = config.layer_sizes[0];
    const std::size_t hid = config.layer_sizes[1];
    const std::size_t out = config.layer_sizes[2];

    net.w1 = Matrix(hid, in);
    net.b1.assign(hid, 0.0);
    net.w2 = Matrix(out, hid);
    net.b2.assign(out, 0.0);

    const double r1 = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : net.w1.data) w = rng.uniform(-r1, r1);
    const double r2 = 1.0 / std::sqrt(static_cast<double>(hid));
    for (double& w : net.w2.data) w = rng.uniform(-r2, r2);
    return net;
}

// Mean of per-sample losses; NaN for an empty split.
double dataset_mse(const Network& net, const LabeledDataset& ds) {
    if (ds.empty()) return kNaN;
    double sum = 0.0;
    for (const auto& item : ds.items)
        sum += sample_loss(net, item.segment.samples,
                           target_for(item.label, net.output_dim()));
    return sum / static_cast<double>(ds.size());
}

struct Velocity {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;

    explicit Velocity(const Network& net)
        : w1(net.w1.rows, net.w1.cols),
          b1(net.b1.size(), 0.0),
          w2(net.w2.rows, net.w2.cols),
          b2(net.b2.size(), 0.0) {}
};

void sgd_step(Network& net, Velocity& vel, const Gradients& g, double lr, double momentum) {
    auto update = [lr, momentum](std::vector<double>& w, std::vector<double>& v,
                                 const std::vector<double>& grad) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = momentum * v[i] - lr * grad[i];
            w[i] += v[i];
        }
    };
    update(net.w1.data, vel.w1.data, g.w1.data);
    update(net.b1, vel.b1, g.b1);
    update(net.w2.data, vel.w2.data, g.w2.data);
    update(net.b2, vel.b2, g.b2);
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

void append_f64(std::vector<std::uint8_t>& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) |
           (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

double read_f64(std::span<const std::uint8_t> b, std::size_t off) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(b[off + static_cast<std::size_t>(i)]) << (8 * i);
    return std::bit_cast<double>(bits);
}

constexpr std::uint8_t kModelVersion = 0x01;
constexpr char kModelMagic[4] = {'I', 'C', 'R', 'M'};

} // namespace

void NetConfig::validate() const {
    if (layer_sizes.size() != 3)
        throw DimensionMismatch("layer_sizes must be [input, hidden, output]");
    for (std::size_t s : layer_sizes)
        if (s < 1) throw DimensionMismatch("every layer needs at least one unit");
    if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("momentum must lie in [0, 1)");
    if (max_epochs < 1) throw Error("max_epochs must be at least 1");
}

void LabeledDataset::validate() const {
    if (items.empty()) return;
    const std::size_t dim = items.front().segment.samples.size();
    for (const auto& item : items)
        if (item.segment.samples.size() != dim)
            throw DimensionMismatch("dataset mixes segment lengths " + std::to_string(dim) +
                                    " and " + std::to_string(item.segment.samples.size()));
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
        for (std::uint64_t c : row) t += c;
    return t;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) t += counts[i][i];
    return t;
}

std::string TrainingReport::to_csv() const {
    std::string out = "epoch,train_mse,val_mse,test_mse\n";
    for (std::size_t e = 0; e < train_mse.size(); ++e) {
        out += std::to_string(e);
        out += ',';
        out += text::format_double(train_mse[e]);
        out += ',';
        out += text::format_double(val_mse[e]);
        out += ',';
        out += text::format_double(test_mse[e]);
        out += '\n';
    }
    return out;
}

void Gradients::accumulate(const Gradients& other) {
    auto add = [](std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    add(w1.data, other.w1.data);
    add(b1, other.b1);
    add(w2.data, other.w2.data);
    add(b2, other.b2);
}

Network init_network(const NetConfig& config) {
    config.validate();
    Rng rng(config.seed);
    return init_network_from(rng, config);
}

ForwardTrace forward_trace(const Network& net, std::span<const double> input) {
    check_input(net, input);
    const std::size_t hid = net.hidden_dim();
    const std::size_t out = net.output_dim();

    ForwardTrace trace;
    trace.hidden.resize(hid);
    for (std::size_t j = 0; j < hid; ++j) {
        double z = net.b1[j];
        const double* row = &net.w1.data[j * net.w1.cols];
        for (std::size_t i = 0; i < input.size(); ++i) z += row[i] * input[i];
        trace.hidden[j] = std::tanh(z);
    }

    std::vector<double> z2(out);
    for (std::size_t k = 0; k < out; ++k) {
        double z = net.b2[k];
        const double* row = &net.w2.data[k * net.w2.cols];
        for (std::size_t j = 0; j < hid; ++j) z += row[j] * trace.hidden[j];
        z2[k] = z;
    }

    trace.output.resize(out);
    if (net.output_activation == OutputActivation::Softmax) {
        const double zmax = *std::max_element(z2.begin(), z2.end());
        double denom = 0.0;
        for (std::size_t k = 0; k < out; ++k) {
            trace.output[k] = std::exp(z2[k] - zmax);
            denom += trace.output[k];
        }
        for (double& y : trace.output) y /= denom;
    } else {
        for (std::size_t k = 0; k < out; ++k) trace.output[k] = 1.0 / (1.0 + std::exp(-z2[k]));
    }
    return trace;
}

std::vector<double> forward(const Network& net, std::span<const double> input) {
    return forward_trace(net, input).output;
}

double sample_loss(const Network& net, std::span<const double> input,
                   std::span<const double> target) {
    if (target.size() != net.output_dim())
        throw DimensionMismatch("target length does not match network output");
    const std::vector<double> y = forward(net, input);
    double sum = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double d = y[k] - target[k];
        sum += d * d;
    }
    return sum / static_cast<double>(y.size());
}

Gradients gradient(const Network& net, std::span<const double> input,
                   std::span<const double> target) {
    if (target.size() != net.output_dim())
        throw DimensionMismatch("target length does not match network output");
    const ForwardTrace trace = forward_trace(net, input);
    const std::size_t hid = net.hidden_dim();
    const std::size_t out = net.output_dim();

    // dL/dy for L = (1/K) sum (y - t)^2
    std::vector<double> gy(out);
    for (std::size_t k = 0; k < out; ++k)
        gy[k] = 2.0 * (trace.output[k] - target[k]) / static_cast<double>(out);

    // back through the output nonlinearity to pre-activation gradients dz
    std::vector<double> dz(out);
    if (net.output_activation == OutputActivation::Softmax) {
        // softmax Jacobian: dz_i = y_i * (gy_i - sum_k gy_k y_k)
        double s = 0.0;
        for (std::size_t k = 0; k < out; ++k) s += gy[k] * trace.output[k];
        for (std::size_t k = 0; k < out; ++k) dz[k] = trace.output[k] * (gy[k] - s);
    } else {
        for (std::size_t k = 0; k < out; ++k)
            dz[k] = gy[k] * trace.output[k] * (1.0 - trace.output[k]);
    }

    Gradients g;
    g.w1 = Matrix(hid, input.size());
    g.b1.assign(hid, 0.0);
    g.w2 = Matrix(out, hid);
    g.b2 = dz;
    for (std::size_t k = 0; k < out; ++k)
        for (std::size_t j = 0; j < hid; ++j) g.w2.at(k, j) = dz[k] * trace.hidden[j];

    // back through W2 and tanh
    for (std::size_t j = 0; j < hid; ++j) {
        double da = 0.0;
        for (std::size_t k = 0; k < out; ++k) da += dz[k] * net.w2.at(k, j);
        const double dh = da * (1.0 - trace.hidden[j] * trace.hidden[j]);
        g.b1[j] = dh;
        for (std::size_t i = 0; i < input.size(); ++i) g.w1.at(j, i) = dh * input[i];
    }
    return g;
}

Gradients batch_gradient(const Network& net, std::span<const LabeledSample> batch) {
    Gradients sum;
    sum.w1 = Matrix(net.w1.rows, net.w1.cols);
    sum.b1.assign(net.b1.size(), 0.0);
    sum.w2 = Matrix(net.w2.rows, net.w2.cols);
    sum.b2.assign(net.b2.size(), 0.0);
    for (const auto& item : batch)
        sum.accumulate(gradient(net, item.segment.samples,
                                target_for(item.label, net.output_dim())));
    return sum;
}

std::vector<double> target_for(ClassLabel label, std::size_t output_dim) {
    const auto idx = static_cast<std::size_t>(label);
    if (output_dim == 1) {
        if (idx > 1) throw DimensionMismatch("binary network cannot encode label " +
                                             std::string(to_string(label)));
        return {idx == 0 ? 0.0 : 1.0};
    }
    if (idx >= output_dim)
        throw DimensionMismatch("label index out of range for network output");
    std::vector<double> t(output_dim, 0.0);
    t[idx] = 1.0;
    return t;
}

std::size_t predict_index(std::span<const double> output) {
    if (output.empty()) throw DimensionMismatch("empty output vector");
    if (output.size() == 1) return output[0] >= 0.5 ? 1 : 0;
    std::size_t best = 0;
    for (std::size_t k = 1; k < output.size(); ++k)
        if (output[k] > output[best]) best = k; // strict: ties keep the lowest index
    return best;
}

std::pair<Network, TrainingReport> train(const DatasetSplits& splits, const NetConfig& config) {
    config.validate();
    if (splits.train.empty()) throw EmptyTrainSet("training split is empty");
    for (const LabeledDataset* ds : {&splits.train, &splits.val, &splits.test}) {
        ds->validate();
        if (!ds->empty() && ds->input_dim() != config.layer_sizes[0])
            throw DimensionMismatch("split dimension does not match network input");
    }

    Rng rng(config.seed);
    Network net = init_network_from(rng, config);
    Velocity vel(net);

    TrainingReport report;
    Network best_net = net;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t fails = 0;
    const bool use_early_stop = !splits.val.empty();

    std::vector<std::size_t> order(splits.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t idx : order) {
            const auto& item = splits.train.items[idx];
            const Gradients g = gradient(net, item.segment.samples,
                                         target_for(item.label, net.output_dim()));
            sgd_step(net, vel, g, config.learning_rate, config.momentum);
        }

        const double tr = dataset_mse(net, splits.train);
        const double va = dataset_mse(net, splits.val);
        const double te = dataset_mse(net, splits.test);
        report.train_mse.push_back(tr);
        report.val_mse.push_back(va);
        report.test_mse.push_back(te);
        if (!std::isfinite(tr) || (use_early_stop && !std::isfinite(va)))
            throw NonFiniteLoss("loss diverged at epoch " + std::to_string(epoch) +
                                "; lower the learning rate");

        if (use_early_stop) {
            if (va < best_val) {
                best_val = va;
                best_net = net;
                report.best_epoch = epoch;
                fails = 0;
            } else if (++fails >= config.patience) {
                report.stop_reason = StopReason::EarlyStop;
                return {std::move(best_net), std::move(report)};
            }
        }
    }

    report.stop_reason = StopReason::MaxEpochs;
    if (!use_early_stop) {
        report.best_epoch = report.epochs_run() - 1;
        return {std::move(net), std::move(report)};
    }
    return {std::move(best_net), std::move(report)};
}

DatasetSplits split_dataset(const LabeledDataset& dataset, const SplitRatios& ratios,
                            std::uint64_t seed) {
    if (!(ratios.train > 0.0 && ratios.val > 0.0 && ratios.test > 0.0))
        throw InvalidRatios("all three split ratios must be positive");
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
        throw InvalidRatios("split ratios must sum to 1");
    dataset.validate();
    if (dataset.empty()) throw EmptyDataset("cannot split an empty dataset");

    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        by_class[static_cast<std::size_t>(dataset.items[i].label)].push_back(i);

    DatasetSplits out;
    out.train.provenance = dataset.provenance + " [train]";
    out.val.provenance = dataset.provenance + " [val]";
    out.test.provenance = dataset.provenance + " [test]";

    Rng rng(seed);
    for (auto& group : by_class) {
        if (group.empty()) continue;
        rng.shuffle(group);
        const double n = static_cast<double>(group.size());
        // +1e-9 guards against 0.15*100 rounding down to 14
        const auto n_train = static_cast<std::size_t>(std::floor(n * ratios.train + 1e-9));
        const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.val + 1e-9));
        if (n_train < 1 || n_val < 1 || n_train + n_val + 1 > group.size())
            throw ClassTooSmall("class with " + std::to_string(group.size()) +
                                " samples cannot give every split at least one");
        for (std::size_t i = 0; i < group.size(); ++i) {
            const auto& item = dataset.items[group[i]];
            if (i < n_train)
                out.train.items.push_back(item);
            else if (i < n_train + n_val)
                out.val.items.push_back(item);
            else
                out.test.items.push_back(item);
        }
    }
    return out;
}

ConfusionMatrix evaluate(const Network& net, const LabeledDataset& dataset) {
    if (dataset.empty()) throw EmptyDataset("cannot evaluate an empty dataset");
    if (net.output_dim() != kNumClasses)
        throw DimensionMismatch("evaluation needs a 3-class network");
    dataset.validate();
    ConfusionMatrix cm;
    for (const auto& item : dataset.items) {
        const std::vector<double> y = forward(net, item.segment.samples);
        cm.counts[static_cast<std::size_t>(item.label)][predict_index(y)] += 1;
    }
    return cm;
}

Classification classify(const Network& net, std::span<const double> input) {
    if (net.output_dim() != kNumClasses)
        throw DimensionMismatch("classification needs a 3-class network");
    const std::vector<double> y = forward(net, input);
    const std::size_t idx = predict_index(y);
    return {static_cast<ClassLabel>(idx), y[idx]};
}

std::vector<std::uint8_t> save_network(const Network& net) {
    std::vector<std::uint8_t> out;
    const std::size_t params =
        net.w1.data.size() + net.b1.size() + net.w2.data.size() + net.b2.size();
    out.reserve(10 + 4 * net.layer_sizes.size() + 8 * params + 4);

    for (char c : kModelMagic) out.push_back(static_cast<std::uint8_t>(c));
    out.push_back(kModelVersion);
    out.push_back(static_cast<std::uint8_t>(net.output_activation));
    append_u32(out, static_cast<std::uint32_t>(net.layer_sizes.size()));
    for (std::size_t s : net.layer_sizes) append_u32(out, static_cast<std::uint32_t>(s));

    for (double w : net.w1.data) append_f64(out, w);
    for (double b : net.b1) append_f64(out, b);
    for (double w : net.w2.data) append_f64(out, w);
    for (double b : net.b2) append_f64(out, b);

    append_u32(out, crc32(out));
    return out;
}

Network load_network(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 14) throw ModelFormatError("model header truncated");
    for (std::size_t i = 0; i < 4; ++i)
        if (bytes[i] != static_cast<std::uint8_t>(kModelMagic[i]))
            throw ModelFormatError("not an ICRM model file");

    const std::span<const std::uint8_t> body = bytes.first(bytes.size() - 4);
    const std::uint32_t stored = read_u32(bytes, bytes.size() - 4);
    if (crc32(body) != stored) throw ChecksumMismatch("model checksum mismatch");

    // reached only with a valid checksum, i.e. a genuine other-version file
    if (body[4] != kModelVersion)
        throw VersionMismatch("unsupported model version " + std::to_string(body[4]));
    if (body[5] > 1) throw ModelFormatError("unknown output activation");

    const std::uint32_t n_layers = read_u32(body, 6);
    if (n_layers != 3) throw ModelFormatError("expected exactly one hidden layer");
    if (body.size() < 10 + 4ull * n_layers) throw ModelFormatError("model header truncated");

    std::vector<std::size_t> sizes(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        sizes[i] = read_u32(body, 10 + 4 * i);
        if (sizes[i] < 1) throw ModelFormatError("zero-size layer");
    }

    const std::uint64_t params = static_cast<std::uint64_t>(sizes[0]) * sizes[1] + sizes[1] +
                                 static_cast<std::uint64_t>(sizes[1]) * sizes[2] + sizes[2];
    const std::size_t weights_off = 10 + 4 * static_cast<std::size_t>(n_layers);
    if (body.size() - weights_off != 8 * params)
        throw ModelFormatError("weight payload size does not match layer sizes");

    Network net;
    net.layer_sizes = sizes;
    net.output_activation = static_cast<OutputActivation>(body[5]);
    net.w1 = Matrix(sizes[1], sizes[0]);
    net.b1.resize(sizes[1]);
    net.w2 = Matrix(sizes[2], sizes[1]);
    net.b2.resize(sizes[2]);

    std::size_t off = weights_off;
    auto read_block = [&](std::vector<double>& dst) {
        for (double& v : dst) {
            v = read_f64(body, off);
            off += 8;
            if (!std::isfinite(v)) throw ModelFormatError("non-finite weight in model");
        }
    };
    read_block(net.w1.data);
    read_block(net.b1);
    read_block(net.w2.data);
    read_block(net.b2);
    return net;
}

void save_network_file(const Network& net, const std::string& path) {
    const std::vector<std::uint8_t> bytes = save_network(net);
    write_file(path, bytes);
}

Network load_network_file(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    return load_network(bytes);
}

} // namespace icrm
