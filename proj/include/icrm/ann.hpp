#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "icrm/class_label.hpp"
#include "icrm/dsp.hpp"
#include "icrm/errors.hpp"
#include "icrm/rng.hpp"

namespace icrm {

struct DimensionMismatch : Error { using Error::Error; };
struct EmptyTrainSet : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct InvalidRatios : Error { using Error::Error; };
struct ClassTooSmall : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct ChecksumMismatch : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };
struct ModelFormatError : Error { using Error::Error; };

// Row-major dense matrix; just enough linear algebra for a 3-layer net.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool operator==(const Matrix&) const = default;
};

// The output nonlinearity is softmax for the 3-class task; a plain sigmoid
// variant exists for binary sanity problems (XOR).
enum class OutputActivation : std::uint8_t {
    Softmax = 0,
    Sigmoid = 1,
};

struct NetConfig {
    // [input, hidden, output]; exactly one hidden layer.
    std::vector<std::size_t> layer_sizes{kDefaultWindowLen, 10, kNumClasses};
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::size_t max_epochs = 1000;
    std::size_t patience = 6;
    std::uint64_t seed = 0;
    OutputActivation output_activation = OutputActivation::Softmax;

    void validate() const;
};

struct Network {
    std::vector<std::size_t> layer_sizes; // [input, hidden, output]
    Matrix w1;                            // hidden x input
    std::vector<double> b1;               // hidden
    Matrix w2;                            // output x hidden
    std::vector<double> b2;               // output
    OutputActivation output_activation = OutputActivation::Softmax;

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t hidden_dim() const { return layer_sizes[1]; }
    std::size_t output_dim() const { return layer_sizes.back(); }

    bool operator==(const Network&) const = default;
};

struct LabeledSample {
    Segment segment;
    ClassLabel label = ClassLabel::NSR;
};

struct LabeledDataset {
    std::vector<LabeledSample> items;
    std::string provenance; // free-form origin note (record ids, generator, ...)

    bool empty() const { return items.empty(); }
    std::size_t size() const { return items.size(); }
    std::size_t input_dim() const { return items.empty() ? 0 : items.front().segment.samples.size(); }
    void validate() const; // all segments share input_dim
};

struct DatasetSplits {
    LabeledDataset train;
    LabeledDataset val;
    LabeledDataset test;
};

struct SplitRatios {
    double train = 0.7;
    double val = 0.15;
    double test = 0.15;
};

// Rows are the true class, columns the predicted class.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

    std::uint64_t total() const;
    std::uint64_t trace() const;
    double accuracy() const { return total() == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(total()); }
};

enum class StopReason : std::uint8_t {
    MaxEpochs = 0,
    EarlyStop = 1,
};

struct TrainingReport {
    // One entry per epoch run; epoch i of training produced entry i.
    std::vector<double> train_mse;
    std::vector<double> val_mse;  // NaN entries when the split is empty
    std::vector<double> test_mse; // NaN entries when the split is empty
    StopReason stop_reason = StopReason::MaxEpochs;
    std::size_t best_epoch = 0; // index into the series (validation minimum)

    std::size_t epochs_run() const { return train_mse.size(); }
    // "epoch,train_mse,val_mse,test_mse" rows, epoch numbered from 0.
    std::string to_csv() const;
};

// Per-parameter gradient of the per-sample MSE loss, same shapes as Network.
struct Gradients {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;

    void accumulate(const Gradients& other);
};

// Weights i.i.d. uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)] drawn from a
// generator seeded with config.seed; biases zero.
Network init_network(const NetConfig& config);

// hidden = tanh(W1 x + b1); output = softmax(W2 hidden + b2) (or per-unit
// sigmoid for the binary variant).
std::vector<double> forward(const Network& net, std::span<const double> input);

struct ForwardTrace {
    std::vector<double> hidden;
    std::vector<double> output;
};
ForwardTrace forward_trace(const Network& net, std::span<const double> input);

// Per-sample loss: mean over output units of (y - t)^2.
double sample_loss(const Network& net, std::span<const double> input,
                   std::span<const double> target);

Gradients gradient(const Network& net, std::span<const double> input,
                   std::span<const double> target);

// Sum (not mean) of per-sample gradients, so it is exactly linear in the batch.
Gradients batch_gradient(const Network& net, std::span<const LabeledSample> batch);

// One-hot target for the label; a 1-output net gets the scalar class index
// (0 or 1) instead.
std::vector<double> target_for(ClassLabel label, std::size_t output_dim);

// Argmax with ties broken toward the lowest index. A 1-output vector is
// thresholded at 0.5.
std::size_t predict_index(std::span<const double> output);

// Per-sample stochastic gradient descent with momentum over shuffled epochs;
// early-stops after `patience` epochs without a new validation minimum and
// returns the network snapshot from the best validation epoch. With an empty
// validation split early stopping is disabled and the final network is
// returned.
std::pair<Network, TrainingReport> train(const DatasetSplits& splits, const NetConfig& config);

// Stratified split: per class, shuffle then cut floor(n*train) / floor(n*val)
// / remainder. Every class present must land at least one sample in each part.
DatasetSplits split_dataset(const LabeledDataset& dataset, const SplitRatios& ratios,
                            std::uint64_t seed);

ConfusionMatrix evaluate(const Network& net, const LabeledDataset& dataset);

struct Classification {
    ClassLabel label = ClassLabel::NSR;
    double confidence = 0.0; // max output probability
};
Classification classify(const Network& net, std::span<const double> input);

// Model container: magic "ICRM", version byte, output-activation byte,
// layer count and sizes (u32 LE), weights then biases per layer as f64 LE,
// CRC-32 of everything prior appended LE.
std::vector<std::uint8_t> save_network(const Network& net);
Network load_network(std::span<const std::uint8_t> bytes);

void save_network_file(const Network& net, const std::string& path);
Network load_network_file(const std::string& path);

} // namespace icrm
