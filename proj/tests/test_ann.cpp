#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "icrm/ann.hpp"
#include "icrm/checksum.hpp"
#include "icrm/rng.hpp"

using namespace icrm;

namespace {

Network toy_net() {
    Network net;
    net.layer_sizes = {2, 2, 2};
    net.w1 = Matrix(2, 2);
    net.w1.at(0, 0) = 0.8;
    net.w1.at(0, 1) = -0.3;
    net.w1.at(1, 0) = 0.2;
    net.w1.at(1, 1) = 0.4;
    net.b1 = {0.1, -0.2};
    net.w2 = Matrix(2, 2);
    net.w2.at(0, 0) = 0.5;
    net.w2.at(0, 1) = -0.6;
    net.w2.at(1, 0) = -0.4;
    net.w2.at(1, 1) = 0.7;
    net.b2 = {0.05, -0.05};
    net.output_activation = OutputActivation::Softmax;
    return net;
}

LabeledSample make_sample(std::vector<double> xs, ClassLabel label) {
    LabeledSample s;
    s.segment.samples = std::move(xs);
    s.label = label;
    return s;
}

// Dataset of noisy class prototypes that a small net separates quickly.
LabeledDataset prototype_dataset(std::size_t per_class, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    LabeledDataset ds;
    ds.provenance = "prototype";
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            std::vector<double> xs(dim);
            for (std::size_t d = 0; d < dim; ++d)
                xs[d] = (d % kNumClasses == c ? 1.0 : -0.5) + 0.1 * rng.normal();
            ds.items.push_back(make_sample(std::move(xs), static_cast<ClassLabel>(c)));
        }
    }
    return ds;
}

double max_rel_error(const Gradients& got, const Gradients& want) {
    double worst = 0.0;
    auto cmp = [&worst](const std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
            worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
        }
    };
    cmp(got.w1.data, want.w1.data);
    cmp(got.b1, want.b1);
    cmp(got.w2.data, want.w2.data);
    cmp(got.b2, want.b2);
    return worst;
}

// Central-difference gradient of sample_loss over every parameter.
Gradients numeric_gradient(Network net, std::span<const double> input,
                           std::span<const double> target) {
    const double eps = 1e-6;
    Gradients g;
    g.w1 = Matrix(net.w1.rows, net.w1.cols);
    g.b1.assign(net.b1.size(), 0.0);
    g.w2 = Matrix(net.w2.rows, net.w2.cols);
    g.b2.assign(net.b2.size(), 0.0);
    auto diff = [&](double& param) {
        const double keep = param;
        param = keep + eps;
        const double hi = sample_loss(net, input, target);
        param = keep - eps;
        const double lo = sample_loss(net, input, target);
        param = keep;
        return (hi - lo) / (2.0 * eps);
    };
    for (std::size_t i = 0; i < net.w1.data.size(); ++i) g.w1.data[i] = diff(net.w1.data[i]);
    for (std::size_t i = 0; i < net.b1.size(); ++i) g.b1[i] = diff(net.b1[i]);
    for (std::size_t i = 0; i < net.w2.data.size(); ++i) g.w2.data[i] = diff(net.w2.data[i]);
    for (std::size_t i = 0; i < net.b2.size(); ++i) g.b2[i] = diff(net.b2[i]);
    return g;
}

} // namespace

TEST_CASE("forward pass matches hand-computed values") {
    const Network net = toy_net();
    const std::vector<double> x{0.5, -1.0};

    const ForwardTrace trace = forward_trace(net, x);
    CHECK(trace.hidden[0] == doctest::Approx(0.6640367702678489).epsilon(1e-14));
    CHECK(trace.hidden[1] == doctest::Approx(-0.46211715726000974).epsilon(1e-14));
    CHECK(trace.output[0] == doctest::Approx(0.7855631227087532).epsilon(1e-14));
    CHECK(trace.output[1] == doctest::Approx(0.21443687729124686).epsilon(1e-14));

    const std::vector<double> target{1.0, 0.0};
    CHECK(sample_loss(net, x, target) == doctest::Approx(0.04598317434242126).epsilon(1e-14));
}

TEST_CASE("forward output is a probability distribution") {
    NetConfig cfg;
    cfg.layer_sizes = {8, 5, 3};
    cfg.seed = 11;
    const Network net = init_network(cfg);
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(8);
        for (double& v : x) v = 10.0 * rng.normal();
        const std::vector<double> y = forward(net, x);
        double sum = 0.0;
        for (double p : y) {
            CHECK(p > 0.0);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("forward rejects wrong input length") {
    const Network net = toy_net();
    const std::vector<double> x{1.0, 2.0, 3.0};
    CHECK_THROWS_AS((void)forward(net, x), DimensionMismatch);
}

TEST_CASE("analytic gradient matches finite differences") {
    Rng rng(4242);

    SUBCASE("softmax output") {
        NetConfig cfg;
        cfg.layer_sizes = {7, 5, 3};
        cfg.seed = 21;
        Network net = init_network(cfg);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> x(7);
            for (double& v : x) v = rng.normal();
            std::vector<double> t(3, 0.0);
            t[rng.bounded(3)] = 1.0;
            const Gradients analytic = gradient(net, x, t);
            const Gradients numeric = numeric_gradient(net, x, t);
            CHECK(max_rel_error(analytic, numeric) < 1e-6);
        }
    }

    SUBCASE("sigmoid output") {
        NetConfig cfg;
        cfg.layer_sizes = {4, 3, 1};
        cfg.seed = 22;
        cfg.output_activation = OutputActivation::Sigmoid;
        Network net = init_network(cfg);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> x(4);
            for (double& v : x) v = rng.normal();
            const std::vector<double> t{static_cast<double>(rng.bounded(2))};
            const Gradients analytic = gradient(net, x, t);
            const Gradients numeric = numeric_gradient(net, x, t);
            CHECK(max_rel_error(analytic, numeric) < 1e-6);
        }
    }
}

TEST_CASE("init_network honors the fan-in bound and zero biases") {
    NetConfig cfg;
    cfg.layer_sizes = {16, 9, 3};
    cfg.seed = 5;
    const Network net = init_network(cfg);
    const double r1 = 1.0 / std::sqrt(16.0);
    const double r2 = 1.0 / std::sqrt(9.0);
    for (double w : net.w1.data) CHECK(std::abs(w) <= r1);
    for (double w : net.w2.data) CHECK(std::abs(w) <= r2);
    for (double b : net.b1) CHECK(b == 0.0);
    for (double b : net.b2) CHECK(b == 0.0);

    const Network again = init_network(cfg);
    CHECK(net == again);
    cfg.seed = 6;
    CHECK(init_network(cfg) != net);
}

TEST_CASE("training solves XOR") {
    DatasetSplits splits;
    splits.train.items = {
        make_sample({0.0, 0.0}, ClassLabel::AFB),
        make_sample({0.0, 1.0}, ClassLabel::AFL),
        make_sample({1.0, 0.0}, ClassLabel::AFL),
        make_sample({1.0, 1.0}, ClassLabel::AFB),
    };

    NetConfig cfg;
    cfg.layer_sizes = {2, 4, 1};
    cfg.output_activation = OutputActivation::Sigmoid;
    cfg.learning_rate = 0.5;
    cfg.momentum = 0.9;
    cfg.max_epochs = 2000;
    cfg.seed = 3;

    const auto [net, report] = train(splits, cfg);
    CHECK(report.stop_reason == StopReason::MaxEpochs); // no val split -> no early stop
    CHECK(report.epochs_run() == 2000);
    for (const auto& item : splits.train.items) {
        const auto y = forward(net, item.segment.samples);
        CHECK(predict_index(y) == static_cast<std::size_t>(item.label));
    }
    CHECK(report.train_mse.back() < 0.05);
}

TEST_CASE("training separates prototypes") {
    const LabeledDataset ds = prototype_dataset(40, 9, 77);
    const DatasetSplits splits = split_dataset(ds, SplitRatios{}, 1);

    NetConfig cfg;
    cfg.layer_sizes = {9, 6, 3};
    cfg.seed = 9;
    const auto [net, report] = train(splits, cfg);

    CHECK(evaluate(net, splits.test).accuracy() == doctest::Approx(1.0));
    CHECK(report.best_epoch < report.epochs_run());
    // the snapshot really is the validation minimum over the epochs that ran
    double best = report.val_mse[report.best_epoch];
    for (double v : report.val_mse) CHECK(best <= v + 1e-15);
}

TEST_CASE("validation early stop fires and restores the best snapshot") {
    // train is cleanly separable; val holds a deliberately mislabeled copy of
    // a class-0 prototype, so val MSE worsens as the fit tightens.
    DatasetSplits splits;
    splits.train = prototype_dataset(20, 6, 5);
    Rng rng(6);
    std::vector<double> wolf(6);
    for (std::size_t d = 0; d < 6; ++d) wolf[d] = (d % 3 == 0 ? 1.0 : -0.5);
    splits.val.items = {make_sample(wolf, ClassLabel::AFL)};

    NetConfig cfg;
    cfg.layer_sizes = {6, 4, 3};
    cfg.seed = 8;
    cfg.patience = 4;
    const auto [net, report] = train(splits, cfg);

    CHECK(report.stop_reason == StopReason::EarlyStop);
    CHECK(report.epochs_run() < cfg.max_epochs);
    CHECK(report.best_epoch + cfg.patience + 1 == report.epochs_run());
    const double best = report.val_mse[report.best_epoch];
    for (double v : report.val_mse) CHECK(best <= v + 1e-15);
}

TEST_CASE("training is deterministic") {
    const LabeledDataset ds = prototype_dataset(20, 6, 123);
    const DatasetSplits splits = split_dataset(ds, SplitRatios{}, 2);

    NetConfig cfg;
    cfg.layer_sizes = {6, 4, 3};
    cfg.seed = 31;
    cfg.max_epochs = 40;
    const auto [net_a, rep_a] = train(splits, cfg);
    const auto [net_b, rep_b] = train(splits, cfg);
    CHECK(net_a == net_b);
    CHECK(rep_a.train_mse == rep_b.train_mse);
    CHECK(save_network(net_a) == save_network(net_b));
}

TEST_CASE("train rejects an empty train split and mismatched dims") {
    DatasetSplits splits;
    NetConfig cfg;
    cfg.layer_sizes = {2, 2, 3};
    CHECK_THROWS_AS((void)train(splits, cfg), EmptyTrainSet);

    splits.train.items = {make_sample({1.0, 2.0, 3.0}, ClassLabel::NSR)};
    CHECK_THROWS_AS((void)train(splits, cfg), DimensionMismatch);
}

TEST_CASE("target_for and predict_index") {
    CHECK(target_for(ClassLabel::AFB, 3) == std::vector<double>{1.0, 0.0, 0.0});
    CHECK(target_for(ClassLabel::AFL, 3) == std::vector<double>{0.0, 1.0, 0.0});
    CHECK(target_for(ClassLabel::NSR, 3) == std::vector<double>{0.0, 0.0, 1.0});
    CHECK(target_for(ClassLabel::AFB, 1) == std::vector<double>{0.0});
    CHECK(target_for(ClassLabel::AFL, 1) == std::vector<double>{1.0});
    CHECK_THROWS_AS((void)target_for(ClassLabel::NSR, 1), DimensionMismatch);
    CHECK_THROWS_AS((void)target_for(ClassLabel::NSR, 2), DimensionMismatch);

    const std::vector<double> probs{0.2, 0.5, 0.3};
    CHECK(predict_index(probs) == 1);
    const std::vector<double> tie{0.4, 0.4, 0.2};
    CHECK(predict_index(tie) == 0);
    const std::vector<double> one_hi{0.7};
    CHECK(predict_index(one_hi) == 1);
    const std::vector<double> one_lo{0.3};
    CHECK(predict_index(one_lo) == 0);
}

TEST_CASE("stratified split: sizes, disjointness, determinism") {
    LabeledDataset ds;
    // uneven class sizes: 100 / 40 / 23
    for (int i = 0; i < 100; ++i) ds.items.push_back(make_sample({double(i), 0.0}, ClassLabel::AFB));
    for (int i = 0; i < 40; ++i) ds.items.push_back(make_sample({double(i), 1.0}, ClassLabel::AFL));
    for (int i = 0; i < 23; ++i) ds.items.push_back(make_sample({double(i), 2.0}, ClassLabel::NSR));

    const DatasetSplits sp = split_dataset(ds, SplitRatios{}, 7);

    auto count = [](const LabeledDataset& part, ClassLabel label) {
        return std::count_if(part.items.begin(), part.items.end(),
                             [label](const LabeledSample& s) { return s.label == label; });
    };
    // floor(n*0.7) / floor(n*0.15) / remainder per class
    CHECK(count(sp.train, ClassLabel::AFB) == 70);
    CHECK(count(sp.val, ClassLabel::AFB) == 15);
    CHECK(count(sp.test, ClassLabel::AFB) == 15);
    CHECK(count(sp.train, ClassLabel::AFL) == 28);
    CHECK(count(sp.val, ClassLabel::AFL) == 6);
    CHECK(count(sp.test, ClassLabel::AFL) == 6);
    CHECK(count(sp.train, ClassLabel::NSR) == 16);
    CHECK(count(sp.val, ClassLabel::NSR) == 3);
    CHECK(count(sp.test, ClassLabel::NSR) == 4);
    CHECK(sp.train.size() + sp.val.size() + sp.test.size() == ds.size());

    // disjoint and exhaustive: identify samples by their unique feature pair
    std::set<std::pair<double, double>> seen;
    for (const LabeledDataset* part : {&sp.train, &sp.val, &sp.test})
        for (const auto& item : part->items)
            CHECK(seen.insert({item.segment.samples[0], item.segment.samples[1]}).second);
    CHECK(seen.size() == ds.size());

    const DatasetSplits again = split_dataset(ds, SplitRatios{}, 7);
    CHECK(again.train.items.size() == sp.train.items.size());
    for (std::size_t i = 0; i < sp.train.items.size(); ++i)
        CHECK(again.train.items[i].segment.samples == sp.train.items[i].segment.samples);

    const DatasetSplits other = split_dataset(ds, SplitRatios{}, 8);
    bool any_differs = false;
    for (std::size_t i = 0; i < sp.train.items.size(); ++i)
        if (other.train.items[i].segment.samples != sp.train.items[i].segment.samples)
            any_differs = true;
    CHECK(any_differs);
}

TEST_CASE("split rejects bad ratios and starved classes") {
    LabeledDataset ds = prototype_dataset(10, 4, 1);
    CHECK_THROWS_AS((void)split_dataset(ds, SplitRatios{0.7, 0.2, 0.2}, 1), InvalidRatios);
    CHECK_THROWS_AS((void)split_dataset(ds, SplitRatios{1.0, 0.0, 0.0}, 1), InvalidRatios);
    CHECK_THROWS_AS((void)split_dataset(ds, SplitRatios{-0.5, 0.75, 0.75}, 1), InvalidRatios);

    LabeledDataset empty;
    CHECK_THROWS_AS((void)split_dataset(empty, SplitRatios{}, 1), EmptyDataset);

    LabeledDataset tiny;
    tiny.items = {make_sample({0.0}, ClassLabel::AFB), make_sample({1.0}, ClassLabel::AFB)};
    CHECK_THROWS_AS((void)split_dataset(tiny, SplitRatios{}, 1), ClassTooSmall);
}

TEST_CASE("evaluate fills the confusion matrix row-true column-predicted") {
    const LabeledDataset ds = prototype_dataset(30, 9, 55);
    const DatasetSplits sp = split_dataset(ds, SplitRatios{}, 3);
    NetConfig cfg;
    cfg.layer_sizes = {9, 6, 3};
    cfg.seed = 12;
    const auto [net, report] = train(sp, cfg);
    const ConfusionMatrix cm = evaluate(net, ds);
    CHECK(cm.total() == ds.size());
    CHECK(cm.trace() <= cm.total());
    CHECK(cm.accuracy() > 0.95);

    CHECK_THROWS_AS((void)evaluate(net, LabeledDataset{}), EmptyDataset);
}

TEST_CASE("classify returns the argmax label and its probability") {
    NetConfig cfg;
    cfg.layer_sizes = {4, 3, 3};
    cfg.seed = 44;
    const Network net = init_network(cfg);
    Rng rng(45);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(4);
        for (double& v : x) v = rng.normal();
        const std::vector<double> y = forward(net, x);
        const Classification c = classify(net, x);
        CHECK(static_cast<std::size_t>(c.label) == predict_index(y));
        CHECK(c.confidence == y[predict_index(y)]);
    }
}

TEST_CASE("model serialization roundtrip") {
    NetConfig cfg;
    cfg.layer_sizes = {106, 10, 3};
    cfg.seed = 77;
    const Network net = init_network(cfg);

    const std::vector<std::uint8_t> bytes = save_network(net);
    // 4 magic + 1 version + 1 activation + 4 layer count + 3*4 sizes +
    // (10*106 + 10 + 3*10 + 3) * 8 weights + 4 crc
    CHECK(bytes.size() == 8850);

    const Network back = load_network(bytes);
    CHECK(back == net);
}

TEST_CASE("model loader rejects corruption, truncation, and bad headers") {
    NetConfig cfg;
    cfg.layer_sizes = {5, 4, 3};
    cfg.seed = 1;
    const Network net = init_network(cfg);
    const std::vector<std::uint8_t> bytes = save_network(net);

    SUBCASE("every single-byte flip is caught") {
        int rejected = 0;
        for (std::size_t i = 0; i < bytes.size(); ++i) {
            std::vector<std::uint8_t> bad = bytes;
            bad[i] ^= 0x40;
            try {
                (void)load_network(bad);
            } catch (const Error&) {
                ++rejected;
            }
        }
        CHECK(rejected == static_cast<int>(bytes.size()));
    }

    SUBCASE("typed errors for specific damage") {
        std::vector<std::uint8_t> weights = bytes;
        weights[20] ^= 0x01; // inside the payload
        CHECK_THROWS_AS((void)load_network(weights), ChecksumMismatch);

        std::vector<std::uint8_t> magic = bytes;
        magic[0] = 'X';
        CHECK_THROWS_AS((void)load_network(magic), ModelFormatError);

        // a version bump with a fixed-up checksum is a version error
        std::vector<std::uint8_t> version = bytes;
        version[4] = 0x02;
        const std::uint32_t fixed =
            crc32(std::span<const std::uint8_t>(version).first(version.size() - 4));
        for (int i = 0; i < 4; ++i)
            version[version.size() - 4 + static_cast<std::size_t>(i)] =
                static_cast<std::uint8_t>((fixed >> (8 * i)) & 0xFF);
        CHECK_THROWS_AS((void)load_network(version), VersionMismatch);

        std::vector<std::uint8_t> tiny(bytes.begin(), bytes.begin() + 8);
        CHECK_THROWS_AS((void)load_network(tiny), ModelFormatError);

        std::vector<std::uint8_t> chopped(bytes.begin(), bytes.end() - 9);
        CHECK_THROWS_AS((void)load_network(chopped), Error);
    }
}

TEST_CASE("model file roundtrip") {
    NetConfig cfg;
    cfg.layer_sizes = {6, 3, 3};
    cfg.seed = 19;
    const Network net = init_network(cfg);
    const std::string path = "test_ann_model.bin";
    save_network_file(net, path);
    const Network back = load_network_file(path);
    CHECK(back == net);
    std::remove(path.c_str());
}
