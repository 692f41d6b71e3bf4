#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "lch/nets.hpp"
#include "lch/rng.hpp"

using namespace lch;

namespace {

Network small_mlp(std::uint64_t seed, int d_in = 2, int hidden = 8, int d_out = 2) {
    return make_network(
        {LayerSpec::affine(d_in, hidden), LayerSpec::relu(), LayerSpec::affine(hidden, hidden), LayerSpec::relu(),
         LayerSpec::affine(hidden, d_out)},
        {static_cast<std::size_t>(d_in)}, seed);
}

Dataset two_clouds(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x({n, 2});
    Tensor y({n});
    for (std::size_t i = 0; i < n; ++i) {
        const bool pos = i % 2 == 0;
        x.at2(i, 0) = (pos ? 1.5 : -1.5) + rng.normal() * 0.2;
        x.at2(i, 1) = rng.normal() * 0.2;
        y[i] = pos ? 1.0 : 0.0;
    }
    return {std::move(x), std::move(y)};
}

}  // namespace

TEST_CASE("forward_span: single relu layer span") {
    Network net = make_network({LayerSpec::affine(2, 2), LayerSpec::relu()}, {2}, 1);
    CHECK(forward_span(net, Tensor::vector({-1, 2}), 2, 2).vec() == std::vector<double>{0, 2});
}

TEST_CASE("forward_span: out-of-range span is an error") {
    Network net = small_mlp(3);
    CHECK_THROWS_AS(forward_span(net, Tensor::vector({0, 0}), 0, 2), ConfigError);
    CHECK_THROWS_AS(forward_span(net, Tensor::vector({0, 0}), 2, 9), ConfigError);
    CHECK_THROWS_AS(forward_span(net, Tensor::vector({0, 0}), 4, 2), ConfigError);
}

TEST_CASE("forward_span: composing spans equals the full span to 0 ulp") {
    Network net = small_mlp(5);
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x({2});
        x[0] = rng.uniform(-2, 2);
        x[1] = rng.uniform(-2, 2);
        for (int k = 1; k < net.num_layers(); ++k) {
            const Tensor mid = forward_span(net, x, 1, k);
            const Tensor composed = forward_span(net, mid, k + 1, net.num_layers());
            CHECK(composed.vec() == forward(net, x).vec());
        }
    }
}

TEST_CASE("forward_span: batch row equals single-sample evaluation bit-exactly") {
    Network net = small_mlp(7);
    Rng rng(19);
    Tensor batch({5, 2});
    for (std::size_t i = 0; i < batch.numel(); ++i) batch[i] = rng.uniform(-1, 1);
    const Tensor out = forward(net, batch);
    for (std::size_t n = 0; n < 5; ++n) {
        Tensor x({2});
        x[0] = batch.at2(n, 0);
        x[1] = batch.at2(n, 1);
        const Tensor single = forward(net, x);
        for (std::size_t j = 0; j < single.numel(); ++j) CHECK(out.at2(n, j) == single[j]);
    }
}

TEST_CASE("ablate: dead neuron (zero outgoing weights) leaves outputs identical") {
    Network net = small_mlp(11);
    // kill the outgoing weights of hidden neuron 3 of the first relu (layer 2)
    Tensor& w2 = *net.layers[2].weight;
    for (std::size_t r = 0; r < w2.dim(0); ++r) w2.at2(r, 3) = 0.0;
    const Network cut = ablate(net, {2, 3});
    Rng rng(23);
    for (int trial = 0; trial < 25; ++trial) {
        const Tensor x = Tensor::vector({rng.uniform(-3, 3), rng.uniform(-3, 3)});
        CHECK(forward(cut, x).vec() == forward(net, x).vec());
    }
}

TEST_CASE("ablate: the ablated neuron's post-activation is exactly 0") {
    Network net = small_mlp(13);
    const Network cut = ablate(net, {4, 5});
    Rng rng(14);
    bool saw_active = false;
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor x = Tensor::vector({rng.uniform(-2, 2), rng.uniform(-2, 2)});
        CHECK(forward_span(cut, x, 1, 4)[5] == 0.0);
        if (forward_span(net, x, 1, 4)[5] != 0.0) saw_active = true;
    }
    CHECK(saw_active);  // the original network is untouched
}

TEST_CASE("ablate: is idempotent") {
    Network net = small_mlp(29);
    const Network once = ablate(net, {2, 1});
    const Network twice = ablate(once, {2, 1});
    CHECK(once.ablations.size() == 1);
    CHECK(twice.ablations.size() == 1);
    CHECK(to_json(once) == to_json(twice));
}

TEST_CASE("ablate: joint ablation is not the sum of single ablations") {
    Network net = small_mlp(31);
    const Tensor x = Tensor::vector({0.9, 0.4});
    const Tensor base = forward(net, x);
    Tensor joint_effect(base.shape());
    Network joint = net;
    const int width = 8;
    Tensor sum_effect(base.shape());
    for (int i = 0; i < width; ++i) {
        const Tensor single = forward(ablate(net, {2, i}), x);
        sum_effect += base - single;
        joint = ablate(joint, {2, i});
    }
    joint_effect = base - forward(joint, x);
    double diff = 0.0;
    for (std::size_t j = 0; j < base.numel(); ++j) diff = std::max(diff, std::abs(joint_effect[j] - sum_effect[j]));
    CHECK(diff > 1e-9);
}

TEST_CASE("ablate: invalid indices are errors") {
    Network net = small_mlp(37);
    CHECK_THROWS_AS(ablate(net, {0, 0}), ConfigError);
    CHECK_THROWS_AS(ablate(net, {2, 99}), ConfigError);
    CHECK_THROWS_AS(ablate(net, {99, 0}), ConfigError);
}

TEST_CASE("train: zero epochs returns the initialization unchanged") {
    Network net = small_mlp(41);
    Dataset data = two_clouds(32, 1);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.loss = LossKind::CrossEntropy;
    const TrainResult r = train(net, data, cfg);
    CHECK(r.epoch_loss.empty());
    CHECK(to_json(r.net) == to_json(net));
}

TEST_CASE("train: bit-reproducible given seed, config, and dataset") {
    Network net = small_mlp(43);
    Dataset data = two_clouds(64, 2);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.loss = LossKind::CrossEntropy;
    cfg.seed = 99;
    const TrainResult a = train(net, data, cfg);
    const TrainResult b = train(net, data, cfg);
    CHECK(to_json(a.net) == to_json(b.net));
    CHECK(a.epoch_loss == b.epoch_loss);
}

TEST_CASE("train: separable 2-cloud task trains to accuracy 1.0 (bce and ce)") {
    Dataset data = two_clouds(128, 3);
    for (LossKind loss : {LossKind::Bce, LossKind::CrossEntropy}) {
        const int d_out = loss == LossKind::Bce ? 1 : 2;
        Network net = small_mlp(47, 2, 8, d_out);
        TrainConfig cfg;
        cfg.epochs = 40;
        cfg.batch_size = 16;
        cfg.loss = loss;
        cfg.seed = 7;
        const TrainResult r = train(net, data, cfg);
        CHECK(accuracy(r.net, data, loss) == 1.0);
        CHECK(r.epoch_loss.back() < r.epoch_loss.front());
    }
}

TEST_CASE("train: divergence raises a numeric error naming the epoch") {
    Network net = small_mlp(53, 2, 8, 1);
    Dataset data = two_clouds(32, 4);
    for (std::size_t i = 0; i < data.targets.numel(); ++i) data.targets[i] *= 1e150;
    TrainConfig cfg;
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.learning_rate = 1e280;
    cfg.epochs = 3;
    cfg.loss = LossKind::Mse;
    try {
        train(net, data, cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("train: mse on targets matches shapes") {
    Network net = small_mlp(59, 2, 8, 2);
    Rng rng(5);
    Tensor x({16, 2}), y({16, 2});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = rng.uniform(-1, 1);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.loss = LossKind::Mse;
    const TrainResult r = train(net, {x, y}, cfg);
    CHECK(r.epoch_loss.size() == 5);
    CHECK(r.epoch_loss.back() < r.epoch_loss.front());
}

TEST_CASE("save/load: byte-identical round trip") {
    Network net = small_mlp(61);
    const std::string p1 = "test_net_a.json", p2 = "test_net_b.json";
    save(net, p1);
    Network loaded = load(p1);
    save(loaded, p2);
    std::ifstream f1(p1), f2(p2);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(!s1.empty());

    // forward on the loaded network matches to 0 ulp
    Rng rng(67);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = Tensor::vector({rng.uniform(-2, 2), rng.uniform(-2, 2)});
        CHECK(forward(loaded, x).vec() == forward(net, x).vec());
    }
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("save/load: truncated file is a malformed-file error") {
    Network net = small_mlp(71);
    const std::string path = "test_net_trunc.json";
    save(net, path);
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::trunc);
    out << text.substr(0, text.size() / 2);
    out.close();
    try {
        load(path);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("malformed") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("save/load: version mismatch is rejected") {
    CHECK_THROWS_AS(network_from_json("{\"format_version\": 999, \"seed\": 0, \"input_dim\": [2], \"layers\": []}"),
                    ConfigError);
}

TEST_CASE("lemma-3.1 witness: zero final layer collapses separated clusters to identical outputs") {
    // Hand-built 3-layer net: layer 1 separates the clusters along x, the
    // final affine layer has all-zero weights.
    Network net = make_network(
        {LayerSpec::affine(2, 4), LayerSpec::relu(), LayerSpec::affine(4, 4), LayerSpec::relu(),
         LayerSpec::affine(4, 2)},
        {2}, 73);
    *net.layers[0].weight = Tensor::matrix(4, 2, {1, 0, -1, 0, 0, 1, 0, -1});
    *net.layers[0].bias = Tensor({4});
    *net.layers[4].weight = Tensor({2, 4});  // all zeros
    *net.layers[4].bias = Tensor({2});

    Rng rng(79);
    std::vector<Tensor> acts1, acts2;
    Tensor out_ref = forward(net, Tensor::vector({1.0, 0.0}));
    for (int i = 0; i < 20; ++i) {
        const Tensor a = Tensor::vector({rng.uniform(0.5, 1.5), rng.uniform(-0.3, 0.3)});
        const Tensor b = Tensor::vector({rng.uniform(-1.5, -0.5), rng.uniform(-0.3, 0.3)});
        acts1.push_back(forward_span(net, a, 1, 2));
        acts2.push_back(forward_span(net, b, 1, 2));
        CHECK(forward(net, a).vec() == out_ref.vec());
        CHECK(forward(net, b).vec() == out_ref.vec());
    }
    // the intermediate activations are linearly separated by coordinate 0 vs 1
    for (const Tensor& h : acts1) CHECK(h[0] - h[1] > 0.1);
    for (const Tensor& h : acts2) CHECK(h[1] - h[0] > 0.1);
}

TEST_CASE("make_network: dimension chaining is validated") {
    CHECK_THROWS_AS(make_network({LayerSpec::affine(2, 4), LayerSpec::affine(3, 2)}, {2}, 1), ConfigError);
    CHECK_THROWS_AS(make_network({LayerSpec::affine(3, 4)}, {2}, 1), ConfigError);
    // conv after flatten is rejected
    CHECK_THROWS_AS(make_network({LayerSpec::flatten(), LayerSpec::conv2d(1, 2, 3, 3)}, {1, 8, 8}, 1), ConfigError);
}

TEST_CASE("network_hash: stable and sensitive to parameters") {
    Network a = small_mlp(83);
    Network b = small_mlp(83);
    CHECK(network_hash(a) == network_hash(b));
    (*b.layers[0].weight)[0] += 1e-9;
    CHECK(network_hash(a) != network_hash(b));
}
