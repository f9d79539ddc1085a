#include <doctest.h>

#include <cmath>

#include "lad/model.hpp"
#include "lad/trainer.hpp"

using namespace lad;

namespace {

EncoderConfig small_config() {
    EncoderConfig cfg;
    cfg.vocab_size = 40;
    cfg.max_sequence_length = 10;
    cfg.num_layers = 3;
    cfg.hidden_dim = 16;
    cfg.num_heads = 2;
    cfg.ffn_dim = 32;
    cfg.dropout_rate = 0.1;
    cfg.num_classes = 3;
    cfg.seed = 5;
    return cfg;
}

std::vector<std::vector<int>> random_batch(Rng& rng, int batch, int seq, int vocab) {
    std::vector<std::vector<int>> out(batch, std::vector<int>(seq));
    for (auto& row : out)
        for (int& t : row) t = static_cast<int>(rng.integer(vocab));
    return out;
}

std::vector<Real> flat_params(const ParameterSet& params) {
    std::vector<Real> flat;
    for (const auto& name : params.names()) {
        const auto& d = params.value(name).data;
        flat.insert(flat.end(), d.begin(), d.end());
    }
    return flat;
}

}  // namespace

TEST_CASE("build_model: same seed gives bitwise-identical parameters") {
    EncoderConfig cfg = small_config();
    LayeredModel a(cfg);
    LayeredModel b(cfg);
    CHECK(flat_params(a.params()) == flat_params(b.params()));
    cfg.seed = 6;
    LayeredModel c(cfg);
    CHECK(flat_params(a.params()) != flat_params(c.params()));
}

TEST_CASE("build_model: structure follows the config") {
    EncoderConfig cfg;
    cfg.seed = 1;
    cfg.num_classes = 3;
    LayeredModel model(cfg);  // defaults: 6 layers, hidden 64, 4 heads
    CHECK(cfg.hidden_dim / cfg.num_heads == 16);

    // exactly 6 probes, each mapping 64 -> 3; probe 6 is the main classifier
    for (int i = 1; i <= 6; ++i) {
        const std::string w = "probe" + std::to_string(i) + ".w";
        REQUIRE(model.params().has(w));
        CHECK(model.params().value(w).shape == std::vector<int64_t>{64, 3});
        CHECK(model.params().group(w) == (i == 6 ? "main-classifier" : "probe-" + std::to_string(i)));
    }
    CHECK(model.params().names_in_group("main-classifier").size() == 2);
}

TEST_CASE("build_model rejects invalid dimensions") {
    EncoderConfig cfg = small_config();
    cfg.hidden_dim = 15;  // not divisible by heads
    CHECK_THROWS(LayeredModel(cfg));
    cfg = small_config();
    cfg.num_layers = 1;  // source selection needs a layer before the top
    CHECK_THROWS(LayeredModel(cfg));
    cfg = small_config();
    cfg.dropout_rate = 1.0;
    CHECK_THROWS(LayeredModel(cfg));
}

TEST_CASE("forward_all_layers: shapes, simplex outputs and determinism") {
    EncoderConfig cfg = small_config();
    LayeredModel model(cfg);
    Rng rng(2);
    auto batch = random_batch(rng, 5, 8, cfg.vocab_size);

    Graph g;
    LayerOutputs fwd = model.forward_all_layers(g, batch, false);
    REQUIRE(static_cast<int>(fwd.probs.size()) == cfg.num_layers);
    for (int l = 0; l < cfg.num_layers; ++l) {
        const Tensor& p = g.value(fwd.probs[static_cast<size_t>(l)]);
        REQUIRE(p.shape == std::vector<int64_t>{5, 3});
        for (int64_t r = 0; r < 5; ++r) {
            Real sum = 0.0;
            for (int64_t c = 0; c < 3; ++c) {
                const Real v = p.data[static_cast<size_t>(r * 3 + c)];
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(std::fabs(sum - 1.0) < 1e-6);
        }
    }

    Graph g2;
    LayerOutputs fwd2 = model.forward_all_layers(g2, batch, false);
    CHECK(g.value(fwd.main_logits()).data == g2.value(fwd2.main_logits()).data);
}

TEST_CASE("forward rejects bad inputs") {
    EncoderConfig cfg = small_config();
    LayeredModel model(cfg);
    Graph g0;
    CHECK_THROWS(model.forward_all_layers(g0, {}, false));
    Graph g;
    std::vector<std::vector<int>> too_long(1, std::vector<int>(cfg.max_sequence_length + 1, 0));
    CHECK_THROWS(model.forward_all_layers(g, too_long, false));
    Graph g2;
    std::vector<std::vector<int>> bad_token(1, std::vector<int>(4, cfg.vocab_size));
    CHECK_THROWS(model.forward_all_layers(g2, bad_token, false));
    Graph g3;
    std::vector<std::vector<int>> ragged{{1, 2, 3}, {1, 2}};
    CHECK_THROWS(model.forward_all_layers(g3, ragged, false));
}

TEST_CASE("untrained model predicts roughly uniform on average") {
    EncoderConfig cfg = small_config();
    cfg.seed = 77;
    LayeredModel model(cfg);
    Rng rng(8);
    auto batch = random_batch(rng, 256, 8, cfg.vocab_size);
    auto pred = model.predict(batch, false);
    std::vector<Real> mean(3, 0.0);
    for (const auto& row : pred.dists.back())
        for (int c = 0; c < 3; ++c) mean[static_cast<size_t>(c)] += row[static_cast<size_t>(c)];
    for (Real& v : mean) v /= 256.0;
    for (int c = 0; c < 3; ++c) CHECK(std::fabs(mean[static_cast<size_t>(c)] - 1.0 / 3) < 0.1);
}

TEST_CASE("probe i depends only on layers 1..i") {
    EncoderConfig cfg = small_config();
    cfg.dropout_rate = 0.0;
    LayeredModel model(cfg);
    Rng rng(3);
    auto batch = random_batch(rng, 3, 8, cfg.vocab_size);

    Graph g;
    LayerOutputs fwd = model.forward_all_layers(g, batch, false);
    const Tensor probe2_before = g.value(fwd.probs[1]);

    // zero out everything above layer 2
    for (const auto& grp : {std::string("backbone-layer-3"), std::string("probe-2"),
                            std::string("main-classifier")}) {
        if (grp == "probe-2") continue;
        for (const auto& name : model.params().names_in_group(grp))
            for (Real& v : model.params().value(name).data) v = 0.0;
    }
    Graph g2;
    LayerOutputs fwd2 = model.forward_all_layers(g2, batch, false);
    CHECK(g2.value(fwd2.probs[1]).data == probe2_before.data);
}

TEST_CASE("freezing backbone and main classifier trains exactly one probe") {
    EncoderConfig cfg = small_config();
    LayeredModel model(cfg);
    Rng rng(4);
    auto batch = random_batch(rng, 4, 8, cfg.vocab_size);
    Tensor targets = Tensor::zeros({4, 3});
    for (int i = 0; i < 4; ++i) targets.data[static_cast<size_t>(i * 3 + i % 3)] = 1.0;

    // freeze backbone-layer-1..L and main-classifier, train only probe 2
    for (int i = 1; i <= cfg.num_layers; ++i)
        model.params().set_group_trainable("backbone-layer-" + std::to_string(i), false);
    model.params().set_group_trainable("main-classifier", false);
    model.params().set_group_trainable("probe-1", false);

    std::map<std::string, uint64_t> before;
    for (const auto& grp : model.params().groups()) before[grp] = model.params().group_checksum(grp);

    AdamW opt(AdamWConfig{});
    for (int step = 0; step < 3; ++step) {
        Graph g;
        LayerOutputs fwd = model.forward_all_layers(g, batch, true);
        const int tgt = g.leaf(targets, false);
        const int loss = g.cross_entropy_mean(fwd.probs[1], tgt);
        g.backward(loss);
        opt.step(model.params(), fwd.trainable_grads(model.params()));
    }
    for (const auto& grp : model.params().groups()) {
        if (grp == "probe-2")
            CHECK(model.params().group_checksum(grp) != before[grp]);
        else
            CHECK(model.params().group_checksum(grp) == before[grp]);
    }
    model.params().set_all_trainable(true);
}

TEST_CASE("layer_norm output has zero mean and unit variance before the affine rescale") {
    Graph g;
    Rng rng(6);
    Tensor x = Tensor::zeros({7, 16});
    for (auto& v : x.data) v = rng.normal(2.0, 3.0);
    Tensor gain = Tensor::full({16}, 1.7);
    Tensor bias = Tensor::full({16}, -0.4);
    const int y = g.layer_norm(g.leaf(x, false), g.leaf(gain, false), g.leaf(bias, false));
    const Tensor& out = g.value(y);
    for (int64_t r = 0; r < 7; ++r) {
        Real mean = 0.0, var = 0.0;
        for (int64_t c = 0; c < 16; ++c) {
            const Real normed = (out.data[static_cast<size_t>(r * 16 + c)] + 0.4) / 1.7;
            mean += normed;
            var += normed * normed;
        }
        mean /= 16.0;
        var = var / 16.0 - mean * mean;
        CHECK(std::fabs(mean) < 1e-5);
        CHECK(std::fabs(var - 1.0) < 2e-2);  // biased variance with eps in the denominator
    }
}

TEST_CASE("checkpointed weights restore to the initialization snapshot") {
    EncoderConfig cfg = small_config();
    LayeredModel model(cfg);
    const auto init = flat_params(model.params());
    for (Real& v : model.params().value("probe1.w").data) v += 0.5;
    CHECK(flat_params(model.params()) != init);
    model.restore_initial();
    CHECK(flat_params(model.params()) == init);
}
