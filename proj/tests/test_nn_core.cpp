#include <doctest.h>

#include <cmath>

#include "lad/graph.hpp"
#include "lad/model.hpp"
#include "lad/optimizer.hpp"
#include "lad/trainer.hpp"

using namespace lad;

namespace {

std::vector<std::vector<int>> random_batch(Rng& rng, int batch, int seq, int vocab) {
    std::vector<std::vector<int>> out(batch, std::vector<int>(seq));
    for (auto& row : out)
        for (int& t : row) t = static_cast<int>(rng.integer(vocab));
    return out;
}

// buildable toy loss: summed per-probe cross-entropy on a fixed batch
Real model_loss_value(LayeredModel& model, const std::vector<std::vector<int>>& batch,
                      const Tensor& targets) {
    Graph g;
    LayerOutputs fwd = model.forward_all_layers(g, batch, false);
    const int tgt = g.leaf(targets, false);
    int loss = g.cross_entropy_mean(fwd.probs[0], tgt);
    for (size_t l = 1; l < fwd.probs.size(); ++l)
        loss = g.add(loss, g.cross_entropy_mean(fwd.probs[l], tgt));
    return g.value(loss).data[0];
}

std::map<std::string, Tensor> model_loss_grads(LayeredModel& model,
                                               const std::vector<std::vector<int>>& batch,
                                               const Tensor& targets) {
    Graph g;
    LayerOutputs fwd = model.forward_all_layers(g, batch, false);
    const int tgt = g.leaf(targets, false);
    int loss = g.cross_entropy_mean(fwd.probs[0], tgt);
    for (size_t l = 1; l < fwd.probs.size(); ++l)
        loss = g.add(loss, g.cross_entropy_mean(fwd.probs[l], tgt));
    g.backward(loss);
    return fwd.trainable_grads_copy(model.params());
}

EncoderConfig tiny_config() {
    EncoderConfig cfg;
    cfg.vocab_size = 30;
    cfg.max_sequence_length = 8;
    cfg.num_layers = 2;
    cfg.hidden_dim = 16;
    cfg.num_heads = 2;
    cfg.ffn_dim = 32;
    cfg.dropout_rate = 0.0;
    cfg.num_classes = 3;
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("softmax matches hand-computed values") {
    auto u = softmax({0.0, 0.0, 0.0});
    CHECK(u[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(u[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));

    auto p = softmax({std::log(1.0), std::log(2.0), std::log(7.0)});
    CHECK(p[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("softmax is shift invariant and stays on the simplex") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Real> z(4), zs(4);
        const Real shift = rng.uniform(-50.0, 50.0);
        for (int i = 0; i < 4; ++i) {
            z[i] = rng.uniform(-10.0, 10.0);
            zs[i] = z[i] + shift;
        }
        auto a = softmax(z);
        auto b = softmax(zs);
        Real sum = 0.0;
        for (int i = 0; i < 4; ++i) {
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
            CHECK(a[i] >= 0.0);
            sum += a[i];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
    // large logits do not overflow
    auto big = softmax({1000.0, 999.0, 0.0});
    CHECK(std::isfinite(big[0]));
    CHECK(big[0] > big[1]);
}

TEST_CASE("softmax rejects non-finite input") {
    CHECK_THROWS(softmax({1.0, std::numeric_limits<Real>::infinity()}));
    CHECK_THROWS(softmax({std::nan(""), 0.0}));
}

TEST_CASE("cross_entropy matches direct summation") {
    CHECK(cross_entropy({1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cross_entropy({0.5, 0.5}, {1.0, 0.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // direct-summation oracle: -(0.5 ln 0.7 + 0.3 ln 0.2 + 0.2 ln 0.1)
    const Real expected = -(0.5 * std::log(0.7) + 0.3 * std::log(0.2) + 0.2 * std::log(0.1));
    CHECK(cross_entropy({0.7, 0.2, 0.1}, {0.5, 0.3, 0.2}) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(1.1217).epsilon(1e-4));
    CHECK_THROWS(cross_entropy({0.5, 0.5}, {1.0, 0.0, 0.0}));
}

TEST_CASE("cross_entropy of a distribution with itself equals its entropy") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Real> p(3);
        Real sum = 0.0;
        for (auto& v : p) {
            v = rng.uniform(0.01, 1.0);
            sum += v;
        }
        for (auto& v : p) v /= sum;
        Real h = 0.0;
        for (Real v : p) h -= v * std::log(v);
        CHECK(cross_entropy(p, p) == doctest::Approx(h).epsilon(1e-9));
    }
}

TEST_CASE("backward: gradient of CE(softmax(z), y) wrt logits is softmax - y") {
    Graph g;
    const int z = g.leaf(Tensor({1, 3}, {0.3, -1.2, 0.8}), true);
    const int p = g.softmax_rows(z);
    const int y = g.leaf(Tensor({1, 3}, {0.0, 1.0, 0.0}), false);
    const int loss = g.cross_entropy_mean(p, y);
    g.backward(loss);
    const auto probs = softmax({0.3, -1.2, 0.8});
    const Tensor& gz = g.grad(z);
    CHECK(gz.data[0] == doctest::Approx(probs[0]).epsilon(1e-9));
    CHECK(gz.data[1] == doctest::Approx(probs[1] - 1.0).epsilon(1e-9));
    CHECK(gz.data[2] == doctest::Approx(probs[2]).epsilon(1e-9));
}

TEST_CASE("backward without a recorded forward is an error") {
    Graph g;
    CHECK_THROWS_AS(g.backward(0), std::logic_error);
    const int c = g.leaf(Tensor({1}, {2.0}), false);
    CHECK_THROWS(g.backward(c));  // no trainable leaf reachable
    CHECK_THROWS(g.backward(99));
}

TEST_CASE("stop_grad cuts gradient flow exactly at the teacher path") {
    EncoderConfig cfg = tiny_config();
    LayeredModel model(cfg);
    Rng rng(5);
    auto batch = random_batch(rng, 4, 6, cfg.vocab_size);
    Tensor y = Tensor::zeros({4, 3});
    for (int i = 0; i < 4; ++i) y.data[static_cast<size_t>(i * 3 + i % 3)] = 1.0;

    // distill-style loss: CE against the stop-gradiented source distribution
    auto loss_and_grads = [&](bool want_grads) {
        Graph g;
        LayerOutputs fwd = model.forward_all_layers(g, batch, false);
        const int teacher = g.stop_grad(fwd.probs[0]);
        const int loss = g.cross_entropy_mean(fwd.main_probs(), teacher);
        if (!want_grads) return std::make_pair(g.value(loss).data[0], std::map<std::string, Tensor>{});
        g.backward(loss);
        return std::make_pair(g.value(loss).data[0], fwd.trainable_grads_copy(model.params()));
    };
    auto [loss0, grads] = loss_and_grads(true);
    CHECK(std::isfinite(loss0));

    // probe-1 parameters feed only the teacher; with stop_grad they get no gradient
    CHECK(grads.find("probe1.w") == grads.end());
    CHECK(grads.find("probe1.b") == grads.end());
    CHECK(grads.count("probe2.w") == 1);

    // finite differences against the loss with the teacher values held fixed:
    // capture the teacher, then perturb a backbone parameter on the student path
    Graph g0;
    LayerOutputs fwd0 = model.forward_all_layers(g0, batch, false);
    const Tensor teacher_vals = g0.value(fwd0.probs[0]);
    auto frozen_teacher_loss = [&]() {
        Graph g;
        LayerOutputs fwd = model.forward_all_layers(g, batch, false);
        const int teacher = g.leaf(teacher_vals, false);
        return g.value(g.cross_entropy_mean(fwd.main_probs(), teacher)).data[0];
    };
    const Real eps = 1e-6;
    for (const auto& name : {std::string("layer2.attn.wq"), std::string("probe2.w"),
                             std::string("embed.token")}) {
        Tensor& w = model.params().value(name);
        const size_t idx = w.data.size() / 2;
        const Real orig = w.data[idx];
        w.data[idx] = orig + eps;
        const Real up = frozen_teacher_loss();
        w.data[idx] = orig - eps;
        const Real down = frozen_teacher_loss();
        w.data[idx] = orig;
        const Real fd = (up - down) / (2 * eps);
        const Real ad = grads.at(name).data[idx];
        CHECK(std::fabs(ad - fd) / std::max<Real>(1e-8, std::fabs(ad) + std::fabs(fd)) < 1e-4);
    }
}

TEST_CASE("grad_check: linear model with quadratic loss is exact to numerical noise") {
    ParameterSet params;
    Rng rng(9);
    Tensor w = Tensor::zeros({4, 2});
    for (auto& v : w.data) v = rng.normal(0, 0.5);
    params.add("w", w, "model");
    Tensor x = Tensor::zeros({3, 4});
    for (auto& v : x.data) v = rng.normal();
    Tensor target = Tensor::zeros({3, 2});
    for (auto& v : target.data) v = rng.normal();

    auto loss_value = [&]() {
        Graph g;
        const int wi = g.leaf(params.value("w"), true);
        const int xi = g.leaf(x, false);
        const int pred = g.matmul(xi, wi);
        const int diff = g.add(pred, g.scale(g.leaf(target, false), -1.0));
        return g.value(g.sum_squares(diff)).data[0];
    };
    std::map<std::string, Tensor> grads;
    {
        Graph g;
        const int wi = g.leaf(params.value("w"), true);
        const int xi = g.leaf(x, false);
        const int pred = g.matmul(xi, wi);
        const int diff = g.add(pred, g.scale(g.leaf(target, false), -1.0));
        const int loss = g.sum_squares(diff);
        g.backward(loss);
        grads.emplace("w", g.grad(wi));
    }
    const auto result = grad_check(params, loss_value, grads, 1e-5);
    CHECK(result.max_rel_error < 1e-7);
}

TEST_CASE("grad_check: two-layer encoder passes central differences") {
    EncoderConfig cfg = tiny_config();
    LayeredModel model(cfg);
    Rng rng(13);
    auto batch = random_batch(rng, 4, 6, cfg.vocab_size);
    Tensor targets = Tensor::zeros({4, 3});
    for (int i = 0; i < 4; ++i) targets.data[static_cast<size_t>(i * 3 + (i + 1) % 3)] = 1.0;

    auto loss_value = [&]() { return model_loss_value(model, batch, targets); };
    const auto grads = model_loss_grads(model, batch, targets);
    const auto result = grad_check(model.params(), loss_value, grads, 1e-5);
    INFO("worst: ", result.worst_param, "[", result.worst_index, "]");
    CHECK(result.max_rel_error < 1e-4);
}

TEST_CASE("grad_check: frozen groups are excluded and epsilon is validated") {
    EncoderConfig cfg = tiny_config();
    LayeredModel model(cfg);
    Rng rng(17);
    auto batch = random_batch(rng, 2, 4, cfg.vocab_size);
    Tensor targets = Tensor::zeros({2, 3});
    targets.data[0] = 1.0;
    targets.data[5] = 1.0;

    model.params().set_group_trainable("probe-1", false);
    auto loss_value = [&]() { return model_loss_value(model, batch, targets); };
    const auto grads = model_loss_grads(model, batch, targets);
    CHECK(grads.find("probe1.w") == grads.end());
    CHECK_NOTHROW(grad_check(model.params(), loss_value, grads, 1e-5));
    CHECK_THROWS(grad_check(model.params(), loss_value, grads, 0.0));
    CHECK_THROWS(grad_check(model.params(), loss_value, grads, -1e-5));
    model.params().set_all_trainable(true);
}

TEST_CASE("adamw single-step oracle") {
    // w=1, g=1, lr=0.1, betas (0.9, 0.999), wd=0:
    // m=0.1, v=0.001, mhat=1, vhat=1 -> w = 1 - 0.1*1/(1+eps)
    ParameterSet params;
    params.add("w", Tensor({1}, {1.0}), "g");
    AdamWConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    Tensor grad({1}, {1.0});
    GradMap grads{{"w", &grad}};
    opt.step(params, grads);
    const Real expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
    CHECK(params.value("w").data[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("adamw decoupled weight decay shrinks weights with zero gradient") {
    ParameterSet params;
    params.add("w", Tensor({1}, {2.0}), "g");
    AdamWConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.1;
    AdamW opt(cfg);
    Tensor grad({1}, {0.0});
    GradMap grads{{"w", &grad}};
    opt.step(params, grads);
    CHECK(params.value("w").data[0] == doctest::Approx(2.0 * 0.99).epsilon(1e-12));

    SUBCASE("zero gradient and zero decay leave parameters unchanged") {
        ParameterSet p2;
        p2.add("w", Tensor({1}, {1.5}), "g");
        AdamWConfig c2;
        c2.learning_rate = 0.1;
        c2.weight_decay = 0.0;
        AdamW o2(c2);
        o2.step(p2, grads);
        CHECK(p2.value("w").data[0] == 1.5);
    }
}

TEST_CASE("adamw: frozen parameters receive no update and moments do not advance") {
    ParameterSet params;
    params.add("a", Tensor({2}, {1.0, -1.0}), "g1");
    params.add("b", Tensor({2}, {0.5, 0.25}), "g2");
    params.set_group_trainable("g2", false);
    AdamW opt(AdamWConfig{});
    Tensor ga({2}, {0.3, -0.2});
    GradMap grads{{"a", &ga}};  // no gradient for frozen b
    const Tensor before = params.value("b");
    for (int i = 0; i < 5; ++i) opt.step(params, grads);
    CHECK(params.value("b").data == before.data);
    CHECK(params.value("a").data[0] != 1.0);

    // unfreezing later starts from fresh moments: the first step is bias-corrected
    params.set_group_trainable("g2", true);
    Tensor gb({2}, {1.0, 1.0});
    grads.emplace("b", &gb);
    CHECK_NOTHROW(opt.step(params, grads));
}

TEST_CASE("adamw errors: missing gradient and shape mismatch") {
    ParameterSet params;
    params.add("w", Tensor({2}, {1.0, 2.0}), "g");
    AdamW opt(AdamWConfig{});
    GradMap empty;
    CHECK_THROWS(opt.step(params, empty));
    Tensor bad({3}, {1.0, 1.0, 1.0});
    GradMap wrong{{"w", &bad}};
    CHECK_THROWS(opt.step(params, wrong));
}

TEST_CASE("linear learning-rate schedule decays to zero over total steps") {
    AdamWConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.total_steps = 4;
    AdamW opt(cfg);
    ParameterSet params;
    params.add("w", Tensor({1}, {1.0}), "g");
    Tensor grad({1}, {1.0});
    GradMap grads{{"w", &grad}};
    std::vector<Real> lrs;
    for (int i = 0; i < 5; ++i) {
        lrs.push_back(opt.scheduled_lr());
        opt.step(params, grads);
    }
    CHECK(lrs[0] == doctest::Approx(0.1));
    CHECK(lrs[1] == doctest::Approx(0.075));
    CHECK(lrs[3] == doctest::Approx(0.025));
    CHECK(lrs[4] == doctest::Approx(0.0));
}

TEST_CASE("snapshot and restore are bit-exact") {
    EncoderConfig cfg = tiny_config();
    LayeredModel model(cfg);
    Rng rng(23);
    auto batch = random_batch(rng, 4, 6, cfg.vocab_size);
    Tensor targets = Tensor::zeros({4, 3});
    for (int i = 0; i < 4; ++i) targets.data[static_cast<size_t>(i * 3)] = 1.0;

    const WeightSnapshot snap = model.params().snapshot();
    Graph g0;
    const Tensor logits_before = g0.value(model.forward_all_layers(g0, batch, false).main_logits());

    // train 3 steps
    AdamW opt(AdamWConfig{});
    for (int step = 0; step < 3; ++step) {
        Graph g;
        LayerOutputs fwd = model.forward_all_layers(g, batch, false);
        const int tgt = g.leaf(targets, false);
        const int loss = g.cross_entropy_mean(fwd.main_probs(), tgt);
        g.backward(loss);
        opt.step(model.params(), fwd.trainable_grads(model.params()));
    }
    Graph g1;
    CHECK(g1.value(model.forward_all_layers(g1, batch, false).main_logits()).data != logits_before.data);

    model.params().restore(snap);
    for (const auto& [name, tensor] : snap.tensors)
        CHECK(model.params().value(name).data == tensor.data);
    Graph g2;
    CHECK(g2.value(model.forward_all_layers(g2, batch, false).main_logits()).data == logits_before.data);

    // double restore is idempotent
    model.params().restore(snap);
    Graph g3;
    CHECK(g3.value(model.forward_all_layers(g3, batch, false).main_logits()).data == logits_before.data);
}

TEST_CASE("restore rejects structural mismatch") {
    EncoderConfig cfg = tiny_config();
    LayeredModel model(cfg);
    WeightSnapshot snap = model.params().snapshot();
    snap.tensors.pop_back();
    CHECK_THROWS(model.params().restore(snap));

    WeightSnapshot bad = model.params().snapshot();
    bad.tensors[0].second = Tensor::zeros({1, 1});
    CHECK_THROWS(model.params().restore(bad));
}

TEST_CASE("determinism: identical seed and config give bitwise-identical training") {
    auto run = [](uint64_t seed) {
        EncoderConfig cfg = tiny_config();
        cfg.seed = seed;
        LayeredModel model(cfg);
        Rng data_rng(99);
        auto batch = random_batch(data_rng, 4, 6, cfg.vocab_size);
        Tensor targets = Tensor::zeros({4, 3});
        for (int i = 0; i < 4; ++i) targets.data[static_cast<size_t>(i * 3 + i % 3)] = 1.0;
        AdamW opt(AdamWConfig{});
        for (int step = 0; step < 5; ++step) {
            Graph g;
            LayerOutputs fwd = model.forward_all_layers(g, batch, true);
            const int tgt = g.leaf(targets, false);
            const int loss = g.cross_entropy_mean(fwd.main_probs(), tgt);
            g.backward(loss);
            opt.step(model.params(), fwd.trainable_grads(model.params()));
        }
        std::vector<Real> flat;
        for (const auto& name : model.params().names()) {
            const auto& d = model.params().value(name).data;
            flat.insert(flat.end(), d.begin(), d.end());
        }
        return flat;
    };
    CHECK(run(42) == run(42));
    CHECK(run(42) != run(43));
}

TEST_CASE("per-op gradients pass finite differences") {
    Rng rng(31);
    auto fill = [&](Tensor& t, Real scale) {
        for (auto& v : t.data) v = rng.normal(0.0, scale);
    };

    // each op wrapped in a scalar loss; FD over one input tensor
    auto check_op = [&](const std::function<int(Graph&, int)>& build, Tensor input) {
        ParameterSet params;
        params.add("x", input, "g");
        auto loss_value = [&]() {
            Graph g;
            const int xi = g.leaf(params.value("x"), true);
            return g.value(build(g, xi)).data[0];
        };
        std::map<std::string, Tensor> grads;
        {
            Graph g;
            const int xi = g.leaf(params.value("x"), true);
            const int loss = build(g, xi);
            g.backward(loss);
            grads.emplace("x", g.grad(xi));
        }
        return grad_check(params, loss_value, grads, 1e-5).max_rel_error;
    };

    Tensor x34 = Tensor::zeros({3, 4});
    fill(x34, 1.0);
    Tensor w = Tensor::zeros({4, 2});
    fill(w, 0.5);
    Tensor b = Tensor::zeros({2});
    fill(b, 0.1);

    CHECK(check_op([&](Graph& g, int xi) { return g.sum_squares(g.gelu(xi)); }, x34) < 1e-4);
    CHECK(check_op([&](Graph& g, int xi) {
              return g.sum_squares(g.linear(xi, g.leaf(w, false), g.leaf(b, false)));
          },
                   x34) < 1e-4);
    CHECK(check_op([&](Graph& g, int xi) { return g.sum_squares(g.softmax_rows(xi)); }, x34) < 1e-4);
    CHECK(check_op([&](Graph& g, int xi) { return g.sum_squares(g.normalize_rows(xi)); }, x34) < 1e-4);

    Tensor gain = Tensor::full({4}, 1.0);
    Tensor bias = Tensor::zeros({4});
    fill(bias, 0.05);
    CHECK(check_op([&](Graph& g, int xi) {
              return g.sum_squares(g.layer_norm(xi, g.leaf(gain, false), g.leaf(bias, false)));
          },
                   x34) < 1e-4);

    Tensor x_seq = Tensor::zeros({2, 3, 4});  // [B,T,H] for attention / pooling
    fill(x_seq, 1.0);
    CHECK(check_op([&](Graph& g, int xi) { return g.sum_squares(g.attention(xi, xi, xi, 2, 2, 3)); },
                   x_seq) < 1e-4);
    CHECK(check_op([&](Graph& g, int xi) { return g.sum_squares(g.mean_tokens(xi, 2, 3)); }, x_seq) <
          1e-4);
    CHECK(check_op([&](Graph& g, int xi) { return g.sum_squares(g.first_token(xi, 2, 3)); }, x_seq) <
          1e-4);

    // dropout with a replayed mask
    CHECK(check_op(
              [&](Graph& g, int xi) {
                  Rng mask_rng(77);
                  return g.sum_squares(g.dropout(xi, 0.3, true, mask_rng));
              },
              x34) < 1e-4);

    // matmul wrt both operands
    {
        ParameterSet params;
        params.add("a", x34, "g");
        params.add("b", w, "g");
        auto loss_value = [&]() {
            Graph g;
            const int ai = g.leaf(params.value("a"), true);
            const int bi = g.leaf(params.value("b"), true);
            return g.value(g.sum_squares(g.matmul(ai, bi))).data[0];
        };
        std::map<std::string, Tensor> grads;
        {
            Graph g;
            const int ai = g.leaf(params.value("a"), true);
            const int bi = g.leaf(params.value("b"), true);
            const int loss = g.sum_squares(g.matmul(ai, bi));
            g.backward(loss);
            grads.emplace("a", g.grad(ai));
            grads.emplace("b", g.grad(bi));
        }
        CHECK(grad_check(params, loss_value, grads, 1e-5).max_rel_error < 1e-4);
    }
}

TEST_CASE("parameter groups partition the model and freeze exactly") {
    EncoderConfig cfg = tiny_config();
    LayeredModel model(cfg);
    // every parameter belongs to exactly one group
    int64_t total = 0;
    for (const auto& grp : model.params().groups())
        for (const auto& name : model.params().names_in_group(grp))
            total += model.params().value(name).numel();
    CHECK(total == model.params().scalar_count());

    model.params().set_group_trainable("probe-1", false);
    for (const auto& name : model.params().names_in_group("probe-1"))
        CHECK_FALSE(model.params().trainable(name));
    for (const auto& name : model.params().names_in_group("main-classifier"))
        CHECK(model.params().trainable(name));
    CHECK_THROWS(model.params().set_group_trainable("no-such-group", true));
}
