#include <doctest.h>

#include <cmath>

#include "lad/datagen.hpp"
#include "lad/metrics.hpp"
#include "lad/model.hpp"

using namespace lad;

namespace {

std::vector<Real> random_simplex(Rng& rng, int c) {
    std::vector<Real> p(static_cast<size_t>(c));
    Real sum = 0.0;
    for (auto& v : p) {
        v = -std::log(1.0 - rng.uniform());
        sum += v;
    }
    for (auto& v : p) v /= sum;
    return p;
}

}  // namespace

TEST_CASE("kl_divergence matches hand computations") {
    CHECK(kl_divergence({0.2, 0.5, 0.3}, {0.2, 0.5, 0.3}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl_divergence({1.0, 0.0}, {0.5, 0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // direct-summation oracle: 0.5 ln 2 + 0.5 ln(2/3)
    const Real expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
    CHECK(kl_divergence({0.5, 0.5}, {0.25, 0.75}) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.1438).epsilon(1e-3));
    CHECK_THROWS(kl_divergence({0.5, 0.5}, {1.0}));
}

TEST_CASE("jsd matches hand computations and is symmetric") {
    CHECK(jsd({0.3, 0.7}, {0.3, 0.7}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(jsd({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(std::sqrt(std::log(2.0))).epsilon(1e-12));
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        auto p = random_simplex(rng, 3);
        auto q = random_simplex(rng, 3);
        CHECK(jsd(p, q) == doctest::Approx(jsd(q, p)).epsilon(1e-12));
        CHECK(jsd(p, q) <= std::sqrt(std::log(2.0)) + 1e-12);
        CHECK(jsd(p, q) >= 0.0);
    }
}

TEST_CASE("entropy matches hand computations") {
    CHECK(entropy({1.0 / 3, 1.0 / 3, 1.0 / 3}) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(entropy({1.0, 0.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(entropy({0.5, 0.25, 0.25}) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("kl is nonnegative and zero only at equality") {
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        auto p = random_simplex(rng, 4);
        auto q = random_simplex(rng, 4);
        CHECK(kl_divergence(p, q) >= 0.0);
        CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-12));
        if (kl_divergence(p, q) < 1e-12) {
            for (size_t j = 0; j < p.size(); ++j) CHECK(p[j] == doctest::Approx(q[j]).epsilon(1e-5));
        }
    }
}

TEST_CASE("diff_metric averages gold-label probability gaps over mispredictions") {
    // all correct -> 0 with flag
    const auto all_correct = diff_metric({{0.9, 0.1}}, {{0.8, 0.2}}, {0});
    CHECK(all_correct.value == 0.0);
    CHECK(all_correct.no_mispredictions);

    // one misprediction: |0.6 - 0.1| = 0.5
    const auto one = diff_metric({{0.1, 0.9}}, {{0.6, 0.4}}, {0});
    CHECK_FALSE(one.no_mispredictions);
    CHECK(one.value == doctest::Approx(0.5).epsilon(1e-12));

    // random case against an independent loop oracle
    Rng rng(3);
    std::vector<std::vector<Real>> preds, golds;
    std::vector<int> labels;
    for (int i = 0; i < 64; ++i) {
        preds.push_back(random_simplex(rng, 3));
        golds.push_back(random_simplex(rng, 3));
        labels.push_back(static_cast<int>(rng.integer(3)));
    }
    Real sum = 0.0;
    int count = 0;
    for (int i = 0; i < 64; ++i) {
        int arg = 0;
        for (int c = 1; c < 3; ++c)
            if (preds[static_cast<size_t>(i)][static_cast<size_t>(c)] >
                preds[static_cast<size_t>(i)][static_cast<size_t>(arg)])
                arg = c;
        if (arg != labels[static_cast<size_t>(i)]) {
            sum += std::fabs(golds[static_cast<size_t>(i)][static_cast<size_t>(labels[static_cast<size_t>(i)])] -
                             preds[static_cast<size_t>(i)][static_cast<size_t>(labels[static_cast<size_t>(i)])]);
            ++count;
        }
    }
    const auto got = diff_metric(preds, golds, labels);
    CHECK(got.value == doctest::Approx(sum / count).epsilon(1e-12));
    CHECK_THROWS(diff_metric({}, {}, {}));
}

TEST_CASE("pearson matches hand computations and validates input") {
    CHECK(pearson({1, 2, 3}, {3, 5, 7}) == doctest::Approx(1.0).epsilon(1e-12));   // y = 2x + 1
    CHECK(pearson({1, 2, 3}, {-1, -2, -3}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pearson({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS(pearson({1}, {2}));
    CHECK_THROWS(pearson({1, 1, 1}, {1, 2, 3}));
    CHECK_THROWS(pearson({1, 2}, {1, 2, 3}));
}

TEST_CASE("evaluate: perfect and uniform predictors against analytic identities") {
    // tiny corpus with known distributions
    CorpusConfig cc;
    cc.vocab_size = 30;
    cc.sequence_length = 6;
    cc.train_size = 4;
    cc.validation_size = 4;
    cc.eval_size = 64;
    cc.seed = 10;
    DatasetBundle bundle = generate_corpus(cc);

    EncoderConfig ec;
    ec.vocab_size = cc.vocab_size;
    ec.max_sequence_length = cc.sequence_length;
    ec.num_layers = 2;
    ec.hidden_dim = 16;
    ec.num_heads = 2;
    ec.ffn_dim = 32;
    ec.dropout_rate = 0.0;
    ec.num_classes = 3;
    ec.seed = 10;
    LayeredModel model(ec);

    // force the main head to output the uniform distribution
    for (Real& v : model.params().value("probe2.w").data) v = 0.0;
    for (Real& v : model.params().value("probe2.b").data) v = 0.0;
    const MetricsReport uniform_report = evaluate(model, bundle.eval, EvalMode::deterministic_mode());
    Real expected_kl = 0.0;
    for (const auto& s : bundle.eval.samples)
        expected_kl += std::log(3.0) - entropy(s.gold_distribution);
    expected_kl /= static_cast<Real>(bundle.eval.size());
    CHECK(uniform_report.mean_kl == doctest::Approx(expected_kl).epsilon(1e-9));
    CHECK(uniform_report.mean_entropy == doctest::Approx(std::log(3.0)).epsilon(1e-9));

    // evaluate is pure: parameters bitwise unchanged
    const uint64_t before = model.params().group_checksum("main-classifier");
    evaluate(model, bundle.eval, EvalMode::deterministic_mode());
    CHECK(model.params().group_checksum("main-classifier") == before);

    // two identical evaluations agree exactly
    const MetricsReport again = evaluate(model, bundle.eval, EvalMode::deterministic_mode());
    CHECK(again.mean_kl == uniform_report.mean_kl);
    CHECK(again.mean_jsd == uniform_report.mean_jsd);
    CHECK(again.accuracy == uniform_report.accuracy);

    // a model outputting the exact gold distributions scores zero distance
    std::vector<std::vector<Real>> exact;
    for (const auto& s : bundle.eval.samples) exact.push_back(s.gold_distribution);
    Real kl_sum = 0.0, jsd_sum = 0.0;
    int64_t correct = 0;
    for (size_t i = 0; i < exact.size(); ++i) {
        kl_sum += kl_divergence(bundle.eval.samples[i].gold_distribution, exact[i]);
        jsd_sum += jsd(bundle.eval.samples[i].gold_distribution, exact[i]);
        if (argmax_lowest(exact[i]) == bundle.eval.samples[i].gold_label) ++correct;
    }
    CHECK(kl_sum == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(jsd_sum == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(correct == static_cast<int64_t>(exact.size()));  // gold label is the argmax by construction
}

TEST_CASE("evaluate requires gold distributions") {
    CorpusConfig cc;
    cc.vocab_size = 30;
    cc.sequence_length = 6;
    cc.train_size = 4;
    cc.validation_size = 4;
    cc.eval_size = 8;
    cc.seed = 11;
    DatasetBundle bundle = generate_corpus(cc);
    for (auto& s : bundle.eval.samples) s.gold_distribution.clear();

    EncoderConfig ec;
    ec.vocab_size = cc.vocab_size;
    ec.max_sequence_length = cc.sequence_length;
    ec.num_layers = 2;
    ec.hidden_dim = 16;
    ec.num_heads = 2;
    ec.ffn_dim = 32;
    ec.num_classes = 3;
    LayeredModel model(ec);
    CHECK_THROWS(evaluate(model, bundle.eval, EvalMode::deterministic_mode()));
}

TEST_CASE("metrics report round-trips through the flat text format") {
    MetricsReport r;
    r.method = "LAD + RC";
    r.seed = 17;
    r.sample_count = 500;
    r.mean_jsd = 0.2823;
    r.mean_kl = 0.33;
    r.accuracy = 0.7272;
    r.diff = 0.4655;
    r.mean_entropy = 0.91;
    r.eval_checksum = "a1b2c3";
    const std::string text = r.to_text();
    CHECK(text.find("log_base = natural") != std::string::npos);
    const MetricsReport back = MetricsReport::from_text(text);
    CHECK(back.method == r.method);
    CHECK(back.seed == r.seed);
    CHECK(back.mean_jsd == doctest::Approx(r.mean_jsd).epsilon(1e-9));
    CHECK(back.mean_kl == doctest::Approx(r.mean_kl).epsilon(1e-9));
    CHECK(back.accuracy == doctest::Approx(r.accuracy).epsilon(1e-9));
    CHECK(back.diff == doctest::Approx(r.diff).epsilon(1e-9));
    CHECK(back.eval_checksum == r.eval_checksum);
}
