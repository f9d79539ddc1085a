#include "lad/baselines.hpp"

#include <cmath>
#include <stdexcept>

namespace lad {

std::vector<Real> TemperatureGrid::values() const {
    if (min <= 0.0) throw std::invalid_argument("TemperatureGrid: temperatures must be > 0");
    if (step <= 0.0) throw std::invalid_argument("TemperatureGrid: step must be > 0");
    std::vector<Real> out;
    for (Real t = min; t <= max + 1e-12; t += step) out.push_back(t);
    if (out.empty()) throw std::invalid_argument("TemperatureGrid: empty grid");
    return out;
}

void train_ord(LayeredModel& model, const Split& train, const BaselineConfig& cfg, Rng& shuffle_rng,
               std::vector<TrainLogRow>* log) {
    const int c = model.config().num_classes;
    fit_with_targets(
        model, train, [c](const Sample& s) { return one_hot(s.gold_label, c); }, cfg.hyper,
        shuffle_rng, log, "ord");
}

void train_ls(LayeredModel& model, const Split& train, const BaselineConfig& cfg, Rng& shuffle_rng,
              std::vector<TrainLogRow>* log) {
    if (cfg.ls_alpha <= 0.0 || cfg.ls_alpha >= 1.0)
        throw std::invalid_argument("train_ls: alpha must be in (0,1)");
    const int c = model.config().num_classes;
    const Real alpha = cfg.ls_alpha;
    fit_with_targets(
        model, train,
        [c, alpha](const Sample& s) {
            std::vector<Real> t(static_cast<size_t>(c), alpha / static_cast<Real>(c));
            t[static_cast<size_t>(s.gold_label)] += 1.0 - alpha;
            return t;
        },
        cfg.hyper, shuffle_rng, log, "ls");
}

void train_ldl(LayeredModel& model, const Split& train, const BaselineConfig& cfg, Rng& shuffle_rng,
               std::vector<TrainLogRow>* log) {
    if (!train.all_have_distributions())
        throw std::invalid_argument("train_ldl: train split is missing gold distributions");
    fit_with_targets(
        model, train, [](const Sample& s) { return s.gold_distribution; }, cfg.hyper, shuffle_rng,
        log, "ldl");
}

std::vector<std::vector<Real>> predict_mc(LayeredModel& model,
                                          const std::vector<std::vector<int>>& token_batch, int k,
                                          uint64_t seed) {
    if (k < 1) throw std::invalid_argument("predict_mc: k must be >= 1");
    const size_t n = token_batch.size();
    const size_t c = static_cast<size_t>(model.config().num_classes);
    std::vector<std::vector<Real>> acc(n, std::vector<Real>(c, 0.0));
    Rng rng(seed);
    for (int pass = 0; pass < k; ++pass) {
        auto pred = model.predict(token_batch, true, &rng);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < c; ++j) acc[i][j] += pred.dists.back()[i][j];
    }
    for (auto& row : acc)
        for (Real& v : row) v /= static_cast<Real>(k);
    return acc;
}

std::vector<Real> apply_temperature(const std::vector<Real>& logits, Real temperature) {
    if (temperature <= 0.0) throw std::invalid_argument("apply_temperature: T must be > 0");
    std::vector<Real> scaled(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
    return softmax(scaled);
}

TemperatureFit fit_temperature_on_logits(const std::vector<std::vector<Real>>& logits,
                                         const std::vector<std::vector<Real>>& gold_dists,
                                         const TemperatureGrid& grid) {
    if (logits.empty() || logits.size() != gold_dists.size())
        throw std::invalid_argument("fit_temperature: misaligned logits/golds");
    TemperatureFit best;
    bool first = true;
    for (Real t : grid.values()) {
        Real mean_kl = 0.0;
        for (size_t i = 0; i < logits.size(); ++i)
            mean_kl += kl_divergence(gold_dists[i], apply_temperature(logits[i], t));
        mean_kl /= static_cast<Real>(logits.size());
        if (first || mean_kl < best.validation_kl) {
            best.t_star = t;
            best.validation_kl = mean_kl;
            first = false;
        }
    }
    return best;
}

TemperatureFit fit_temperature(LayeredModel& model, const Split& validation,
                               const TemperatureGrid& grid) {
    if (validation.samples.empty())
        throw std::invalid_argument("fit_temperature: empty validation split");
    if (!validation.all_have_distributions())
        throw std::invalid_argument("fit_temperature: validation split is missing gold distributions");
    std::vector<std::vector<Real>> logits;
    std::vector<std::vector<Real>> golds;
    logits.reserve(validation.size());
    golds.reserve(validation.size());
    constexpr size_t kBatch = 64;
    for (size_t start = 0; start < validation.size(); start += kBatch) {
        const size_t stop = std::min(validation.size(), start + kBatch);
        std::vector<std::vector<int>> tokens;
        for (size_t i = start; i < stop; ++i) tokens.push_back(validation.samples[i].tokens);
        auto pred = model.predict(tokens, false);
        for (size_t i = 0; i < tokens.size(); ++i) {
            logits.push_back(std::move(pred.main_logits[i]));
            golds.push_back(validation.samples[start + i].gold_distribution);
        }
    }
    return fit_temperature_on_logits(logits, golds, grid);
}

}  // namespace lad
