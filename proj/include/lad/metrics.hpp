#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lad/datagen.hpp"
#include "lad/model.hpp"
#include "lad/tensor.hpp"

namespace lad {

// Natural log everywhere (losses, entropy, KL); every report records it.

// sum_i p_i ln(p_i / q_i); q clamped at 1e-12; terms with p_i = 0 contribute 0.
Real kl_divergence(const std::vector<Real>& p, const std::vector<Real>& q);

// sqrt(0.5 KL(p||m) + 0.5 KL(q||m)) with m = (p+q)/2; bounded by sqrt(ln 2).
Real jsd(const std::vector<Real>& p, const std::vector<Real>& q);

// -sum p_i ln p_i with 0 ln 0 = 0.
Real entropy(const std::vector<Real>& p);

// Mean |gold_dist[gold_label] - pred[gold_label]| over mispredicted samples.
struct DiffResult {
    Real value = 0.0;
    bool no_mispredictions = false;
};
DiffResult diff_metric(const std::vector<std::vector<Real>>& predictions,
                       const std::vector<std::vector<Real>>& gold_dists,
                       const std::vector<int>& gold_labels);

// Sample Pearson r; throws on n < 2 or zero variance.
Real pearson(const std::vector<Real>& xs, const std::vector<Real>& ys);

struct EvalMode {
    enum class Kind { deterministic, mc, temperature };
    Kind kind = Kind::deterministic;
    int mc_passes = 10;
    Real temperature = 1.0;
    uint64_t mc_seed = 0;

    static EvalMode deterministic_mode() { return {}; }
    static EvalMode mc_mode(int k, uint64_t seed) { return {Kind::mc, k, 1.0, seed}; }
    static EvalMode temperature_mode(Real t) { return {Kind::temperature, 10, t, 0}; }
};

struct MetricsReport {
    std::string method;  // display tag, e.g. "LAD + RC"
    uint64_t seed = 0;
    int64_t sample_count = 0;
    Real mean_jsd = 0.0;
    Real mean_kl = 0.0;   // KL(gold || prediction)
    Real accuracy = 0.0;
    Real diff = 0.0;
    bool diff_no_mispredictions = false;
    Real mean_entropy = 0.0;
    Real fitted_temperature = 0.0;  // 0 = not applicable
    std::string eval_checksum;

    std::string to_text() const;  // flat key = value lines
    static MetricsReport from_text(const std::string& text);
    static std::string csv_header();
    std::string csv_row() const;
};

// Per-sample predictions for an eval split under the selected mode.
std::vector<std::vector<Real>> predict_distributions(LayeredModel& model, const Split& split,
                                                     const EvalMode& mode, int batch_size = 64);

// Aggregates mean KL(gold||pred), mean JSD, accuracy, Diff and mean
// prediction entropy. Pure: model parameters are bitwise unchanged.
MetricsReport evaluate(LayeredModel& model, const Split& eval_split, const EvalMode& mode,
                       int batch_size = 64);

}  // namespace lad
