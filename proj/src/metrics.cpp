#include "lad/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "lad/baselines.hpp"

namespace lad {

Real kl_divergence(const std::vector<Real>& p, const std::vector<Real>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
    Real kl = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        kl += p[i] * std::log(p[i] / std::max(q[i], kProbFloor));
    }
    return kl;
}

Real jsd(const std::vector<Real>& p, const std::vector<Real>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("jsd: length mismatch");
    std::vector<Real> m(p.size());
    for (size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
    const Real d = 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m);
    return std::sqrt(std::max<Real>(d, 0.0));
}

Real entropy(const std::vector<Real>& p) {
    Real h = 0.0;
    for (Real v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

DiffResult diff_metric(const std::vector<std::vector<Real>>& predictions,
                       const std::vector<std::vector<Real>>& gold_dists,
                       const std::vector<int>& gold_labels) {
    if (predictions.empty()) throw std::invalid_argument("diff_metric: empty input");
    if (predictions.size() != gold_dists.size() || predictions.size() != gold_labels.size())
        throw std::invalid_argument("diff_metric: misaligned inputs");
    Real sum = 0.0;
    int64_t mispredicted = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        const int gt = gold_labels[i];
        if (argmax_lowest(predictions[i]) == gt) continue;
        ++mispredicted;
        sum += std::fabs(gold_dists[i][static_cast<size_t>(gt)] -
                         predictions[i][static_cast<size_t>(gt)]);
    }
    if (mispredicted == 0) return {0.0, true};
    return {sum / static_cast<Real>(mispredicted), false};
}

Real pearson(const std::vector<Real>& xs, const std::vector<Real>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("pearson: length mismatch");
    const size_t n = xs.size();
    if (n < 2) throw std::invalid_argument("pearson: need at least 2 points");
    Real mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<Real>(n);
    my /= static_cast<Real>(n);
    Real sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const Real dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero variance input");
    return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

std::vector<std::vector<Real>> predict_distributions(LayeredModel& model, const Split& split,
                                                     const EvalMode& mode, int batch_size) {
    std::vector<std::vector<Real>> out;
    out.reserve(split.size());
    Rng mc_rng(mode.mc_seed);
    if (mode.kind == EvalMode::Kind::mc && mode.mc_passes < 1)
        throw std::invalid_argument("predict: mc passes must be >= 1");
    if (mode.kind == EvalMode::Kind::temperature && mode.temperature <= 0.0)
        throw std::invalid_argument("predict: temperature must be > 0");
    for (size_t start = 0; start < split.size(); start += static_cast<size_t>(batch_size)) {
        const size_t stop = std::min(split.size(), start + static_cast<size_t>(batch_size));
        std::vector<std::vector<int>> tokens;
        tokens.reserve(stop - start);
        for (size_t i = start; i < stop; ++i) tokens.push_back(split.samples[i].tokens);
        switch (mode.kind) {
            case EvalMode::Kind::deterministic: {
                auto pred = model.predict(tokens, false);
                for (auto& row : pred.dists.back()) out.push_back(std::move(row));
                break;
            }
            case EvalMode::Kind::temperature: {
                auto pred = model.predict(tokens, false);
                for (auto& z : pred.main_logits) out.push_back(apply_temperature(z, mode.temperature));
                break;
            }
            case EvalMode::Kind::mc: {
                const size_t n = tokens.size();
                const size_t c = static_cast<size_t>(model.config().num_classes);
                std::vector<std::vector<Real>> acc(n, std::vector<Real>(c, 0.0));
                for (int pass = 0; pass < mode.mc_passes; ++pass) {
                    auto pred = model.predict(tokens, true, &mc_rng);
                    for (size_t i = 0; i < n; ++i)
                        for (size_t j = 0; j < c; ++j) acc[i][j] += pred.dists.back()[i][j];
                }
                for (auto& row : acc) {
                    for (Real& v : row) v /= static_cast<Real>(mode.mc_passes);
                    out.push_back(std::move(row));
                }
                break;
            }
        }
    }
    return out;
}

MetricsReport evaluate(LayeredModel& model, const Split& eval_split, const EvalMode& mode,
                       int batch_size) {
    if (eval_split.samples.empty()) throw std::invalid_argument("evaluate: empty split");
    if (!eval_split.all_have_distributions())
        throw std::invalid_argument("evaluate: split is missing gold distributions");
    const auto preds = predict_distributions(model, eval_split, mode, batch_size);

    MetricsReport r;
    r.sample_count = static_cast<int64_t>(eval_split.size());
    std::vector<std::vector<Real>> golds;
    std::vector<int> labels;
    golds.reserve(eval_split.size());
    labels.reserve(eval_split.size());
    int64_t correct = 0;
    for (size_t i = 0; i < eval_split.size(); ++i) {
        const Sample& s = eval_split.samples[i];
        r.mean_kl += kl_divergence(s.gold_distribution, preds[i]);
        r.mean_jsd += jsd(s.gold_distribution, preds[i]);
        r.mean_entropy += entropy(preds[i]);
        if (argmax_lowest(preds[i]) == s.gold_label) ++correct;
        golds.push_back(s.gold_distribution);
        labels.push_back(s.gold_label);
    }
    const Real n = static_cast<Real>(eval_split.size());
    r.mean_kl /= n;
    r.mean_jsd /= n;
    r.mean_entropy /= n;
    r.accuracy = static_cast<Real>(correct) / n;
    const DiffResult d = diff_metric(preds, golds, labels);
    r.diff = d.value;
    r.diff_no_mispredictions = d.no_mispredictions;
    if (mode.kind == EvalMode::Kind::temperature) r.fitted_temperature = mode.temperature;
    return r;
}

// ---------------------------------------------------------------------------
// report serialization
// ---------------------------------------------------------------------------

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    char buf[64];
    auto num = [&](Real v) {
        std::snprintf(buf, sizeof(buf), "%.10f", v);
        return std::string(buf);
    };
    os << "method = " << method << '\n';
    os << "seed = " << seed << '\n';
    os << "log_base = natural\n";
    os << "sample_count = " << sample_count << '\n';
    os << "mean_jsd = " << num(mean_jsd) << '\n';
    os << "mean_kl = " << num(mean_kl) << '\n';
    os << "accuracy = " << num(accuracy) << '\n';
    os << "diff = " << num(diff) << '\n';
    os << "diff_no_mispredictions = " << (diff_no_mispredictions ? 1 : 0) << '\n';
    os << "mean_entropy = " << num(mean_entropy) << '\n';
    if (fitted_temperature > 0.0) os << "fitted_temperature = " << num(fitted_temperature) << '\n';
    if (!eval_checksum.empty()) os << "eval_checksum = " << eval_checksum << '\n';
    return os.str();
}

MetricsReport MetricsReport::from_text(const std::string& text) {
    MetricsReport r;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const size_t eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 3);
        if (key == "method") r.method = val;
        else if (key == "seed") r.seed = std::stoull(val);
        else if (key == "sample_count") r.sample_count = std::stoll(val);
        else if (key == "mean_jsd") r.mean_jsd = std::stod(val);
        else if (key == "mean_kl") r.mean_kl = std::stod(val);
        else if (key == "accuracy") r.accuracy = std::stod(val);
        else if (key == "diff") r.diff = std::stod(val);
        else if (key == "diff_no_mispredictions") r.diff_no_mispredictions = (val == "1");
        else if (key == "mean_entropy") r.mean_entropy = std::stod(val);
        else if (key == "fitted_temperature") r.fitted_temperature = std::stod(val);
        else if (key == "eval_checksum") r.eval_checksum = val;
        else if (key == "log_base") { /* informational */ }
    }
    return r;
}

std::string MetricsReport::csv_header() {
    return "method,seed,sample_count,mean_jsd,mean_kl,accuracy,diff,mean_entropy,fitted_temperature,eval_checksum";
}

std::string MetricsReport::csv_row() const {
    std::ostringstream os;
    char buf[64];
    auto num = [&](Real v) {
        std::snprintf(buf, sizeof(buf), "%.10f", v);
        return std::string(buf);
    };
    os << method << ',' << seed << ',' << sample_count << ',' << num(mean_jsd) << ',' << num(mean_kl)
       << ',' << num(accuracy) << ',' << num(diff) << ',' << num(mean_entropy) << ','
       << (fitted_temperature > 0.0 ? num(fitted_temperature) : "") << ',' << eval_checksum;
    return os.str();
}

}  // namespace lad
