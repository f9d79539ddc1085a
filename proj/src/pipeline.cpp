#include "lad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace lad {

void WarmupConfig::validate() const {
    if (max_warmup_epochs < 1) throw std::invalid_argument("WarmupConfig: max_warmup_epochs must be >= 1");
    if (ambiguous_fraction <= 0.0 || ambiguous_fraction >= 1.0)
        throw std::invalid_argument("WarmupConfig: ambiguous_fraction must be in (0,1)");
    if (batch_size < 1) throw std::invalid_argument("WarmupConfig: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("WarmupConfig: learning_rate must be > 0");
}

void DistillConfig::validate() const {
    if (lambda <= 0.0 || lambda >= 1.0) throw std::invalid_argument("DistillConfig: lambda must be in (0,1)");
    if (epochs < 0) throw std::invalid_argument("DistillConfig: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("DistillConfig: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("DistillConfig: learning_rate must be > 0");
    if (source_lr_scale <= 0.0) throw std::invalid_argument("DistillConfig: source_lr_scale must be > 0");
    if (recalibration_epochs != 1)
        throw std::invalid_argument("DistillConfig: recalibration is a single epoch");
    if (recalibration_lr_scale <= 0.0)
        throw std::invalid_argument("DistillConfig: recalibration_lr_scale must be > 0");
}

int select_source_layer(const std::vector<Real>& entropies) {
    if (entropies.size() < 2)
        throw std::invalid_argument("select_source_layer: need at least 2 layers");
    int best = 1;
    Real best_drop = entropies[0] - entropies[1];
    for (size_t i = 1; i + 1 < entropies.size(); ++i) {
        const Real drop = entropies[i] - entropies[i + 1];
        if (drop > best_drop) {
            best_drop = drop;
            best = static_cast<int>(i) + 1;
        }
    }
    return best;
}

Real compute_la(const std::vector<Real>& gt_confidences, int source_idx) {
    const int layers = static_cast<int>(gt_confidences.size());
    if (source_idx < 1 || source_idx > layers)
        throw std::out_of_range("compute_la: source_idx out of range");
    Real sum = 0.0;
    for (int i = source_idx; i <= layers; ++i) {
        const Real c = gt_confidences[static_cast<size_t>(i - 1)];
        if (c < -1e-9 || c > 1.0 + 1e-9)
            throw std::invalid_argument("compute_la: confidence outside [0,1]");
        sum += c;
    }
    return sum / static_cast<Real>(layers - source_idx + 1);
}

std::vector<int64_t> extract_ambiguous(const std::vector<std::pair<int64_t, Real>>& la_scores,
                                       Real m) {
    if (la_scores.empty()) throw std::invalid_argument("extract_ambiguous: empty score map");
    const auto n = static_cast<Real>(la_scores.size());
    const auto count = static_cast<size_t>(std::llround(m * n));
    if (count == 0) throw std::invalid_argument("extract_ambiguous: m*N rounds to zero samples");
    std::vector<std::pair<int64_t, Real>> sorted = la_scores;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    std::vector<int64_t> ids;
    ids.reserve(count);
    for (size_t i = 0; i < count && i < sorted.size(); ++i) ids.push_back(sorted[i].first);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<Real> validation_entropy_profile(LayeredModel& model, const Split& split,
                                             int batch_size) {
    const int layers = model.config().num_layers;
    std::vector<Real> sums(static_cast<size_t>(layers), 0.0);
    for (size_t start = 0; start < split.size(); start += static_cast<size_t>(batch_size)) {
        const size_t stop = std::min(split.size(), start + static_cast<size_t>(batch_size));
        std::vector<std::vector<int>> tokens;
        for (size_t i = start; i < stop; ++i) tokens.push_back(split.samples[i].tokens);
        auto pred = model.predict(tokens, false);
        for (int l = 0; l < layers; ++l)
            for (const auto& row : pred.dists[static_cast<size_t>(l)])
                sums[static_cast<size_t>(l)] += entropy(row);
    }
    for (Real& v : sums) v /= static_cast<Real>(split.size());
    return sums;
}

namespace {

// Per-layer gold-label confidence sweep over the training set.
AmbiguityRecord ambiguity_sweep(LayeredModel& model, const Split& train, int source_idx, Real m) {
    AmbiguityRecord record;
    const int layers = model.config().num_layers;
    constexpr size_t kBatch = 64;
    for (size_t start = 0; start < train.size(); start += kBatch) {
        const size_t stop = std::min(train.size(), start + kBatch);
        std::vector<std::vector<int>> tokens;
        for (size_t i = start; i < stop; ++i) tokens.push_back(train.samples[i].tokens);
        auto pred = model.predict(tokens, false);
        for (size_t i = start; i < stop; ++i) {
            const Sample& s = train.samples[i];
            std::vector<Real> conf(static_cast<size_t>(layers));
            for (int l = 0; l < layers; ++l)
                conf[static_cast<size_t>(l)] =
                    pred.dists[static_cast<size_t>(l)][i - start][static_cast<size_t>(s.gold_label)];
            record.ids.push_back(s.id);
            record.la.push_back(compute_la(conf, source_idx));
        }
    }
    std::vector<std::pair<int64_t, Real>> scores;
    scores.reserve(record.ids.size());
    for (size_t i = 0; i < record.ids.size(); ++i) scores.emplace_back(record.ids[i], record.la[i]);
    record.ambiguous_ids = extract_ambiguous(scores, m);
    return record;
}

}  // namespace

WarmupResult warmup_train(LayeredModel& model, const Split& train, const Split& validation,
                          const WarmupConfig& cfg, const OptimizerHyper& hyper, Rng& shuffle_rng,
                          std::vector<TrainLogRow>* log, const BatchObserver& observer) {
    cfg.validate();
    if (train.samples.empty() || validation.samples.empty())
        throw std::invalid_argument("warmup_train: empty split");

    model.params().set_all_trainable(true);
    if (cfg.freeze_backbone)
        for (const auto& grp : model.main_network_groups())
            if (grp != LayeredModel::kMainClassifierGroup)
                model.params().set_group_trainable(grp, false);

    const int64_t batches_per_epoch =
        static_cast<int64_t>((train.size() + static_cast<size_t>(cfg.batch_size) - 1) /
                             static_cast<size_t>(cfg.batch_size));
    AdamW opt(make_adamw_config(cfg.learning_rate, hyper,
                                batches_per_epoch * cfg.max_warmup_epochs));
    const int c = model.config().num_classes;
    const int layers = model.config().num_layers;

    WarmupResult result;
    for (int epoch = 1; epoch <= cfg.max_warmup_epochs; ++epoch) {
        Real epoch_loss = 0.0;
        int batch_index = 0;
        for (const auto& batch : epoch_batches(train.size(), cfg.batch_size, shuffle_rng)) {
            std::vector<std::vector<int>> tokens;
            Tensor targets = Tensor::zeros({static_cast<int64_t>(batch.size()), c});
            for (size_t i = 0; i < batch.size(); ++i) {
                const Sample& s = train.samples[batch[i]];
                tokens.push_back(s.tokens);
                targets.data[i * static_cast<size_t>(c) + static_cast<size_t>(s.gold_label)] = 1.0;
            }
            Graph g;
            LayerOutputs fwd = model.forward_all_layers(g, tokens, true);
            const int target_node = g.leaf(std::move(targets), false);
            int loss = g.cross_entropy_mean(fwd.probs[0], target_node);
            for (int l = 1; l < layers; ++l)
                loss = g.add(loss, g.cross_entropy_mean(fwd.probs[static_cast<size_t>(l)], target_node));
            g.backward(loss);
            opt.step(model.params(), fwd.trainable_grads(model.params()));
            epoch_loss += g.value(loss).data[0];
            if (observer) observer(BatchEvent{"warmup", epoch, batch_index}, model);
            ++batch_index;
        }
        if (log)
            log->push_back({"warmup", epoch, epoch_loss / static_cast<Real>(batches_per_epoch), 0.0});

        const std::vector<Real> profile = validation_entropy_profile(model, validation);
        const int selected = select_source_layer(profile);
        result.profile.mean_entropy.push_back(profile);
        result.profile.selected_source.push_back(selected);
        if (epoch >= 2 && selected == result.profile.selected_source[static_cast<size_t>(epoch) - 2]) {
            result.selection = {selected, epoch, true};
            break;
        }
        result.selection = {selected, epoch, false};
    }
    // a non-stabilized selection keeps the last epoch's choice; callers see
    // stabilized=false and report the warning
    result.ambiguity = ambiguity_sweep(model, train, result.selection.source_idx,
                                       cfg.ambiguous_fraction);
    return result;
}

void reset_to_initial(LayeredModel& model) { model.restore_initial(); }

namespace {

int blended_ce_loss(Graph& g, int pred_probs, int hard_target, int soft_target, Real lambda) {
    const int hard = g.cross_entropy_mean(pred_probs, hard_target);
    const int soft = g.cross_entropy_mean(pred_probs, soft_target);
    return g.add(g.scale(hard, lambda), g.scale(soft, 1.0 - lambda));
}

Tensor one_hot_rows(const std::vector<int>& labels, int num_classes) {
    Tensor t = Tensor::zeros({static_cast<int64_t>(labels.size()), num_classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw std::invalid_argument("one_hot_rows: label out of range");
        t.data[i * static_cast<size_t>(num_classes) + static_cast<size_t>(labels[i])] = 1.0;
    }
    return t;
}

}  // namespace

std::pair<Real, Real> distill_batch(LayeredModel& model, const std::vector<std::vector<int>>& tokens,
                                    const std::vector<int>& labels, Real lambda, int source_idx,
                                    AdamW& opt_main, AdamW& opt_src, const BatchObserver& observer,
                                    int epoch, int batch_index) {
    const int layers = model.config().num_layers;
    if (source_idx >= layers)
        throw std::invalid_argument("distill_batch: source layer must be below the main classifier");
    if (source_idx < 1) throw std::out_of_range("distill_batch: source_idx out of range");
    if (tokens.size() != labels.size()) throw std::invalid_argument("distill_batch: batch misaligned");
    const int c = model.config().num_classes;
    ParameterSet& params = model.params();
    const std::string src_group = model.probe_group(source_idx);

    // step 1: train the main network; the source probe is excluded
    set_trainable_main_network(model, true);
    freeze_all_probes(model);
    Real loss_main;
    {
        Graph g;
        LayerOutputs fwd = model.forward_all_layers(g, tokens, true);
        const int y = g.leaf(one_hot_rows(labels, c), false);
        const int src_teacher = g.stop_grad(fwd.probs[static_cast<size_t>(source_idx - 1)]);
        const int loss = blended_ce_loss(g, fwd.main_probs(), y, src_teacher, lambda);
        g.backward(loss);
        opt_main.step(params, fwd.trainable_grads(params));
        loss_main = g.value(loss).data[0];
    }
    if (observer) observer(BatchEvent{"lad-step1", epoch, batch_index}, model);

    // step 2: freeze the main network, train only the source probe
    set_trainable_main_network(model, false);
    params.set_group_trainable(src_group, true);
    Real loss_src;
    {
        Graph g;
        LayerOutputs fwd = model.forward_all_layers(g, tokens, true);
        const int y = g.leaf(one_hot_rows(labels, c), false);
        const int main_teacher = g.stop_grad(fwd.main_probs());
        const int loss =
            blended_ce_loss(g, fwd.probs[static_cast<size_t>(source_idx - 1)], y, main_teacher, lambda);
        g.backward(loss);
        opt_src.step(params, fwd.trainable_grads(params));
        loss_src = g.value(loss).data[0];
    }
    if (observer) observer(BatchEvent{"lad-step2", epoch, batch_index}, model);

    // leave the usual LAD state: main network trainable, probes frozen
    set_trainable_main_network(model, true);
    params.set_group_trainable(src_group, false);
    return {loss_main, loss_src};
}

void train_lad(LayeredModel& model, const Split& train, const DistillConfig& cfg,
               const OptimizerHyper& hyper, int source_idx, Rng& shuffle_rng,
               std::vector<TrainLogRow>* log, const BatchObserver& observer) {
    cfg.validate();
    if (train.samples.empty()) throw std::invalid_argument("train_lad: empty train split");
    const int64_t batches_per_epoch =
        static_cast<int64_t>((train.size() + static_cast<size_t>(cfg.batch_size) - 1) /
                             static_cast<size_t>(cfg.batch_size));
    const int64_t total = batches_per_epoch * cfg.epochs;
    AdamW opt_main(make_adamw_config(cfg.learning_rate, hyper, total));
    AdamW opt_src(make_adamw_config(cfg.learning_rate * cfg.source_lr_scale, hyper, total));

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Real sum_main = 0.0, sum_src = 0.0;
        int batch_index = 0;
        for (const auto& batch : epoch_batches(train.size(), cfg.batch_size, shuffle_rng)) {
            std::vector<std::vector<int>> tokens;
            std::vector<int> labels;
            for (size_t idx : batch) {
                tokens.push_back(train.samples[idx].tokens);
                labels.push_back(train.samples[idx].gold_label);
            }
            const auto [lm, ls] = distill_batch(model, tokens, labels, cfg.lambda, source_idx,
                                                opt_main, opt_src, observer, epoch, batch_index);
            sum_main += lm;
            sum_src += ls;
            ++batch_index;
        }
        if (log)
            log->push_back({"lad", epoch, sum_main / static_cast<Real>(batches_per_epoch),
                            sum_src / static_cast<Real>(batches_per_epoch)});
    }
}

void recalibrate(LayeredModel& model, const std::vector<const Sample*>& ambiguous, int batch_size,
                 Real learning_rate, const OptimizerHyper& hyper, Rng& shuffle_rng,
                 std::vector<TrainLogRow>* log, const BatchObserver& observer) {
    if (ambiguous.empty()) throw std::invalid_argument("recalibrate: empty ambiguous subset");
    if (batch_size < 1) throw std::invalid_argument("recalibrate: batch_size must be >= 1");
    const int c = model.config().num_classes;
    set_trainable_main_network(model, true);
    freeze_all_probes(model);
    AdamW opt(make_adamw_config(learning_rate, hyper, 0));  // constant LR for the single epoch

    Real epoch_loss = 0.0;
    int batch_index = 0;
    const auto batches = epoch_batches(ambiguous.size(), batch_size, shuffle_rng);
    for (const auto& batch : batches) {
        std::vector<std::vector<int>> tokens;
        std::vector<int> labels;
        for (size_t idx : batch) {
            tokens.push_back(ambiguous[idx]->tokens);
            labels.push_back(ambiguous[idx]->gold_label);
        }
        Graph g;
        LayerOutputs fwd = model.forward_all_layers(g, tokens, true);
        const int y = g.leaf(one_hot_rows(labels, c), false);
        const int uniform = g.leaf(
            Tensor::full({static_cast<int64_t>(batch.size()), c}, 1.0 / static_cast<Real>(c)), false);
        const int loss = blended_ce_loss(g, fwd.main_probs(), y, uniform, 0.5);
        g.backward(loss);
        opt.step(model.params(), fwd.trainable_grads(model.params()));
        epoch_loss += g.value(loss).data[0];
        if (observer) observer(BatchEvent{"recalibrate", 1, batch_index}, model);
        ++batch_index;
    }
    if (log) log->push_back({"recalibrate", 1, epoch_loss / static_cast<Real>(batches.size()), 0.0});
}

namespace {

Real mean_main_entropy(LayeredModel& model, const std::vector<const Sample*>& samples) {
    if (samples.empty()) return 0.0;
    Real sum = 0.0;
    constexpr size_t kBatch = 64;
    for (size_t start = 0; start < samples.size(); start += kBatch) {
        const size_t stop = std::min(samples.size(), start + kBatch);
        std::vector<std::vector<int>> tokens;
        for (size_t i = start; i < stop; ++i) tokens.push_back(samples[i]->tokens);
        auto pred = model.predict(tokens, false);
        for (const auto& row : pred.dists.back()) sum += entropy(row);
    }
    return sum / static_cast<Real>(samples.size());
}

}  // namespace

PipelineResult run_pipeline(const DatasetBundle& bundle, const PipelineRunConfig& cfg,
                            const BatchObserver& observer, std::ostream* progress) {
    cfg.warmup.validate();
    cfg.distill.validate();
    if (bundle.train.samples.empty() || bundle.validation.samples.empty() ||
        bundle.eval.samples.empty())
        throw std::runtime_error("run_pipeline: train/validation/eval splits must all be present");

    EncoderConfig enc = cfg.encoder;
    enc.seed = cfg.seed;
    PipelineResult result{LayeredModel(enc)};
    LayeredModel& model = result.model;
    Rng shuffle_rng(cfg.seed ^ 0x7f4a7c15ull);

    if (progress) *progress << "[warmup] training (max " << cfg.warmup.max_warmup_epochs << " epochs)\n";
    WarmupResult warm = warmup_train(model, bundle.train, bundle.validation, cfg.warmup,
                                     cfg.optimizer, shuffle_rng, &result.train_log, observer);
    result.selection = warm.selection;
    result.profile = warm.profile;
    result.ambiguity = warm.ambiguity;
    result.warmup_weights = model.params().snapshot();
    if (progress) {
        *progress << "[warmup] source layer " << result.selection.source_idx << ", E = "
                  << result.selection.warmup_epochs
                  << (result.selection.stabilized ? "" : " (warning: selection did not stabilize)")
                  << ", ambiguous set " << result.ambiguity.ambiguous_ids.size() << " samples\n";
    }

    reset_to_initial(model);
    if (observer) observer(BatchEvent{"reset", 0, 0}, model);

    if (progress) *progress << "[lad] two-step distillation (" << cfg.distill.epochs << " epochs)\n";
    train_lad(model, bundle.train, cfg.distill, cfg.optimizer, result.selection.source_idx,
              shuffle_rng, &result.train_log, observer);
    result.lad_weights = model.params().snapshot();

    std::vector<const Sample*> ambiguous;
    for (const Sample& s : bundle.train.samples)
        if (std::binary_search(result.ambiguity.ambiguous_ids.begin(),
                               result.ambiguity.ambiguous_ids.end(), s.id))
            ambiguous.push_back(&s);

    result.report_pre_rc = evaluate(model, bundle.eval, EvalMode::deterministic_mode());
    result.report_pre_rc.method = "LAD";
    result.report_pre_rc.seed = cfg.seed;
    result.ambiguous_entropy_lad = mean_main_entropy(model, ambiguous);

    if (cfg.enable_recalibration) {
        if (progress) *progress << "[rc] re-calibrating on " << ambiguous.size() << " ambiguous samples\n";
        recalibrate(model, ambiguous, cfg.distill.batch_size,
                    cfg.distill.learning_rate * cfg.distill.recalibration_lr_scale, cfg.optimizer,
                    shuffle_rng, &result.train_log, observer);
        result.ambiguous_entropy_final = mean_main_entropy(model, ambiguous);
        result.report = evaluate(model, bundle.eval, EvalMode::deterministic_mode());
        result.report.method = "LAD + RC";
        result.report.seed = cfg.seed;
    } else {
        result.ambiguous_entropy_final = result.ambiguous_entropy_lad;
        result.report = result.report_pre_rc;
    }
    if (progress)
        *progress << "[eval] " << result.report.method << ": KL " << result.report.mean_kl
                  << ", JSD " << result.report.mean_jsd << ", acc " << result.report.accuracy << "\n";
    return result;
}

}  // namespace lad
