#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lad/datagen.hpp"
#include "lad/metrics.hpp"
#include "lad/model.hpp"
#include "lad/trainer.hpp"

namespace lad {

struct WarmupConfig {
    int max_warmup_epochs = 5;
    Real ambiguous_fraction = 0.10;  // bottom-m extraction
    int batch_size = 32;
    Real learning_rate = 3e-4;
    bool freeze_backbone = false;    // train probes only when set

    void validate() const;
};

struct DistillConfig {
    Real lambda = 0.6;  // weight on the one-hot term in both distillation steps
    int epochs = 5;
    int batch_size = 32;
    Real learning_rate = 3e-4;
    // The source probe is a fresh affine head that must sharpen while the
    // trunk trains; it gets a larger step size.
    Real source_lr_scale = 1.5;
    int recalibration_epochs = 1;  // the method fixes this at one
    // Re-calibration runs at the scale the decayed schedule ended on.
    Real recalibration_lr_scale = 0.1;

    void validate() const;
};

// Per-epoch mean validation entropy for every layer plus the layer selected
// from that epoch's profile.
struct EntropyProfile {
    std::vector<std::vector<Real>> mean_entropy;  // [epoch][layer]
    std::vector<int> selected_source;             // per epoch, 1-based
};

struct SourceSelection {
    int source_idx = 0;     // in [1, L-1]
    int warmup_epochs = 0;  // E: first epoch count at which the selection repeats
    bool stabilized = false;
};

struct AmbiguityRecord {
    std::vector<int64_t> ids;            // aligned with la, training order
    std::vector<Real> la;
    std::vector<int64_t> ambiguous_ids;  // bottom-m by LA, ascending ids
};

// Layer just before the largest consecutive entropy drop: argmax over i of
// e[i] - e[i+1], 1-based, ties to the smallest index.
int select_source_layer(const std::vector<Real>& entropies);

// Mean ground-truth-label confidence across layers source_idx..L.
Real compute_la(const std::vector<Real>& gt_confidences, int source_idx);

// Ids of the round(m*N) smallest LA scores; ties broken by ascending id.
std::vector<int64_t> extract_ambiguous(const std::vector<std::pair<int64_t, Real>>& la_scores,
                                       Real m);

struct WarmupResult {
    SourceSelection selection;
    EntropyProfile profile;
    AmbiguityRecord ambiguity;
};

// Joint training of backbone + all probes with the summed per-probe one-hot
// cross-entropy; stops at the first repeated source selection (or the cap,
// with a warning recorded in selection.stabilized).
WarmupResult warmup_train(LayeredModel& model, const Split& train, const Split& validation,
                          const WarmupConfig& cfg, const OptimizerHyper& hyper, Rng& shuffle_rng,
                          std::vector<TrainLogRow>* log = nullptr,
                          const BatchObserver& observer = nullptr);

// Per-layer mean prediction entropy over a split (deterministic forward).
std::vector<Real> validation_entropy_profile(LayeredModel& model, const Split& split,
                                             int batch_size = 64);

// Restore all weights bitwise to the initialization snapshot. The caller
// recreates optimizers; LA records and the source selection are unaffected.
void reset_to_initial(LayeredModel& model);

// One two-step distillation update. Step 1 trains the main network against
// the one-hot label and the stop-gradiented source distribution; step 2
// freezes the main network and trains only the source probe against the
// one-hot label and the stop-gradiented main distribution. The observer
// fires as lad-step1 / lad-step2 after each optimizer step.
std::pair<Real, Real> distill_batch(LayeredModel& model,
                                    const std::vector<std::vector<int>>& tokens,
                                    const std::vector<int>& labels, Real lambda, int source_idx,
                                    AdamW& opt_main, AdamW& opt_src,
                                    const BatchObserver& observer = nullptr, int epoch = 0,
                                    int batch_index = 0);

void train_lad(LayeredModel& model, const Split& train, const DistillConfig& cfg,
               const OptimizerHyper& hyper, int source_idx, Rng& shuffle_rng,
               std::vector<TrainLogRow>* log = nullptr, const BatchObserver& observer = nullptr);

// One epoch over the ambiguous samples with the half one-hot, half uniform
// target; updates the main network only, at a constant learning rate.
void recalibrate(LayeredModel& model, const std::vector<const Sample*>& ambiguous, int batch_size,
                 Real learning_rate, const OptimizerHyper& hyper, Rng& shuffle_rng,
                 std::vector<TrainLogRow>* log = nullptr, const BatchObserver& observer = nullptr);

struct PipelineRunConfig {
    EncoderConfig encoder;
    WarmupConfig warmup;
    DistillConfig distill;
    OptimizerHyper optimizer;
    bool enable_recalibration = true;
    uint64_t seed = 1;
};

struct PipelineResult {
    LayeredModel model;
    SourceSelection selection;
    EntropyProfile profile;
    AmbiguityRecord ambiguity;
    std::vector<TrainLogRow> train_log;
    WeightSnapshot warmup_weights;         // after warm-up, before reset
    WeightSnapshot lad_weights;            // after LAD, before recalibration
    MetricsReport report;                  // final model
    MetricsReport report_pre_rc;           // evaluated after LAD
    Real ambiguous_entropy_lad = 0.0;      // mean prediction entropy, ambiguous train subset
    Real ambiguous_entropy_final = 0.0;
};

// warm-up -> reset -> two-step distillation -> optional re-calibration ->
// evaluation on the eval split.
PipelineResult run_pipeline(const DatasetBundle& bundle, const PipelineRunConfig& cfg,
                            const BatchObserver& observer = nullptr,
                            std::ostream* progress = nullptr);

}  // namespace lad
