#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lad/datagen.hpp"
#include "lad/model.hpp"
#include "lad/optimizer.hpp"

namespace lad {

// Optimizer hyperparameters shared by every phase and method.
struct OptimizerHyper {
    Real weight_decay = 0.1;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real epsilon = 1e-8;
};

AdamWConfig make_adamw_config(Real learning_rate, const OptimizerHyper& hyper, int64_t total_steps);

struct TrainHyper {
    int epochs = 5;
    int batch_size = 32;
    Real learning_rate = 3e-4;
    OptimizerHyper optimizer;
};

struct TrainLogRow {
    std::string phase;
    int epoch = 0;
    Real loss_main = 0.0;
    Real loss_src = 0.0;
};

// Fired after every optimizer step; phase is one of warmup / lad-step1 /
// lad-step2 / recalibrate / fit, plus a single reset event.
struct BatchEvent {
    std::string phase;
    int epoch = 0;
    int batch_index = 0;
};
using BatchObserver = std::function<void(const BatchEvent&, LayeredModel&)>;

// Shuffled index batches for one epoch.
std::vector<std::vector<size_t>> epoch_batches(size_t n, int batch_size, Rng& rng);

std::vector<Real> one_hot(int label, int num_classes);

// Targets for plain fine-tuning of backbone + main classifier (no probes).
using TargetFn = std::function<std::vector<Real>(const Sample&)>;

// Cross-entropy training of the main classifier against per-sample target
// distributions. Probes 1..L-1 stay frozen and untouched.
void fit_with_targets(LayeredModel& model, const Split& train, const TargetFn& target_fn,
                      const TrainHyper& hyper, Rng& shuffle_rng,
                      std::vector<TrainLogRow>* log = nullptr, const std::string& phase_tag = "fit",
                      const BatchObserver& observer = nullptr);

// Freeze helpers. The main network is backbone-layer-1..L (embeddings live
// in backbone-layer-1) plus the main classifier.
void set_trainable_main_network(LayeredModel& model, bool main_trainable);
void freeze_all_probes(LayeredModel& model);

}  // namespace lad
