#pragma once

#include <string>
#include <vector>

#include "lad/datagen.hpp"
#include "lad/metrics.hpp"
#include "lad/model.hpp"
#include "lad/trainer.hpp"

namespace lad {

struct TemperatureGrid {
    Real min = 0.25;
    Real max = 4.0;
    Real step = 0.25;

    std::vector<Real> values() const;  // throws if empty or any T <= 0
};

struct BaselineConfig {
    Real ls_alpha = 0.1;     // label-smoothing mass
    int mc_passes = 10;      // stochastic forward passes
    TemperatureGrid ts_grid;
    TrainHyper hyper;        // shared with the pipeline for the controlled comparison
};

// Ordinary fine-tuning: one-hot labels, cross-entropy, backbone + main
// classifier only.
void train_ord(LayeredModel& model, const Split& train, const BaselineConfig& cfg, Rng& shuffle_rng,
               std::vector<TrainLogRow>* log = nullptr);

// Label smoothing: targets are (1-alpha) one-hot + alpha/C.
void train_ls(LayeredModel& model, const Split& train, const BaselineConfig& cfg, Rng& shuffle_rng,
              std::vector<TrainLogRow>* log = nullptr);

// Label distribution learning: cross-entropy against gold distributions
// (upper-bound oracle; requires distributions on the train split).
void train_ldl(LayeredModel& model, const Split& train, const BaselineConfig& cfg, Rng& shuffle_rng,
               std::vector<TrainLogRow>* log = nullptr);

// Mean of k dropout-active forward distributions.
std::vector<std::vector<Real>> predict_mc(LayeredModel& model,
                                          const std::vector<std::vector<int>>& token_batch, int k,
                                          uint64_t seed);

// softmax(logits / T); throws for T <= 0.
std::vector<Real> apply_temperature(const std::vector<Real>& logits, Real temperature);

struct TemperatureFit {
    Real t_star = 1.0;
    Real validation_kl = 0.0;
};

// Grid search for T minimizing mean KL(gold || softmax(logits/T)).
TemperatureFit fit_temperature_on_logits(const std::vector<std::vector<Real>>& logits,
                                         const std::vector<std::vector<Real>>& gold_dists,
                                         const TemperatureGrid& grid);
TemperatureFit fit_temperature(LayeredModel& model, const Split& validation,
                               const TemperatureGrid& grid);

}  // namespace lad
