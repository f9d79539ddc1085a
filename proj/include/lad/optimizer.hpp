#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>

#include "lad/graph.hpp"
#include "lad/params.hpp"

namespace lad {

struct AdamWConfig {
    Real learning_rate = 3e-4;
    Real weight_decay = 0.1;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real epsilon = 1e-8;
    int64_t total_steps = 0;  // linear decay to zero over this many steps; 0 = constant LR
};

// AdamW with decoupled weight decay and a linear learning-rate decay
// schedule. Moments are keyed by parameter name; frozen parameters receive
// no update and their moments do not advance.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {
        if (cfg.learning_rate < 0) throw std::invalid_argument("AdamW: negative learning rate");
    }

    // LR consumed by the next step.
    Real scheduled_lr() const {
        if (cfg_.total_steps <= 0) return cfg_.learning_rate;
        const Real frac = 1.0 - static_cast<Real>(step_) / static_cast<Real>(cfg_.total_steps);
        return cfg_.learning_rate * (frac > 0.0 ? frac : 0.0);
    }

    void step(ParameterSet& params, const GradMap& grads);

    int64_t steps_taken() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    int64_t step_ = 0;
    std::unordered_map<std::string, std::pair<Tensor, Tensor>> moments_;  // (m, v)
};

// Central-difference gradient verification over every trainable scalar.
// loss_value() evaluates the loss at the current parameters; gradients is
// the autodiff result at the unperturbed point. Returns the maximum of
// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
struct GradCheckResult {
    Real max_rel_error = 0.0;
    std::string worst_param;
    int64_t worst_index = -1;
};

GradCheckResult grad_check(ParameterSet& params, const std::function<Real()>& loss_value,
                           const std::map<std::string, Tensor>& gradients, Real epsilon);

}  // namespace lad
