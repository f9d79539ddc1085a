#include "lad/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace lad {

void AdamW::step(ParameterSet& params, const GradMap& grads) {
    const Real lr = scheduled_lr();
    const int64_t t = step_ + 1;
    const Real bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<Real>(t));
    const Real bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<Real>(t));
    for (const auto& name : params.names()) {
        if (!params.trainable(name)) continue;
        auto it = grads.find(name);
        if (it == grads.end() || it->second == nullptr)
            throw std::invalid_argument("AdamW: missing gradient for trainable parameter " + name);
        Tensor& w = params.value(name);
        const Tensor& g = *it->second;
        if (!w.same_shape(g))
            throw std::invalid_argument("AdamW: gradient shape mismatch for " + name);
        auto [mit, inserted] = moments_.try_emplace(name, Tensor::zeros(w.shape), Tensor::zeros(w.shape));
        Tensor& m = mit->second.first;
        Tensor& v = mit->second.second;
        for (size_t i = 0; i < w.data.size(); ++i) {
            const Real gi = g.data[i];
            m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gi;
            v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
            const Real mhat = m.data[i] / bc1;
            const Real vhat = v.data[i] / bc2;
            // decoupled decay acts on the weight directly, not through moments
            w.data[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.epsilon) + cfg_.weight_decay * w.data[i]);
        }
    }
    ++step_;
}

GradCheckResult grad_check(ParameterSet& params, const std::function<Real()>& loss_value,
                           const std::map<std::string, Tensor>& gradients, Real epsilon) {
    if (epsilon <= 0.0) throw std::invalid_argument("grad_check: epsilon must be positive");
    GradCheckResult result;
    for (const auto& name : params.names()) {
        if (!params.trainable(name)) continue;
        auto it = gradients.find(name);
        if (it == gradients.end())
            throw std::invalid_argument("grad_check: missing gradient for trainable parameter " + name);
        Tensor& w = params.value(name);
        const Tensor& g = it->second;
        if (!w.same_shape(g))
            throw std::invalid_argument("grad_check: gradient shape mismatch for " + name);
        for (size_t i = 0; i < w.data.size(); ++i) {
            const Real orig = w.data[i];
            w.data[i] = orig + epsilon;
            const Real up = loss_value();
            w.data[i] = orig - epsilon;
            const Real down = loss_value();
            w.data[i] = orig;
            const Real g_fd = (up - down) / (2.0 * epsilon);
            const Real g_ad = g.data[i];
            const Real rel = std::fabs(g_ad - g_fd) / std::max<Real>(1e-8, std::fabs(g_ad) + std::fabs(g_fd));
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = name;
                result.worst_index = static_cast<int64_t>(i);
            }
        }
    }
    return result;
}

}  // namespace lad
