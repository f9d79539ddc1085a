#include "lad/trainer.hpp"

#include <numeric>
#include <stdexcept>

namespace lad {

AdamWConfig make_adamw_config(Real learning_rate, const OptimizerHyper& hyper, int64_t total_steps) {
    AdamWConfig cfg;
    cfg.learning_rate = learning_rate;
    cfg.weight_decay = hyper.weight_decay;
    cfg.beta1 = hyper.beta1;
    cfg.beta2 = hyper.beta2;
    cfg.epsilon = hyper.epsilon;
    cfg.total_steps = total_steps;
    return cfg;
}

std::vector<std::vector<size_t>> epoch_batches(size_t n, int batch_size, Rng& rng) {
    if (batch_size < 1) throw std::invalid_argument("epoch_batches: batch_size must be >= 1");
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    rng.shuffle(order);
    std::vector<std::vector<size_t>> batches;
    for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
        const size_t stop = std::min(n, start + static_cast<size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<ptrdiff_t>(start),
                             order.begin() + static_cast<ptrdiff_t>(stop));
    }
    return batches;
}

std::vector<Real> one_hot(int label, int num_classes) {
    if (label < 0 || label >= num_classes) throw std::invalid_argument("one_hot: label out of range");
    std::vector<Real> v(static_cast<size_t>(num_classes), 0.0);
    v[static_cast<size_t>(label)] = 1.0;
    return v;
}

void set_trainable_main_network(LayeredModel& model, bool main_trainable) {
    for (const auto& grp : model.main_network_groups())
        model.params().set_group_trainable(grp, main_trainable);
}

void freeze_all_probes(LayeredModel& model) {
    for (int i = 1; i < model.config().num_layers; ++i)
        model.params().set_group_trainable("probe-" + std::to_string(i), false);
}

void fit_with_targets(LayeredModel& model, const Split& train, const TargetFn& target_fn,
                      const TrainHyper& hyper, Rng& shuffle_rng, std::vector<TrainLogRow>* log,
                      const std::string& phase_tag, const BatchObserver& observer) {
    if (train.samples.empty()) throw std::invalid_argument("fit_with_targets: empty train split");
    set_trainable_main_network(model, true);
    freeze_all_probes(model);

    const int64_t batches_per_epoch =
        static_cast<int64_t>((train.size() + static_cast<size_t>(hyper.batch_size) - 1) /
                             static_cast<size_t>(hyper.batch_size));
    AdamW opt(make_adamw_config(hyper.learning_rate, hyper.optimizer,
                                batches_per_epoch * hyper.epochs));
    const int c = model.config().num_classes;

    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        Real epoch_loss = 0.0;
        int batch_index = 0;
        for (const auto& batch : epoch_batches(train.size(), hyper.batch_size, shuffle_rng)) {
            std::vector<std::vector<int>> tokens;
            Tensor targets = Tensor::zeros({static_cast<int64_t>(batch.size()), c});
            tokens.reserve(batch.size());
            for (size_t i = 0; i < batch.size(); ++i) {
                const Sample& s = train.samples[batch[i]];
                tokens.push_back(s.tokens);
                const std::vector<Real> t = target_fn(s);
                if (static_cast<int>(t.size()) != c)
                    throw std::invalid_argument("fit_with_targets: target width mismatch");
                for (int j = 0; j < c; ++j)
                    targets.data[i * static_cast<size_t>(c) + static_cast<size_t>(j)] = t[static_cast<size_t>(j)];
            }
            Graph g;
            LayerOutputs fwd = model.forward_all_layers(g, tokens, true);
            const int target_node = g.leaf(std::move(targets), false);
            const int loss = g.cross_entropy_mean(fwd.main_probs(), target_node);
            g.backward(loss);
            opt.step(model.params(), fwd.trainable_grads(model.params()));
            epoch_loss += g.value(loss).data[0];
            if (observer) observer(BatchEvent{phase_tag, epoch, batch_index}, model);
            ++batch_index;
        }
        if (log)
            log->push_back({phase_tag, epoch, epoch_loss / static_cast<Real>(batches_per_epoch), 0.0});
    }
}

}  // namespace lad
