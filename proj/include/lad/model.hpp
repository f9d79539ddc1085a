#pragma once

#include <map>
#include <string>
#include <vector>

#include "lad/graph.hpp"
#include "lad/optimizer.hpp"
#include "lad/params.hpp"
#include "lad/rng.hpp"

namespace lad {

struct EncoderConfig {
    int vocab_size = 500;
    int max_sequence_length = 24;
    int num_layers = 6;
    int hidden_dim = 64;
    int num_heads = 4;
    int ffn_dim = 128;
    Real dropout_rate = 0.1;
    int num_classes = 3;
    uint64_t seed = 1;

    void validate() const;
};

// Graph handles for one batched forward pass. probs[i] / logits[i] hold the
// prediction head of layer i+1; the last entry is the main classifier.
struct LayerOutputs {
    Graph* graph = nullptr;
    int64_t batch = 0;
    std::vector<int> logits;                // node per layer, each [B,C]
    std::vector<int> probs;                 // node per layer, each [B,C]
    std::map<std::string, int> leaves;      // parameter name -> leaf node

    int main_logits() const { return logits.back(); }
    int main_probs() const { return probs.back(); }

    // Gradients of trainable leaves after graph->backward().
    GradMap trainable_grads(const ParameterSet& params) const;
    std::map<std::string, Tensor> trainable_grads_copy(const ParameterSet& params) const;
};

// Pre-norm transformer encoder with one affine probe classifier per layer;
// the top layer's probe is the main classifier. First-token pooling feeds
// every probe.
class LayeredModel {
public:
    explicit LayeredModel(const EncoderConfig& cfg);

    LayeredModel(LayeredModel&&) = default;
    LayeredModel& operator=(LayeredModel&&) = default;

    const EncoderConfig& config() const { return cfg_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }
    Rng& dropout_rng() { return dropout_rng_; }
    const Rng& dropout_rng() const { return dropout_rng_; }
    const WeightSnapshot& init_snapshot() const { return init_snapshot_; }
    void set_init_snapshot(WeightSnapshot snap) { init_snapshot_ = std::move(snap); }

    // Restore all parameters bitwise to their initialization values.
    void restore_initial();

    // One forward over a batch of equal-length token sequences. When rng is
    // null the model's own dropout stream is used.
    LayerOutputs forward_all_layers(Graph& g, const std::vector<std::vector<int>>& token_batch,
                                    bool dropout_active, Rng* rng = nullptr);

    // Deterministic forward returning per-layer probability rows (and
    // optionally main-classifier logits) without keeping the graph.
    struct Predictions {
        // dists[layer][sample] is a simplex vector over classes
        std::vector<std::vector<std::vector<Real>>> dists;
        std::vector<std::vector<Real>> main_logits;  // per sample
    };
    Predictions predict(const std::vector<std::vector<int>>& token_batch, bool dropout_active = false,
                        Rng* rng = nullptr);

    // Group-tag helpers. Probe L is tagged main-classifier; token/position
    // embeddings live in backbone-layer-1.
    std::string probe_group(int layer) const;               // layer in [1, L]
    std::vector<std::string> main_network_groups() const;   // backbone 1..L + main classifier

    static constexpr const char* kMainClassifierGroup = "main-classifier";

private:
    EncoderConfig cfg_;
    ParameterSet params_;
    Rng dropout_rng_;
    WeightSnapshot init_snapshot_;

    void build_parameters();
};

}  // namespace lad
