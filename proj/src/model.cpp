#include "lad/model.hpp"

#include <stdexcept>

namespace lad {

void EncoderConfig::validate() const {
    if (vocab_size < 1) throw std::invalid_argument("EncoderConfig: vocab_size must be >= 1");
    if (max_sequence_length < 1) throw std::invalid_argument("EncoderConfig: max_sequence_length must be >= 1");
    if (num_layers < 2) throw std::invalid_argument("EncoderConfig: num_layers must be >= 2");
    if (hidden_dim < 1 || ffn_dim < 1) throw std::invalid_argument("EncoderConfig: hidden/ffn dims must be >= 1");
    if (num_heads < 1 || hidden_dim % num_heads != 0)
        throw std::invalid_argument("EncoderConfig: hidden_dim must be divisible by num_heads");
    if (num_classes < 2) throw std::invalid_argument("EncoderConfig: num_classes must be >= 2");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw std::invalid_argument("EncoderConfig: dropout_rate must be in [0,1)");
}

GradMap LayerOutputs::trainable_grads(const ParameterSet& params) const {
    GradMap out;
    for (const auto& [name, node] : leaves) {
        if (!params.trainable(name)) continue;
        if (graph->has_grad(node)) out.emplace(name, &graph->grad(node));
    }
    return out;
}

std::map<std::string, Tensor> LayerOutputs::trainable_grads_copy(const ParameterSet& params) const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, node] : leaves) {
        if (!params.trainable(name)) continue;
        if (graph->has_grad(node)) out.emplace(name, graph->grad(node));
    }
    return out;
}

LayeredModel::LayeredModel(const EncoderConfig& cfg)
    : cfg_(cfg), dropout_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ull) {
    cfg_.validate();
    build_parameters();
}

std::string LayeredModel::probe_group(int layer) const {
    if (layer < 1 || layer > cfg_.num_layers) throw std::out_of_range("probe_group: layer out of range");
    if (layer == cfg_.num_layers) return kMainClassifierGroup;
    return "probe-" + std::to_string(layer);
}

std::vector<std::string> LayeredModel::main_network_groups() const {
    std::vector<std::string> out;
    for (int i = 1; i <= cfg_.num_layers; ++i) out.push_back("backbone-layer-" + std::to_string(i));
    out.push_back(kMainClassifierGroup);
    return out;
}

void LayeredModel::build_parameters() {
    Rng init(cfg_.seed);
    const Real w_std = 0.02;
    auto normal_tensor = [&](std::vector<int64_t> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (Real& v : t.data) v = init.normal(0.0, w_std);
        return t;
    };
    const int64_t h = cfg_.hidden_dim, f = cfg_.ffn_dim, c = cfg_.num_classes;

    // embeddings belong to the first backbone layer's group
    params_.add("embed.token", normal_tensor({cfg_.vocab_size, h}), "backbone-layer-1");
    params_.add("embed.position", normal_tensor({cfg_.max_sequence_length, h}), "backbone-layer-1");

    for (int i = 1; i <= cfg_.num_layers; ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        const std::string grp = "backbone-layer-" + std::to_string(i);
        params_.add(p + "ln1.gain", Tensor::full({h}, 1.0), grp);
        params_.add(p + "ln1.bias", Tensor::zeros({h}), grp);
        params_.add(p + "attn.wq", normal_tensor({h, h}), grp);
        params_.add(p + "attn.bq", Tensor::zeros({h}), grp);
        params_.add(p + "attn.wk", normal_tensor({h, h}), grp);
        params_.add(p + "attn.bk", Tensor::zeros({h}), grp);
        params_.add(p + "attn.wv", normal_tensor({h, h}), grp);
        params_.add(p + "attn.bv", Tensor::zeros({h}), grp);
        params_.add(p + "attn.wo", normal_tensor({h, h}), grp);
        params_.add(p + "attn.bo", Tensor::zeros({h}), grp);
        params_.add(p + "ln2.gain", Tensor::full({h}, 1.0), grp);
        params_.add(p + "ln2.bias", Tensor::zeros({h}), grp);
        params_.add(p + "ffn.w1", normal_tensor({h, f}), grp);
        params_.add(p + "ffn.b1", Tensor::zeros({f}), grp);
        params_.add(p + "ffn.w2", normal_tensor({f, h}), grp);
        params_.add(p + "ffn.b2", Tensor::zeros({h}), grp);
    }
    for (int i = 1; i <= cfg_.num_layers; ++i) {
        const std::string p = "probe" + std::to_string(i) + ".";
        params_.add(p + "w", normal_tensor({h, c}), probe_group(i));
        params_.add(p + "b", Tensor::zeros({c}), probe_group(i));
    }

    init_snapshot_ = params_.snapshot();
    init_snapshot_.init_seed = cfg_.seed;
    init_snapshot_.init_rng_state = init.state();
}

void LayeredModel::restore_initial() { params_.restore(init_snapshot_); }

LayerOutputs LayeredModel::forward_all_layers(Graph& g, const std::vector<std::vector<int>>& token_batch,
                                              bool dropout_active, Rng* rng) {
    if (token_batch.empty()) throw std::invalid_argument("forward: empty batch");
    const int64_t batch = static_cast<int64_t>(token_batch.size());
    const int64_t seq = static_cast<int64_t>(token_batch[0].size());
    if (seq < 1) throw std::invalid_argument("forward: empty sequence");
    if (seq > cfg_.max_sequence_length)
        throw std::invalid_argument("forward: sequence length " + std::to_string(seq) +
                                    " exceeds max_sequence_length");
    std::vector<int> flat;
    flat.reserve(static_cast<size_t>(batch * seq));
    for (const auto& seq_tokens : token_batch) {
        if (static_cast<int64_t>(seq_tokens.size()) != seq)
            throw std::invalid_argument("forward: ragged batch (all sequences must share a length)");
        flat.insert(flat.end(), seq_tokens.begin(), seq_tokens.end());
    }
    Rng& drop = rng ? *rng : dropout_rng_;

    LayerOutputs out;
    out.graph = &g;
    out.batch = batch;
    auto bind = [&](const std::string& name) {
        const int node = g.leaf(params_.value(name), params_.trainable(name));
        out.leaves.emplace(name, node);
        return node;
    };

    const int tok_table = bind("embed.token");
    const int pos_table = bind("embed.position");
    int x = g.embedding(flat, batch, seq, tok_table, pos_table);
    x = g.dropout(x, cfg_.dropout_rate, dropout_active, drop);

    for (int i = 1; i <= cfg_.num_layers; ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        const int normed1 = g.layer_norm(x, bind(p + "ln1.gain"), bind(p + "ln1.bias"));
        const int q = g.linear(normed1, bind(p + "attn.wq"), bind(p + "attn.bq"));
        const int k = g.linear(normed1, bind(p + "attn.wk"), bind(p + "attn.bk"));
        const int v = g.linear(normed1, bind(p + "attn.wv"), bind(p + "attn.bv"));
        const int mixed = g.attention(q, k, v, cfg_.num_heads, batch, seq);
        int att = g.linear(mixed, bind(p + "attn.wo"), bind(p + "attn.bo"));
        att = g.dropout(att, cfg_.dropout_rate, dropout_active, drop);
        const int a = g.add(x, att);

        const int normed2 = g.layer_norm(a, bind(p + "ln2.gain"), bind(p + "ln2.bias"));
        const int hid = g.gelu(g.linear(normed2, bind(p + "ffn.w1"), bind(p + "ffn.b1")));
        int ffn = g.linear(hid, bind(p + "ffn.w2"), bind(p + "ffn.b2"));
        ffn = g.dropout(ffn, cfg_.dropout_rate, dropout_active, drop);
        x = g.add(a, ffn);

        // pooled representation: standardized mean over positions, so probes
        // at every depth see unit-scale features
        const std::string pp = "probe" + std::to_string(i) + ".";
        const int pooled = g.normalize_rows(g.mean_tokens(x, batch, seq));
        const int logits = g.linear(pooled, bind(pp + "w"), bind(pp + "b"));
        out.logits.push_back(logits);
        out.probs.push_back(g.softmax_rows(logits));
    }
    return out;
}

LayeredModel::Predictions LayeredModel::predict(const std::vector<std::vector<int>>& token_batch,
                                                bool dropout_active, Rng* rng) {
    Graph g;
    LayerOutputs fwd = forward_all_layers(g, token_batch, dropout_active, rng);
    Predictions out;
    const int64_t batch = fwd.batch;
    const int64_t c = cfg_.num_classes;
    out.dists.resize(static_cast<size_t>(cfg_.num_layers));
    for (int i = 0; i < cfg_.num_layers; ++i) {
        const Tensor& probs = g.value(fwd.probs[static_cast<size_t>(i)]);
        auto& layer = out.dists[static_cast<size_t>(i)];
        layer.resize(static_cast<size_t>(batch));
        for (int64_t b = 0; b < batch; ++b)
            layer[static_cast<size_t>(b)].assign(probs.data.begin() + b * c, probs.data.begin() + (b + 1) * c);
    }
    const Tensor& ml = g.value(fwd.main_logits());
    out.main_logits.resize(static_cast<size_t>(batch));
    for (int64_t b = 0; b < batch; ++b)
        out.main_logits[static_cast<size_t>(b)].assign(ml.data.begin() + b * c, ml.data.begin() + (b + 1) * c);
    return out;
}

}  // namespace lad
