#pragma once

#include <functional>
#include <vector>

#include "lad/rng.hpp"
#include "lad/tensor.hpp"

namespace lad {

// Probabilities are clamped at this floor inside every log so one-hot and
// extreme softmax outputs never produce Inf.
inline constexpr Real kProbFloor = 1e-12;

// Standalone numerically-stabilized softmax (max-subtraction). Throws on
// non-finite input.
std::vector<Real> softmax(const std::vector<Real>& logits);

// -sum_i target[i] * ln(max(pred[i], floor)). Throws on length mismatch.
Real cross_entropy(const std::vector<Real>& pred, const std::vector<Real>& target);

// Reverse-mode tape. Nodes are appended in topological order by
// construction; backward() walks the tape in reverse and accumulates
// gradients only through nodes that can reach a gradient-requiring leaf.
class Graph {
public:
    int leaf(Tensor value, bool requires_grad = false);

    int matmul(int a, int b);             // [m,k] x [k,n]
    int linear(int x, int w, int b);      // rows(x) treated as [N,in]; w [in,out], b [out]
    int add(int a, int b);                // same shape
    int scale(int a, Real c);
    int gelu(int x);
    int layer_norm(int x, int gain, int bias, Real eps = 1e-5);
    // (x - mean) / sd over the last dim, no affine
    int normalize_rows(int x, Real eps = 1e-5);
    // token + position embeddings -> [batch, seq, hidden]
    int embedding(const std::vector<int>& tokens, int64_t batch, int64_t seq_len,
                  int token_table, int position_table);
    int mean_tokens(int x, int64_t batch, int64_t seq_len);  // [B,T,H] -> [B,H]
    // fused multi-head self-attention core on pre-projected q,k,v [batch, seq, hidden]
    int attention(int q, int k, int v, int num_heads, int64_t batch, int64_t seq_len);
    int dropout(int x, Real rate, bool active, Rng& rng);  // inverted dropout
    int first_token(int x, int64_t batch, int64_t seq_len);  // [B,T,H] -> [B,H]
    int softmax_rows(int logits);         // over last dim
    int cross_entropy_mean(int pred, int target);  // [N,C],[N,C] -> scalar, mean over rows
    int sum_squares(int x);               // -> scalar
    int stop_grad(int x);                 // value copy, cuts gradient flow

    // Seeds d(loss)=1 and propagates. loss must be a scalar node of a
    // non-empty graph and must depend on at least one gradient-requiring leaf.
    void backward(int loss);

    const Tensor& value(int node) const { return nodes_.at(static_cast<size_t>(node)).value; }
    bool has_grad(int node) const { return nodes_.at(static_cast<size_t>(node)).grad.numel() > 0; }
    const Tensor& grad(int node) const;
    bool requires_grad(int node) const { return nodes_.at(static_cast<size_t>(node)).requires_grad; }
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until touched by backward
        std::function<void(Graph&)> backprop;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;

    int push(Tensor value, bool requires_grad);
    void set_backprop(int node, std::function<void(Graph&)> fn);
    Tensor& grad_buf(int node);
    const Node& node(int idx) const;
    void check_index(int idx, const char* op) const;
};

// Gradients of named parameters, borrowed from a tape after backward().
using GradMap = std::unordered_map<std::string, const Tensor*>;

}  // namespace lad
