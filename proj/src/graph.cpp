#include "lad/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lad {

namespace {
constexpr Real kInvSqrt2 = 0.70710678118654752440;
constexpr Real kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

std::vector<Real> softmax(const std::vector<Real>& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    Real mx = logits[0];
    for (Real v : logits) {
        if (!std::isfinite(v)) throw std::invalid_argument("softmax: non-finite input");
        mx = std::max(mx, v);
    }
    std::vector<Real> out(logits.size());
    Real sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (Real& v : out) v /= sum;
    return out;
}

Real cross_entropy(const std::vector<Real>& pred, const std::vector<Real>& target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("cross_entropy: length mismatch");
    Real loss = 0.0;
    for (size_t i = 0; i < pred.size(); ++i)
        loss -= target[i] * std::log(std::max(pred[i], kProbFloor));
    return loss;
}

// ---------------------------------------------------------------------------
// tape plumbing
// ---------------------------------------------------------------------------

int Graph::push(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, requires_grad});
    return static_cast<int>(nodes_.size()) - 1;
}

void Graph::set_backprop(int node, std::function<void(Graph&)> fn) {
    nodes_[static_cast<size_t>(node)].backprop = std::move(fn);
}

Tensor& Graph::grad_buf(int idx) {
    Node& n = nodes_[static_cast<size_t>(idx)];
    if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

const Graph::Node& Graph::node(int idx) const {
    check_index(idx, "node");
    return nodes_[static_cast<size_t>(idx)];
}

void Graph::check_index(int idx, const char* op) const {
    if (idx < 0 || static_cast<size_t>(idx) >= nodes_.size())
        throw std::logic_error(std::string(op) + ": invalid node handle");
}

const Tensor& Graph::grad(int idx) const {
    const Node& n = node(idx);
    if (n.grad.numel() == 0)
        throw std::logic_error("grad: node has no gradient (not reached by backward)");
    return n.grad;
}

int Graph::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad);
}

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

int Graph::matmul(int a, int b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    if (av.shape.size() != 2 || bv.shape.size() != 2 || av.shape[1] != bv.shape[0])
        throw std::invalid_argument("matmul: incompatible shapes " + av.shape_str() + " x " + bv.shape_str());
    const int64_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    Tensor out = Tensor::zeros({m, n});
    kernels::matmul_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    const bool rg = node(a).requires_grad || node(b).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [a, b, idx, m, k, n](Graph& g) {
            const Tensor& go = g.grad(idx);
            if (g.nodes_[static_cast<size_t>(a)].requires_grad)
                kernels::matmul_nt(go.data.data(), g.value(b).data.data(),
                                   g.grad_buf(a).data.data(), m, n, k);
            if (g.nodes_[static_cast<size_t>(b)].requires_grad)
                kernels::matmul_tn(g.value(a).data.data(), go.data.data(),
                                   g.grad_buf(b).data.data(), m, k, n);
        });
    }
    return idx;
}

int Graph::linear(int x, int w, int b) {
    const Tensor& xv = node(x).value;
    const Tensor& wv = node(w).value;
    const Tensor& bv = node(b).value;
    if (wv.shape.size() != 2 || bv.shape.size() != 1 || bv.shape[0] != wv.shape[1])
        throw std::invalid_argument("linear: bad weight/bias shapes");
    if (xv.cols() != wv.shape[0])
        throw std::invalid_argument("linear: input width " + std::to_string(xv.cols()) +
                                    " != weight rows " + std::to_string(wv.shape[0]));
    const int64_t rows = xv.rows(), in = wv.shape[0], out_dim = wv.shape[1];
    std::vector<int64_t> out_shape = xv.shape;
    out_shape.back() = out_dim;
    Tensor out = Tensor::zeros(out_shape);
    kernels::matmul_nn(xv.data.data(), wv.data.data(), out.data.data(), rows, in, out_dim);
    for (int64_t r = 0; r < rows; ++r) {
        Real* orow = out.data.data() + r * out_dim;
        for (int64_t j = 0; j < out_dim; ++j) orow[j] += bv.data[static_cast<size_t>(j)];
    }
    const bool rg = node(x).requires_grad || node(w).requires_grad || node(b).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [x, w, b, idx, rows, in, out_dim](Graph& g) {
            const Tensor& go = g.grad(idx);
            if (g.nodes_[static_cast<size_t>(x)].requires_grad)
                kernels::matmul_nt(go.data.data(), g.value(w).data.data(),
                                   g.grad_buf(x).data.data(), rows, out_dim, in);
            if (g.nodes_[static_cast<size_t>(w)].requires_grad)
                kernels::matmul_tn(g.value(x).data.data(), go.data.data(),
                                   g.grad_buf(w).data.data(), rows, in, out_dim);
            if (g.nodes_[static_cast<size_t>(b)].requires_grad) {
                Tensor& gb = g.grad_buf(b);
                for (int64_t r = 0; r < rows; ++r) {
                    const Real* grow = go.data.data() + r * out_dim;
                    for (int64_t j = 0; j < out_dim; ++j) gb.data[static_cast<size_t>(j)] += grow[j];
                }
            }
        });
    }
    return idx;
}

int Graph::add(int a, int b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    if (!av.same_shape(bv))
        throw std::invalid_argument("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Tensor out = av;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
    const bool rg = node(a).requires_grad || node(b).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [a, b, idx](Graph& g) {
            const Tensor& go = g.grad(idx);
            if (g.nodes_[static_cast<size_t>(a)].requires_grad) {
                Tensor& ga = g.grad_buf(a);
                for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
            }
            if (g.nodes_[static_cast<size_t>(b)].requires_grad) {
                Tensor& gb = g.grad_buf(b);
                for (size_t i = 0; i < go.data.size(); ++i) gb.data[i] += go.data[i];
            }
        });
    }
    return idx;
}

int Graph::scale(int a, Real c) {
    Tensor out = node(a).value;
    for (Real& v : out.data) v *= c;
    const bool rg = node(a).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [a, c, idx](Graph& g) {
            const Tensor& go = g.grad(idx);
            Tensor& ga = g.grad_buf(a);
            for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += c * go.data[i];
        });
    }
    return idx;
}

int Graph::gelu(int x) {
    const Tensor& xv = node(x).value;
    Tensor out = xv;
    for (Real& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    const bool rg = node(x).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [x, idx](Graph& g) {
            const Tensor& go = g.grad(idx);
            const Tensor& xv2 = g.value(x);
            Tensor& gx = g.grad_buf(x);
            for (size_t i = 0; i < go.data.size(); ++i) {
                const Real v = xv2.data[i];
                const Real cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const Real pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                gx.data[i] += go.data[i] * (cdf + v * pdf);
            }
        });
    }
    return idx;
}

int Graph::layer_norm(int x, int gain, int bias, Real eps) {
    const Tensor& xv = node(x).value;
    const Tensor& gv = node(gain).value;
    const Tensor& bv = node(bias).value;
    const int64_t h = xv.cols(), rows = xv.rows();
    if (gv.numel() != h || bv.numel() != h)
        throw std::invalid_argument("layer_norm: gain/bias width mismatch");
    Tensor out = Tensor::zeros(xv.shape);
    Tensor xhat = Tensor::zeros(xv.shape);   // saved for backward
    std::vector<Real> inv_sd(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const Real* row = xv.data.data() + r * h;
        Real mean = 0.0;
        for (int64_t j = 0; j < h; ++j) mean += row[j];
        mean /= static_cast<Real>(h);
        Real var = 0.0;
        for (int64_t j = 0; j < h; ++j) {
            const Real d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<Real>(h);
        const Real isd = 1.0 / std::sqrt(var + eps);
        inv_sd[static_cast<size_t>(r)] = isd;
        Real* xh = xhat.data.data() + r * h;
        Real* orow = out.data.data() + r * h;
        for (int64_t j = 0; j < h; ++j) {
            xh[j] = (row[j] - mean) * isd;
            orow[j] = xh[j] * gv.data[static_cast<size_t>(j)] + bv.data[static_cast<size_t>(j)];
        }
    }
    const bool rg = node(x).requires_grad || node(gain).requires_grad || node(bias).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [x, gain, bias, idx, rows, h, xhat = std::move(xhat),
                           inv_sd = std::move(inv_sd)](Graph& g) {
            const Tensor& go = g.grad(idx);
            const Tensor& gv2 = g.value(gain);
            const bool need_x = g.nodes_[static_cast<size_t>(x)].requires_grad;
            const bool need_g = g.nodes_[static_cast<size_t>(gain)].requires_grad;
            const bool need_b = g.nodes_[static_cast<size_t>(bias)].requires_grad;
            for (int64_t r = 0; r < rows; ++r) {
                const Real* grow = go.data.data() + r * h;
                const Real* xh = xhat.data.data() + r * h;
                if (need_g) {
                    Tensor& gg = g.grad_buf(gain);
                    for (int64_t j = 0; j < h; ++j) gg.data[static_cast<size_t>(j)] += grow[j] * xh[j];
                }
                if (need_b) {
                    Tensor& gb = g.grad_buf(bias);
                    for (int64_t j = 0; j < h; ++j) gb.data[static_cast<size_t>(j)] += grow[j];
                }
                if (need_x) {
                    Real sum_dy = 0.0, sum_dy_xh = 0.0;
                    for (int64_t j = 0; j < h; ++j) {
                        const Real dy = grow[j] * gv2.data[static_cast<size_t>(j)];
                        sum_dy += dy;
                        sum_dy_xh += dy * xh[j];
                    }
                    const Real inv_h = 1.0 / static_cast<Real>(h);
                    Tensor& gx = g.grad_buf(x);
                    Real* gxrow = gx.data.data() + r * h;
                    const Real isd = inv_sd[static_cast<size_t>(r)];
                    for (int64_t j = 0; j < h; ++j) {
                        const Real dy = grow[j] * gv2.data[static_cast<size_t>(j)];
                        gxrow[j] += isd * (dy - sum_dy * inv_h - xh[j] * sum_dy_xh * inv_h);
                    }
                }
            }
        });
    }
    return idx;
}

int Graph::embedding(const std::vector<int>& tokens, int64_t batch, int64_t seq_len,
                     int token_table, int position_table) {
    const Tensor& tok = node(token_table).value;
    const Tensor& pos = node(position_table).value;
    if (static_cast<int64_t>(tokens.size()) != batch * seq_len)
        throw std::invalid_argument("embedding: token count != batch * seq_len");
    if (pos.shape.size() != 2 || tok.shape.size() != 2 || pos.shape[1] != tok.shape[1])
        throw std::invalid_argument("embedding: bad table shapes");
    if (seq_len > pos.shape[0])
        throw std::invalid_argument("embedding: sequence longer than position table");
    const int64_t h = tok.shape[1];
    const int64_t vocab = tok.shape[0];
    Tensor out = Tensor::zeros({batch, seq_len, h});
    for (int64_t i = 0; i < batch * seq_len; ++i) {
        const int t = tokens[static_cast<size_t>(i)];
        if (t < 0 || t >= vocab)
            throw std::invalid_argument("embedding: token id " + std::to_string(t) +
                                        " outside vocabulary of size " + std::to_string(vocab));
        const int64_t p = i % seq_len;
        const Real* trow = tok.data.data() + static_cast<int64_t>(t) * h;
        const Real* prow = pos.data.data() + p * h;
        Real* orow = out.data.data() + i * h;
        for (int64_t j = 0; j < h; ++j) orow[j] = trow[j] + prow[j];
    }
    const bool rg = node(token_table).requires_grad || node(position_table).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [tokens, token_table, position_table, idx, batch, seq_len, h](Graph& g) {
            const Tensor& go = g.grad(idx);
            if (g.nodes_[static_cast<size_t>(token_table)].requires_grad) {
                Tensor& gt = g.grad_buf(token_table);
                for (int64_t i = 0; i < batch * seq_len; ++i) {
                    const int t = tokens[static_cast<size_t>(i)];
                    const Real* grow = go.data.data() + i * h;
                    Real* trow = gt.data.data() + static_cast<int64_t>(t) * h;
                    for (int64_t j = 0; j < h; ++j) trow[j] += grow[j];
                }
            }
            if (g.nodes_[static_cast<size_t>(position_table)].requires_grad) {
                Tensor& gp = g.grad_buf(position_table);
                for (int64_t i = 0; i < batch * seq_len; ++i) {
                    const int64_t p = i % seq_len;
                    const Real* grow = go.data.data() + i * h;
                    Real* prow = gp.data.data() + p * h;
                    for (int64_t j = 0; j < h; ++j) prow[j] += grow[j];
                }
            }
        });
    }
    return idx;
}

int Graph::mean_tokens(int x, int64_t batch, int64_t seq_len) {
    const Tensor& xv = node(x).value;
    const int64_t h = xv.cols();
    if (xv.numel() != batch * seq_len * h)
        throw std::invalid_argument("mean_tokens: bad dims");
    const Real inv = 1.0 / static_cast<Real>(seq_len);
    Tensor out = Tensor::zeros({batch, h});
    for (int64_t b = 0; b < batch; ++b) {
        Real* dst = out.data.data() + b * h;
        for (int64_t t = 0; t < seq_len; ++t) {
            const Real* src = xv.data.data() + (b * seq_len + t) * h;
            for (int64_t j = 0; j < h; ++j) dst[j] += src[j];
        }
        for (int64_t j = 0; j < h; ++j) dst[j] *= inv;
    }
    const bool rg = node(x).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [x, idx, batch, seq_len, h, inv](Graph& g) {
            const Tensor& go = g.grad(idx);
            Tensor& gx = g.grad_buf(x);
            for (int64_t b = 0; b < batch; ++b) {
                const Real* src = go.data.data() + b * h;
                for (int64_t t = 0; t < seq_len; ++t) {
                    Real* dst = gx.data.data() + (b * seq_len + t) * h;
                    for (int64_t j = 0; j < h; ++j) dst[j] += src[j] * inv;
                }
            }
        });
    }
    return idx;
}

int Graph::normalize_rows(int x, Real eps) {
    const Tensor& xv = node(x).value;
    const int64_t h = xv.cols(), rows = xv.rows();
    Tensor out = Tensor::zeros(xv.shape);
    std::vector<Real> inv_sd(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const Real* row = xv.data.data() + r * h;
        Real mean = 0.0;
        for (int64_t j = 0; j < h; ++j) mean += row[j];
        mean /= static_cast<Real>(h);
        Real var = 0.0;
        for (int64_t j = 0; j < h; ++j) {
            const Real d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<Real>(h);
        const Real isd = 1.0 / std::sqrt(var + eps);
        inv_sd[static_cast<size_t>(r)] = isd;
        Real* orow = out.data.data() + r * h;
        for (int64_t j = 0; j < h; ++j) orow[j] = (row[j] - mean) * isd;
    }
    const bool rg = node(x).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [x, idx, rows, h, inv_sd = std::move(inv_sd)](Graph& g) {
            const Tensor& go = g.grad(idx);
            const Tensor& xh = g.value(idx);  // normalized output
            Tensor& gx = g.grad_buf(x);
            const Real inv_h = 1.0 / static_cast<Real>(h);
            for (int64_t r = 0; r < rows; ++r) {
                const Real* grow = go.data.data() + r * h;
                const Real* xrow = xh.data.data() + r * h;
                Real sum_dy = 0.0, sum_dy_xh = 0.0;
                for (int64_t j = 0; j < h; ++j) {
                    sum_dy += grow[j];
                    sum_dy_xh += grow[j] * xrow[j];
                }
                Real* gxrow = gx.data.data() + r * h;
                const Real isd = inv_sd[static_cast<size_t>(r)];
                for (int64_t j = 0; j < h; ++j)
                    gxrow[j] += isd * (grow[j] - sum_dy * inv_h - xrow[j] * sum_dy_xh * inv_h);
            }
        });
    }
    return idx;
}

int Graph::attention(int q, int k, int v, int num_heads, int64_t batch, int64_t seq_len) {
    const Tensor& qv = node(q).value;
    const Tensor& kv = node(k).value;
    const Tensor& vv = node(v).value;
    if (!qv.same_shape(kv) || !qv.same_shape(vv))
        throw std::invalid_argument("attention: q/k/v shape mismatch");
    const int64_t h = qv.cols();
    if (num_heads <= 0 || h % num_heads != 0)
        throw std::invalid_argument("attention: hidden dim not divisible by heads");
    if (qv.numel() != batch * seq_len * h)
        throw std::invalid_argument("attention: bad batch/seq dims");
    const int64_t hd = h / num_heads;
    const Real att_scale = 1.0 / std::sqrt(static_cast<Real>(hd));

    Tensor out = Tensor::zeros(qv.shape);
    Tensor probs = Tensor::zeros({batch, static_cast<int64_t>(num_heads), seq_len, seq_len});
    const int64_t units = batch * num_heads;
#pragma omp parallel for schedule(static) if (units >= 4)
    for (int64_t u = 0; u < units; ++u) {
        const int64_t b = u / num_heads;
        const int64_t head = u % num_heads;
        const int64_t base = b * seq_len * h + head * hd;
        Real* prow_base = probs.data.data() + u * seq_len * seq_len;
        for (int64_t i = 0; i < seq_len; ++i) {
            const Real* qi = qv.data.data() + base + i * h;
            Real* srow = prow_base + i * seq_len;
            Real mx = -1e300;
            for (int64_t j = 0; j < seq_len; ++j) {
                const Real* kj = kv.data.data() + base + j * h;
                Real dot = 0.0;
                for (int64_t d = 0; d < hd; ++d) dot += qi[d] * kj[d];
                srow[j] = dot * att_scale;
                mx = std::max(mx, srow[j]);
            }
            Real sum = 0.0;
            for (int64_t j = 0; j < seq_len; ++j) {
                srow[j] = std::exp(srow[j] - mx);
                sum += srow[j];
            }
            for (int64_t j = 0; j < seq_len; ++j) srow[j] /= sum;
            Real* oi = out.data.data() + base + i * h;
            for (int64_t j = 0; j < seq_len; ++j) {
                const Real p = srow[j];
                const Real* vj = vv.data.data() + base + j * h;
                for (int64_t d = 0; d < hd; ++d) oi[d] += p * vj[d];
            }
        }
    }
    const bool rg = node(q).requires_grad || node(k).requires_grad || node(v).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [q, k, v, idx, num_heads, batch, seq_len, h, hd, att_scale,
                           probs = std::move(probs)](Graph& g) {
            const Tensor& go = g.grad(idx);
            const Tensor& qv2 = g.value(q);
            const Tensor& kv2 = g.value(k);
            const Tensor& vv2 = g.value(v);
            Tensor& gq = g.grad_buf(q);
            Tensor& gk = g.grad_buf(k);
            Tensor& gv = g.grad_buf(v);
            const int64_t units = batch * num_heads;
#pragma omp parallel for schedule(static) if (units >= 4)
            for (int64_t u = 0; u < units; ++u) {
                const int64_t b = u / num_heads;
                const int64_t head = u % num_heads;
                const int64_t base = b * seq_len * h + head * hd;
                const Real* prow_base = probs.data.data() + u * seq_len * seq_len;
                std::vector<Real> dp(static_cast<size_t>(seq_len));
                for (int64_t i = 0; i < seq_len; ++i) {
                    const Real* goi = go.data.data() + base + i * h;
                    const Real* prow = prow_base + i * seq_len;
                    // dV and dP
                    Real dp_dot_p = 0.0;
                    for (int64_t j = 0; j < seq_len; ++j) {
                        const Real* vj = vv2.data.data() + base + j * h;
                        Real acc = 0.0;
                        for (int64_t d = 0; d < hd; ++d) acc += goi[d] * vj[d];
                        dp[static_cast<size_t>(j)] = acc;
                        dp_dot_p += acc * prow[j];
                        Real* gvj = gv.data.data() + base + j * h;
                        const Real p = prow[j];
                        for (int64_t d = 0; d < hd; ++d) gvj[d] += p * goi[d];
                    }
                    // dS then dQ, dK
                    const Real* qi = qv2.data.data() + base + i * h;
                    Real* gqi = gq.data.data() + base + i * h;
                    for (int64_t j = 0; j < seq_len; ++j) {
                        const Real ds = prow[j] * (dp[static_cast<size_t>(j)] - dp_dot_p) * att_scale;
                        const Real* kj = kv2.data.data() + base + j * h;
                        Real* gkj = gk.data.data() + base + j * h;
                        for (int64_t d = 0; d < hd; ++d) {
                            gqi[d] += ds * kj[d];
                            gkj[d] += ds * qi[d];
                        }
                    }
                }
            }
        });
    }
    return idx;
}

int Graph::dropout(int x, Real rate, bool active, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (!active || rate == 0.0) return x;
    const Tensor& xv = node(x).value;
    const Real keep_scale = 1.0 / (1.0 - rate);
    std::vector<Real> mask(xv.data.size());
    for (size_t i = 0; i < mask.size(); ++i)
        mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    Tensor out = xv;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask[i];
    const bool rg = node(x).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [x, idx, mask = std::move(mask)](Graph& g) {
            const Tensor& go = g.grad(idx);
            Tensor& gx = g.grad_buf(x);
            for (size_t i = 0; i < go.data.size(); ++i) gx.data[i] += go.data[i] * mask[i];
        });
    }
    return idx;
}

int Graph::first_token(int x, int64_t batch, int64_t seq_len) {
    const Tensor& xv = node(x).value;
    const int64_t h = xv.cols();
    if (xv.numel() != batch * seq_len * h)
        throw std::invalid_argument("first_token: bad dims");
    Tensor out = Tensor::zeros({batch, h});
    for (int64_t b = 0; b < batch; ++b) {
        const Real* src = xv.data.data() + b * seq_len * h;
        Real* dst = out.data.data() + b * h;
        for (int64_t j = 0; j < h; ++j) dst[j] = src[j];
    }
    const bool rg = node(x).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [x, idx, batch, seq_len, h](Graph& g) {
            const Tensor& go = g.grad(idx);
            Tensor& gx = g.grad_buf(x);
            for (int64_t b = 0; b < batch; ++b) {
                const Real* src = go.data.data() + b * h;
                Real* dst = gx.data.data() + b * seq_len * h;
                for (int64_t j = 0; j < h; ++j) dst[j] += src[j];
            }
        });
    }
    return idx;
}

int Graph::softmax_rows(int logits) {
    const Tensor& zv = node(logits).value;
    const int64_t c = zv.cols(), rows = zv.rows();
    if (c == 0) throw std::invalid_argument("softmax_rows: empty rows");
    Tensor out = Tensor::zeros(zv.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const Real* zrow = zv.data.data() + r * c;
        Real mx = zrow[0];
        for (int64_t j = 0; j < c; ++j) {
            if (!std::isfinite(zrow[j])) throw std::invalid_argument("softmax_rows: non-finite input");
            mx = std::max(mx, zrow[j]);
        }
        Real* orow = out.data.data() + r * c;
        Real sum = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            orow[j] = std::exp(zrow[j] - mx);
            sum += orow[j];
        }
        for (int64_t j = 0; j < c; ++j) orow[j] /= sum;
    }
    const bool rg = node(logits).requires_grad;
    const int idx = push(std::move(out), rg);
    if (rg) {
        set_backprop(idx, [logits, idx, rows, c](Graph& g) {
            const Tensor& go = g.grad(idx);
            const Tensor& p = g.value(idx);
            Tensor& gz = g.grad_buf(logits);
            for (int64_t r = 0; r < rows; ++r) {
                const Real* prow = p.data.data() + r * c;
                const Real* grow = go.data.data() + r * c;
                Real dot = 0.0;
                for (int64_t j = 0; j < c; ++j) dot += grow[j] * prow[j];
                Real* gzrow = gz.data.data() + r * c;
                for (int64_t j = 0; j < c; ++j) gzrow[j] += prow[j] * (grow[j] - dot);
            }
        });
    }
    return idx;
}

int Graph::cross_entropy_mean(int pred, int target) {
    const Tensor& pv = node(pred).value;
    const Tensor& tv = node(target).value;
    if (!pv.same_shape(tv))
        throw std::invalid_argument("cross_entropy_mean: shape mismatch " + pv.shape_str() +
                                    " vs " + tv.shape_str());
    const int64_t rows = pv.rows(), c = pv.cols();
    if (rows == 0) throw std::invalid_argument("cross_entropy_mean: empty batch");
    Real loss = 0.0;
    for (int64_t i = 0; i < rows * c; ++i)
        loss -= tv.data[static_cast<size_t>(i)] *
                std::log(std::max(pv.data[static_cast<size_t>(i)], kProbFloor));
    loss /= static_cast<Real>(rows);
    const bool rg = node(pred).requires_grad || node(target).requires_grad;
    const int idx = push(Tensor({1}, {loss}), rg);
    if (rg) {
        set_backprop(idx, [pred, target, idx, rows, c](Graph& g) {
            const Real gscale = g.grad(idx).data[0] / static_cast<Real>(rows);
            const Tensor& pv2 = g.value(pred);
            const Tensor& tv2 = g.value(target);
            if (g.nodes_[static_cast<size_t>(pred)].requires_grad) {
                Tensor& gp = g.grad_buf(pred);
                for (int64_t i = 0; i < rows * c; ++i) {
                    const Real p = pv2.data[static_cast<size_t>(i)];
                    if (p > kProbFloor)  // clamp is flat below the floor
                        gp.data[static_cast<size_t>(i)] -= gscale * tv2.data[static_cast<size_t>(i)] / p;
                }
            }
            if (g.nodes_[static_cast<size_t>(target)].requires_grad) {
                Tensor& gt = g.grad_buf(target);
                for (int64_t i = 0; i < rows * c; ++i)
                    gt.data[static_cast<size_t>(i)] -=
                        gscale * std::log(std::max(pv2.data[static_cast<size_t>(i)], kProbFloor));
            }
        });
    }
    return idx;
}

int Graph::sum_squares(int x) {
    const Tensor& xv = node(x).value;
    Real loss = 0.0;
    for (Real v : xv.data) loss += v * v;
    const bool rg = node(x).requires_grad;
    const int idx = push(Tensor({1}, {loss}), rg);
    if (rg) {
        set_backprop(idx, [x, idx](Graph& g) {
            const Real gs = g.grad(idx).data[0];
            const Tensor& xv2 = g.value(x);
            Tensor& gx = g.grad_buf(x);
            for (size_t i = 0; i < xv2.data.size(); ++i) gx.data[i] += 2.0 * xv2.data[i] * gs;
        });
    }
    return idx;
}

int Graph::stop_grad(int x) {
    return push(node(x).value, false);
}

void Graph::backward(int loss) {
    if (nodes_.empty()) throw std::logic_error("backward: no forward pass recorded");
    check_index(loss, "backward");
    const Node& ln = nodes_[static_cast<size_t>(loss)];
    if (ln.value.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (!std::isfinite(ln.value.data[0])) throw std::runtime_error("backward: loss is not finite");
    if (!ln.requires_grad)
        throw std::invalid_argument("backward: loss does not depend on any trainable leaf");
    grad_buf(loss).data[0] += 1.0;
    for (int i = loss; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad || n.grad.numel() == 0 || !n.backprop) continue;
        n.backprop(*this);
    }
}

}  // namespace lad
