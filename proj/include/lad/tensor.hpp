#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace lad {

using Real = double;

// Dense row-major tensor. All arithmetic in the project runs on 64-bit
// values; shape is kept separate from data so flat kernels stay simple.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<Real> data;

    Tensor() = default;
    Tensor(std::vector<int64_t> s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int64_t> s) {
        const int64_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<Real>(static_cast<size_t>(n), 0.0));
    }

    static Tensor full(std::vector<int64_t> s, Real v) {
        const int64_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<Real>(static_cast<size_t>(n), v));
    }

    static Tensor vector(std::vector<Real> v) {
        const int64_t n = static_cast<int64_t>(v.size());
        return Tensor({n}, std::move(v));
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }

    // product of all dimensions but the last / the last dimension
    int64_t rows() const { return shape.empty() ? 0 : numel() / shape.back(); }
    int64_t cols() const { return shape.empty() ? 0 : shape.back(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (Real v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

namespace kernels {

// All kernels accumulate into c and compute every output element in a fixed
// serial order, so results are bitwise reproducible for any thread count.
void matmul_nn(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n);  // c[m,n] += a[m,k] b[k,n]
void matmul_nt(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n);  // c[m,n] += a[m,k] b[n,k]^T
void matmul_tn(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n);  // c[k,n] += a[m,k]^T b[m,n]

}  // namespace kernels

}  // namespace lad
