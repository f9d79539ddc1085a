#include "lad/tensor.hpp"

#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lad {
namespace kernels {

// Row-parallel kernels: each output element is reduced serially by exactly
// one thread in a fixed order, so results do not depend on the thread count.
// Rows accumulate into a stack buffer to keep the inner loop store-free.

namespace {
constexpr int64_t kAccWidth = 256;

void nn_wide(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (m >= 8)
    for (int64_t i = 0; i < m; ++i) {
        Real* crow = c + i * n;
        const Real* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const Real av = arow[p];
            const Real* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}
}  // namespace

void matmul_nn(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n) {
    if (n > kAccWidth) {
        nn_wide(a, b, c, m, k, n);
        return;
    }
#pragma omp parallel for schedule(static) if (m >= 8)
    for (int64_t i = 0; i < m; ++i) {
        Real acc[kAccWidth];
        std::memcpy(acc, c + i * n, static_cast<size_t>(n) * sizeof(Real));
        const Real* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const Real av = arow[p];
            const Real* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) acc[j] += av * brow[j];
        }
        std::memcpy(c + i * n, acc, static_cast<size_t>(n) * sizeof(Real));
    }
}

void matmul_nt(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n) {
    // b arrives as [n,k]; transpose once so the hot loop is the nn kernel
    std::vector<Real> bt(static_cast<size_t>(k * n));
    for (int64_t j = 0; j < n; ++j)
        for (int64_t p = 0; p < k; ++p) bt[static_cast<size_t>(p * n + j)] = b[j * k + p];
    matmul_nn(a, bt.data(), c, m, k, n);
}

void matmul_tn(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n) {
    // a arrives as [m,k]; c is [k,n] += a^T b
    std::vector<Real> at(static_cast<size_t>(m * k));
    for (int64_t i = 0; i < k; ++i)
        for (int64_t p = 0; p < m; ++p) at[static_cast<size_t>(i * m + p)] = a[p * k + i];
    matmul_nn(at.data(), b, c, k, m, n);
}

}  // namespace kernels
}  // namespace lad
