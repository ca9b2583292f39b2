#pragma once

#include <algorithm>
#include <cstdint>

namespace ash::detail {

// Small dense matrix kernels with fixed, deterministic summation order.
// All matrices are row-major and contiguous.

// c (+)= a * b, a: m x k, b: k x n.
template <typename S>
void gemm_nn(const S* a, const S* b, S* c, std::int64_t m, std::int64_t k, std::int64_t n,
             bool accumulate) {
    if (!accumulate) {
        for (std::int64_t i = 0; i < m * n; ++i) c[i] = S(0);
    }
    if (m <= 32) {
        // Few output rows: stream b once and keep c cache-resident.
        for (std::int64_t p = 0; p < k; ++p) {
            const S* br = b + p * n;
            for (std::int64_t i = 0; i < m; ++i) {
                const S av = a[i * k + p];
                S* cr = c + i * n;
                for (std::int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        }
        return;
    }
    for (std::int64_t i = 0; i < m; ++i) {
        S* cr = c + i * n;
        const S* ar = a + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const S av = ar[p];
            const S* br = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

// c (+)= a * b^T, a: m x k, b: n x k. Eight independent accumulator lanes
// keep the reduction vectorizable without reassociation flags.
template <typename S>
void gemm_nt(const S* a, const S* b, S* c, std::int64_t m, std::int64_t k, std::int64_t n,
             bool accumulate) {
    constexpr std::int64_t kLanes = 8;
    for (std::int64_t i = 0; i < m; ++i) {
        const S* ar = a + i * k;
        S* cr = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const S* br = b + j * k;
            S acc[kLanes] = {};
            const std::int64_t blocks = k / kLanes;
            for (std::int64_t blk = 0; blk < blocks; ++blk) {
                const std::int64_t t = blk * kLanes;
                for (std::int64_t l = 0; l < kLanes; ++l) acc[l] += ar[t + l] * br[t + l];
            }
            S tail = S(0);
            for (std::int64_t t = blocks * kLanes; t < k; ++t) tail += ar[t] * br[t];
            const S s01 = acc[0] + acc[1];
            const S s23 = acc[2] + acc[3];
            const S s45 = acc[4] + acc[5];
            const S s67 = acc[6] + acc[7];
            const S dot = ((s01 + s23) + (s45 + s67)) + tail;
            cr[j] = accumulate ? cr[j] + dot : dot;
        }
    }
}

// c (+)= a^T * b, a: k x m, b: k x n. Row tiles of c stay cache-resident
// across the k accumulation passes.
template <typename S>
void gemm_tn(const S* a, const S* b, S* c, std::int64_t m, std::int64_t k, std::int64_t n,
             bool accumulate) {
    if (!accumulate) {
        for (std::int64_t i = 0; i < m * n; ++i) c[i] = S(0);
    }
    constexpr std::int64_t kTile = 64;
    for (std::int64_t i0 = 0; i0 < m; i0 += kTile) {
        const std::int64_t i1 = std::min(m, i0 + kTile);
        for (std::int64_t p = 0; p < k; ++p) {
            const S* ar = a + p * m;
            const S* br = b + p * n;
            for (std::int64_t i = i0; i < i1; ++i) {
                const S av = ar[i];
                S* cr = c + i * n;
                for (std::int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        }
    }
}

}  // namespace ash::detail
