#include "cardiofuse/nn/gemm.hpp"

#include <algorithm>
#include <cstdint>

namespace cardiofuse::nn::gemm {
namespace {

constexpr std::size_t kColBlock = 512;
constexpr std::size_t kParallelWork = std::size_t{1} << 18;

// C[i][j] += sum_kk A(i, kk) * B[kk][j]; A(i, kk) = a[i * lda_i + kk * lda_k].
void axpy_rows(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda_i,
               std::size_t lda_k, const float* b, float* c) {
    const auto blocks = static_cast<std::int64_t>((m + 3) / 4);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
    for (std::int64_t blk = 0; blk < blocks; ++blk) {
        const std::size_t i0 = static_cast<std::size_t>(blk) * 4;
        const std::size_t rows = std::min<std::size_t>(4, m - i0);
        for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
            const std::size_t jn = std::min(kColBlock, n - j0);
            if (rows == 4) {
                float* c0 = c + (i0 + 0) * n + j0;
                float* c1 = c + (i0 + 1) * n + j0;
                float* c2 = c + (i0 + 2) * n + j0;
                float* c3 = c + (i0 + 3) * n + j0;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const float a0 = a[(i0 + 0) * lda_i + kk * lda_k];
                    const float a1 = a[(i0 + 1) * lda_i + kk * lda_k];
                    const float a2 = a[(i0 + 2) * lda_i + kk * lda_k];
                    const float a3 = a[(i0 + 3) * lda_i + kk * lda_k];
                    const float* br = b + kk * n + j0;
                    for (std::size_t j = 0; j < jn; ++j) {
                        const float bv = br[j];
                        c0[j] += a0 * bv;
                        c1[j] += a1 * bv;
                        c2[j] += a2 * bv;
                        c3[j] += a3 * bv;
                    }
                }
            } else {
                for (std::size_t r = 0; r < rows; ++r) {
                    float* cr = c + (i0 + r) * n + j0;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const float av = a[(i0 + r) * lda_i + kk * lda_k];
                        const float* br = b + kk * n + j0;
                        for (std::size_t j = 0; j < jn; ++j) cr[j] += av * br[j];
                    }
                }
            }
        }
    }
}

} // namespace

float dot(const float* a, const float* b, std::size_t k) {
    float acc[16] = {};
    std::size_t p = 0;
    for (; p + 16 <= k; p += 16) {
        for (std::size_t l = 0; l < 16; ++l) acc[l] += a[p + l] * b[p + l];
    }
    float tail = 0.0f;
    for (; p < k; ++p) tail += a[p] * b[p];
    for (std::size_t l = 0; l < 8; ++l) acc[l] += acc[l + 8];
    for (std::size_t l = 0; l < 4; ++l) acc[l] += acc[l + 4];
    return ((acc[0] + acc[2]) + (acc[1] + acc[3])) + tail;
}

void nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
    axpy_rows(m, n, k, a, k, 1, b, c);
}

void tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
    axpy_rows(m, n, k, a, 1, m, b, c);
}

void nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) {
    const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
    for (std::int64_t i = 0; i < rows; ++i) {
        const float* ar = a + static_cast<std::size_t>(i) * k;
        float* cr = c + static_cast<std::size_t>(i) * n;
        for (std::size_t j = 0; j < n; ++j) cr[j] += dot(ar, b + j * k, k);
    }
}

} // namespace cardiofuse::nn::gemm
