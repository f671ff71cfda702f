#pragma once

#include <cstddef>

namespace cardiofuse::nn::gemm {

// Row-major single-precision kernels that ACCUMULATE into C. Every output
// element is owned by one thread and summed in a fixed order, so results do
// not depend on the thread count.

/// C[M x N] += A[M x K] * B[K x N]
void nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);

/// C[M x N] += A^T * B with A stored K x M
void tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);

/// C[M x N] += A * B^T with B stored N x K
void nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);

/// Fixed-order dot product (16 interleaved partial sums).
float dot(const float* a, const float* b, std::size_t k);

} // namespace cardiofuse::nn::gemm
