#pragma once

#include "cardiofuse/nn/tensor.hpp"

namespace cardiofuse::nn {

struct LossResult {
    double loss = 0.0;
    Tensor grad_logits; ///< (p - y) / batch, the fused softmax+CE gradient
};

/// Mean over the batch of -sum y log(p + 1e-12). probs rows must sum to 1
/// within 1e-5.
LossResult cross_entropy(const Tensor& probs, const Tensor& one_hot);

} // namespace cardiofuse::nn
