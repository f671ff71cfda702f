#include "cardiofuse/nn/loss.hpp"

#include "cardiofuse/error.hpp"

#include <cmath>

namespace cardiofuse::nn {

LossResult cross_entropy(const Tensor& probs, const Tensor& one_hot) {
    if (probs.rank() != 2 || probs.shape() != one_hot.shape()) {
        throw ModelError("cross_entropy: probs " + shape_string(probs.shape()) + " and targets " +
                         shape_string(one_hot.shape()) + " must both be (batch, classes)");
    }
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    LossResult r;
    r.grad_logits = Tensor(probs.shape());
    double total = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) row += probs[b * k + j];
        if (!(std::abs(row - 1.0) <= 1e-5)) {
            throw ModelError("cross_entropy: probability row " + std::to_string(b) + " sums to " +
                             std::to_string(row));
        }
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t i = b * k + j;
            total -= static_cast<double>(one_hot[i]) * std::log(static_cast<double>(probs[i]) + 1e-12);
            r.grad_logits[i] = (probs[i] - one_hot[i]) / static_cast<float>(n);
        }
    }
    r.loss = total / static_cast<double>(n);
    return r;
}

} // namespace cardiofuse::nn
