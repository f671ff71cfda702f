#pragma once

#include "cardiofuse/nn/tensor.hpp"

#include <cstdint>
#include <vector>

namespace cardiofuse::nn {

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
};

struct OptimizerState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

/// Zero moments shaped like params.
OptimizerState make_adam(const std::vector<Tensor*>& params, AdamConfig config = {});

/// One bias-corrected ADAM update of every parameter in place.
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               OptimizerState& state);

} // namespace cardiofuse::nn
