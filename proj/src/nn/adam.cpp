#include "cardiofuse/nn/adam.hpp"

#include "cardiofuse/error.hpp"

#include <cmath>

namespace cardiofuse::nn {

OptimizerState make_adam(const std::vector<Tensor*>& params, AdamConfig config) {
    OptimizerState s;
    s.config = config;
    for (const Tensor* p : params) {
        s.m.emplace_back(p->shape());
        s.v.emplace_back(p->shape());
    }
    return s;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               OptimizerState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ModelError("adam_step: parameter, gradient and moment counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape() != grads[i]->shape() || params[i]->shape() != state.m[i].shape()) {
            throw ModelError("adam_step: shape mismatch at parameter " + std::to_string(i));
        }
    }
    ++state.step;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step);
    const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta1), t));
    const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta2), t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        float* p = params[i]->data();
        const float* g = grads[i]->data();
        float* m = state.m[i].data();
        float* v = state.v[i].data();
        for (std::size_t k = 0; k < params[i]->size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0f - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0f - c.beta2) * g[k] * g[k];
            const float mh = m[k] / bc1;
            const float vh = v[k] / bc2;
            p[k] -= c.lr * mh / (std::sqrt(vh) + c.epsilon);
        }
    }
}

} // namespace cardiofuse::nn
