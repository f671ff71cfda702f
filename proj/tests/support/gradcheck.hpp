#pragma once

// Central finite-difference checks for layers and stacks. The scalar probe
// is L = sum(R * f(x)) for a fixed random R, evaluated in double, so the
// analytic gradient is the backward pass seeded with R.

#include "cardiofuse/nn/layers.hpp"
#include "cardiofuse/nn/loss.hpp"
#include "cardiofuse/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace cftest {

using cardiofuse::Rng;
namespace nn = cardiofuse::nn;

inline nn::Tensor random_tensor(const nn::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    nn::Tensor t(shape);
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

/// ||a - n|| / max(||a|| + ||n||, floor) over one gradient tensor.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                             double floor = 1e-6) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nb += numeric[i] * numeric[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), floor);
}

inline double probe(const nn::Tensor& y, const nn::Tensor& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * r[i];
    return s;
}

struct GradReport {
    double input_error = 0.0;
    std::vector<double> param_errors;

    double worst() const {
        double w = input_error;
        for (double e : param_errors) w = std::max(w, e);
        return w;
    }
};

/// Checks one layer at (input, params). rng_key fixes the dropout mask so
/// every perturbed forward sees the same one.
inline GradReport check_layer(const nn::LayerSpec& layer, std::vector<nn::Tensor> params, nn::Tensor input,
                              const Rng& mask_rng, Rng& probe_rng, float h = 1e-3f) {
    auto fwd = [&](const nn::Tensor& x, const std::vector<nn::Tensor>& p) {
        Rng r = mask_rng;
        return nn::layer_forward(layer, p, x, nn::Mode::Train, r);
    };
    const auto base = fwd(input, params);
    const nn::Tensor r = random_tensor(base.output.shape(), probe_rng);
    const auto grads = nn::layer_backward(layer, params, base.cache, r, true);

    auto numeric = [&](nn::Tensor& target, auto&& eval) {
        std::vector<double> g(target.size());
        for (std::size_t i = 0; i < target.size(); ++i) {
            const float keep = target[i];
            target[i] = keep + h;
            const double lp = eval();
            target[i] = keep - h;
            const double lm = eval();
            target[i] = keep;
            const double step = (static_cast<double>(keep + h) - static_cast<double>(keep - h));
            g[i] = (lp - lm) / step;
        }
        return g;
    };
    auto as_double = [](const nn::Tensor& t) { return std::vector<double>(t.values().begin(), t.values().end()); };

    GradReport rep;
    rep.input_error = relative_error(
        as_double(grads.grad_input), numeric(input, [&] { return probe(fwd(input, params).output, r); }));
    for (std::size_t k = 0; k < params.size(); ++k) {
        rep.param_errors.push_back(relative_error(
            as_double(grads.param_grads[k]), numeric(params[k], [&] { return probe(fwd(input, params).output, r); })));
    }
    return rep;
}

/// Active pieces of every piecewise-linear layer in a traced forward pass:
/// max-pool argmax positions and ReLU input signs.
inline std::vector<std::uint32_t> kink_signature(const nn::StackTrace& trace) {
    std::vector<std::uint32_t> sig;
    for (const auto& c : trace.caches) {
        sig.insert(sig.end(), c.argmax.begin(), c.argmax.end());
        if (c.kind == nn::LayerSpec(nn::ReLU{}).index()) {
            for (float v : c.input.values()) sig.push_back(v > 0.0f ? 1u : 0u);
        }
    }
    return sig;
}

/// Composed-stack check with the mean cross-entropy on the softmax output.
/// When fused is true the backward pass starts from (p - y) / B below the
/// softmax, exactly as training does; otherwise it runs through the softmax.
/// Coordinates whose +-h perturbation switches a ReLU or max-pool piece are
/// not differentiable there and are left out; skipped counts them.
struct StackGradReport : GradReport {
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

inline StackGradReport check_stack_ce(nn::Stack& stack, nn::Tensor input, const nn::Tensor& one_hot, bool fused,
                                      float h = 1e-3f) {
    Rng infer(0, "gradcheck");
    nn::StackTrace base_trace;
    // The perturbed losses are taken from the logits in double precision so
    // the fp32 rounding of the softmax output does not swamp the difference.
    auto eval = [&](const nn::Tensor& x, nn::StackTrace* tr) {
        Rng r = infer;
        const auto z = nn::stack_forward(stack, x, nn::Mode::Train, r, tr, stack.layers.size() - 1);
        const std::size_t batch = z.dim(0), k = z.dim(1);
        double loss = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            double m = z[b * k];
            for (std::size_t j = 1; j < k; ++j) m = std::max(m, static_cast<double>(z[b * k + j]));
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(z[b * k + j]) - m);
            for (std::size_t j = 0; j < k; ++j) {
                if (one_hot[b * k + j] > 0.0f) loss -= static_cast<double>(z[b * k + j]) - m - std::log(sum);
            }
        }
        return loss / static_cast<double>(batch);
    };
    Rng r = infer;
    const auto probs = nn::stack_forward(stack, input, nn::Mode::Train, r, &base_trace);
    const auto ce = nn::cross_entropy(probs, one_hot);
    const auto base_sig = kink_signature(base_trace);
    auto grads = nn::zero_grads(stack);
    nn::Tensor gin;
    if (fused) {
        gin = nn::stack_backward(stack, base_trace, ce.grad_logits, grads, stack.layers.size() - 1, true);
    } else {
        nn::Tensor dp(probs.shape());
        const double b = static_cast<double>(probs.dim(0));
        for (std::size_t i = 0; i < dp.size(); ++i) {
            dp[i] = one_hot[i] > 0.0f ? static_cast<float>(-1.0 / (b * (probs[i] + 1e-12))) : 0.0f;
        }
        gin = nn::stack_backward(stack, base_trace, dp, grads, stack.layers.size(), true);
    }

    StackGradReport rep;
    auto compare = [&](nn::Tensor& target, const nn::Tensor& analytic) {
        std::vector<double> a, n;
        for (std::size_t i = 0; i < target.size(); ++i) {
            const float keep = target[i];
            nn::StackTrace tp, tm;
            target[i] = keep + h;
            const double lp = eval(input, &tp);
            target[i] = keep - h;
            const double lm = eval(input, &tm);
            target[i] = keep;
            if (kink_signature(tp) != base_sig || kink_signature(tm) != base_sig) {
                ++rep.skipped;
                continue;
            }
            ++rep.checked;
            a.push_back(analytic[i]);
            n.push_back((lp - lm) / (static_cast<double>(keep + h) - static_cast<double>(keep - h)));
        }
        return relative_error(a, n);
    };
    rep.input_error = compare(input, gin);
    for (std::size_t l = 0; l < stack.params.size(); ++l) {
        for (std::size_t k = 0; k < stack.params[l].size(); ++k) {
            rep.param_errors.push_back(compare(stack.params[l][k], grads[l][k]));
        }
    }
    return rep;
}

/// Inputs for kink-bearing layers: values on a shuffled lattice with spacing
/// well above 2h, so no perturbation crosses a ReLU hinge or a max tie.
inline nn::Tensor lattice_tensor(const nn::Shape& shape, Rng& rng, float spacing = 0.01f) {
    nn::Tensor t(shape);
    std::vector<float> v(t.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = (static_cast<float>(i) - static_cast<float>(v.size()) / 2.0f + 0.5f) * spacing;
    }
    cardiofuse::shuffle(std::span<float>(v), rng);
    std::copy(v.begin(), v.end(), t.data());
    return t;
}

struct LayerCase {
    std::string name;
    nn::LayerSpec layer;
    nn::Shape input; ///< per-sample
    std::size_t batch = 2;
    bool lattice = false;
};

/// One small case per layer kind, including the convolution variants.
inline std::vector<LayerCase> layer_cases() {
    return {
        {"conv2d same", nn::Conv2d{3, 3, 3, 1, 1, nn::Padding::Same}, {2, 5, 6}},
        {"conv2d valid", nn::Conv2d{2, 2, 3, 1, 1, nn::Padding::Valid}, {2, 5, 6}},
        {"conv2d strided", nn::Conv2d{2, 3, 3, 2, 1, nn::Padding::Same}, {1, 7, 7}},
        {"conv2d dilated", nn::Conv2d{2, 3, 3, 1, 2, nn::Padding::Same}, {2, 7, 8}},
        {"maxpool2d", nn::MaxPool2d{2, 2}, {2, 5, 6}, 2, true},
        {"relu", nn::ReLU{}, {3, 4}, 2, true},
        {"dropout", nn::Dropout{0.3f}, {3, 5}},
        {"flatten", nn::Flatten{}, {2, 3, 2}},
        {"dense", nn::Dense{4}, {6}},
        {"softmax", nn::Softmax{}, {3}, 3},
    };
}

inline GradReport run_layer_case(const LayerCase& c, std::uint64_t seed) {
    Rng rng(seed, "gradcheck." + c.name);
    nn::Shape full{c.batch};
    full.insert(full.end(), c.input.begin(), c.input.end());
    nn::Tensor x = c.lattice ? lattice_tensor(full, rng) : random_tensor(full, rng);
    Rng init = rng.split("init");
    auto params = nn::init_params(c.layer, c.input, init);
    // nonzero biases so their gradients are exercised on a generic point
    for (std::size_t k = 1; k < params.size(); k += 2) {
        for (auto& v : params[k].values()) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    }
    Rng probe_rng = rng.split("probe");
    return check_layer(c.layer, std::move(params), std::move(x), rng.split("mask"), probe_rng);
}

/// conv -> pool -> relu -> conv -> flatten -> dense -> relu -> dense -> softmax.
inline StackGradReport run_composed_case(std::uint64_t seed, bool fused) {
    Rng rng(seed, "gradcheck.composed");
    nn::Stack s;
    s.layers = {nn::Conv2d{3, 3, 3, 1, 1, nn::Padding::Same},
                nn::MaxPool2d{2, 2},
                nn::ReLU{},
                nn::Conv2d{2, 3, 3, 1, 2, nn::Padding::Same},
                nn::Flatten{},
                nn::Dense{5},
                nn::ReLU{},
                nn::Dense{2},
                nn::Softmax{}};
    nn::Shape shape{1, 6, 8};
    Rng init = rng.split("init");
    for (const auto& l : s.layers) {
        s.params.push_back(nn::init_params(l, shape, init));
        shape = nn::output_shape(l, shape);
    }
    for (auto& lp : s.params) {
        for (std::size_t k = 1; k < lp.size(); k += 2) {
            for (auto& v : lp[k].values()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
        }
    }
    const std::size_t batch = 3;
    nn::Tensor x = random_tensor({batch, 1, 6, 8}, rng);
    nn::Tensor y({batch, 2});
    for (std::size_t b = 0; b < batch; ++b) y[b * 2 + rng.below(2)] = 1.0f;
    return check_stack_ce(s, std::move(x), y, fused);
}

} // namespace cftest
