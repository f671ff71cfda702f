#pragma once

#include "cardiofuse/nn/tensor.hpp"
#include "cardiofuse/rng.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cardiofuse::nn {

enum class Padding { Valid, Same };

/// Cross-correlation (no kernel flip), NCHW. Weight (O, C, kh, kw), bias (O).
struct Conv2d {
    std::size_t out_channels = 1;
    std::size_t kernel_h = 3;
    std::size_t kernel_w = 3;
    std::size_t stride = 1;
    std::size_t dilation = 1;
    Padding padding = Padding::Same;
};

/// Window h x w with stride equal to the window; trailing rows/cols dropped.
struct MaxPool2d {
    std::size_t h = 2;
    std::size_t w = 2;
};

struct ReLU {};

/// Inverted dropout: scaled by 1/(1-rate) in training, identity at inference.
struct Dropout {
    float rate = 0.0f;
};

struct Flatten {};

/// y = W x + b with W (out, in), b (out).
struct Dense {
    std::size_t out_features = 1;
};

/// Row-wise softmax over the last axis of a (batch, classes) tensor.
struct Softmax {};

using LayerSpec = std::variant<Conv2d, MaxPool2d, ReLU, Dropout, Flatten, Dense, Softmax>;

enum class Mode { Train, Infer };

std::string_view layer_name(const LayerSpec& layer);
bool has_params(const LayerSpec& layer);
void validate(const LayerSpec& layer);

/// Output shape for a per-sample input shape (batch axis excluded).
Shape output_shape(const LayerSpec& layer, const Shape& input);

/// Parameter shapes for a per-sample input shape; empty for parameter-free layers.
std::vector<Shape> param_shapes(const LayerSpec& layer, const Shape& input);

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
std::vector<Tensor> init_params(const LayerSpec& layer, const Shape& input, Rng& rng);

/// Whatever backward needs from the matching forward call.
struct LayerCache {
    std::size_t kind = 0; ///< LayerSpec::index() of the producing layer
    Shape input_shape;
    Shape output_shape;
    Tensor input;  ///< conv, dense, relu
    Tensor output; ///< softmax
    std::vector<std::uint32_t> argmax; ///< maxpool: flat input index per output
    std::vector<float> mask;           ///< dropout: 0 or 1/(1-rate)
};

struct LayerOutput {
    Tensor output;
    LayerCache cache;
};

struct LayerGrads {
    Tensor grad_input; ///< empty when not requested
    std::vector<Tensor> param_grads;
};

/// params: {weight, bias} for Conv2d/Dense, empty otherwise. Inputs carry a
/// leading batch axis.
LayerOutput layer_forward(const LayerSpec& layer, std::span<const Tensor> params,
                          const Tensor& input, Mode mode, Rng& rng);

LayerGrads layer_backward(const LayerSpec& layer, std::span<const Tensor> params,
                          const LayerCache& cache, const Tensor& grad_output,
                          bool need_input_grad = true);

/// Ordered layer list with its parameters.
struct Stack {
    std::vector<LayerSpec> layers;
    std::vector<std::vector<Tensor>> params;
};

struct StackTrace {
    std::vector<LayerCache> caches;
};

/// Runs layers [0, end) (default: all). Caches are recorded when trace != nullptr.
Tensor stack_forward(const Stack& stack, Tensor input, Mode mode, Rng& rng,
                     StackTrace* trace = nullptr, std::size_t end = SIZE_MAX);

/// Back-propagates through layers [0, end) in reverse, ACCUMULATING parameter
/// gradients into grads (shaped like stack.params). Returns the input
/// gradient, or an empty tensor when need_input_grad is false.
Tensor stack_backward(const Stack& stack, const StackTrace& trace, Tensor grad_output,
                      std::vector<std::vector<Tensor>>& grads, std::size_t end,
                      bool need_input_grad);

/// Zero tensors mirroring stack.params.
std::vector<std::vector<Tensor>> zero_grads(const Stack& stack);

} // namespace cardiofuse::nn
