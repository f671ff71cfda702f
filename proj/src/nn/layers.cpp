#include "cardiofuse/nn/layers.hpp"

#include "cardiofuse/error.hpp"
#include "cardiofuse/nn/gemm.hpp"

#include <algorithm>
#include <cmath>

namespace cardiofuse::nn {
namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void shape_error(std::string_view layer, const std::string& expected,
                             const Shape& actual) {
    throw ModelError(std::string(layer) + ": expected input " + expected + ", got " +
                     shape_string(actual));
}

struct ConvGeom {
    std::size_t c, h, w, o, kh, kw, stride, dil, oh, ow, pad_t, pad_l;
    std::size_t ckk() const { return c * kh * kw; }
    std::size_t positions() const { return oh * ow; }
};

ConvGeom conv_geom(const Conv2d& l, const Shape& in) {
    if (in.size() != 3) shape_error("conv2d", "(C,H,W)", in);
    ConvGeom g{};
    g.c = in[0];
    g.h = in[1];
    g.w = in[2];
    g.o = l.out_channels;
    g.kh = l.kernel_h;
    g.kw = l.kernel_w;
    g.stride = l.stride;
    g.dil = l.dilation;
    const std::size_t eff_h = g.dil * (g.kh - 1) + 1;
    const std::size_t eff_w = g.dil * (g.kw - 1) + 1;
    if (l.padding == Padding::Valid) {
        if (g.h < eff_h || g.w < eff_w) {
            shape_error("conv2d", "spatial dims >= dilated kernel " + std::to_string(eff_h) + "x" +
                                      std::to_string(eff_w),
                        in);
        }
        g.oh = (g.h - eff_h) / g.stride + 1;
        g.ow = (g.w - eff_w) / g.stride + 1;
        g.pad_t = g.pad_l = 0;
    } else {
        g.oh = (g.h + g.stride - 1) / g.stride;
        g.ow = (g.w + g.stride - 1) / g.stride;
        const std::size_t need_h = (g.oh - 1) * g.stride + eff_h;
        const std::size_t need_w = (g.ow - 1) * g.stride + eff_w;
        g.pad_t = need_h > g.h ? (need_h - g.h) / 2 : 0;
        g.pad_l = need_w > g.w ? (need_w - g.w) / 2 : 0;
    }
    return g;
}

// cols[(ci*kh + i)*kw + j][oh*OW + ow] = x[ci][oh*s - pad_t + i*d][ow*s - pad_l + j*d]
void im2col(const float* x, const ConvGeom& g, float* cols) {
    const std::size_t p = g.positions();
    for (std::size_t ci = 0; ci < g.c; ++ci) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                float* row = cols + ((ci * g.kh + i) * g.kw + j) * p;
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i * g.dil) -
                                    static_cast<std::ptrdiff_t>(g.pad_t);
                    float* dst = row + oy * g.ow;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                        std::fill(dst, dst + g.ow, 0.0f);
                        continue;
                    }
                    const float* src = x + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j * g.dil) -
                                        static_cast<std::ptrdiff_t>(g.pad_l);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                                      ? 0.0f
                                      : src[static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

void col2im(const float* cols, const ConvGeom& g, float* dx) {
    const std::size_t p = g.positions();
    for (std::size_t ci = 0; ci < g.c; ++ci) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                const float* row = cols + ((ci * g.kh + i) * g.kw + j) * p;
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i * g.dil) -
                                    static_cast<std::ptrdiff_t>(g.pad_t);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    float* dst = dx + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
                    const float* src = row + oy * g.ow;
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j * g.dil) -
                                        static_cast<std::ptrdiff_t>(g.pad_l);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) {
                            dst[static_cast<std::size_t>(ix)] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

Shape per_sample(const Tensor& t) {
    if (t.rank() < 2) throw ModelError("layer input needs a batch axis, got " + shape_string(t.shape()));
    return Shape(t.shape().begin() + 1, t.shape().end());
}

Shape with_batch(std::size_t n, const Shape& s) {
    Shape out{n};
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

void check_params(std::string_view name, std::span<const Tensor> params,
                  const std::vector<Shape>& expected) {
    if (params.size() != expected.size()) {
        throw ModelError(std::string(name) + ": expected " + std::to_string(expected.size()) +
                         " parameter tensors, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (params[i].shape() != expected[i]) {
            throw ModelError(std::string(name) + ": parameter " + std::to_string(i) +
                             " expected shape " + shape_string(expected[i]) + ", got " +
                             shape_string(params[i].shape()));
        }
    }
}

LayerOutput conv_forward(const Conv2d& l, std::span<const Tensor> params, const Tensor& in) {
    const Shape s = per_sample(in);
    const ConvGeom g = conv_geom(l, s);
    check_params("conv2d", params, param_shapes(l, s));
    const std::size_t n = in.dim(0);
    const std::size_t p = g.positions();
    const std::size_t in_stride = g.c * g.h * g.w;
    Tensor out({n, g.o, g.oh, g.ow});
    const float* w = params[0].data();
    const float* b = params[1].data();
    const auto batch = static_cast<std::int64_t>(n);
#pragma omp parallel
    {
        std::vector<float> cols(g.ckk() * p);
#pragma omp for schedule(static)
        for (std::int64_t si = 0; si < batch; ++si) {
            const auto sample = static_cast<std::size_t>(si);
            im2col(in.data() + sample * in_stride, g, cols.data());
            float* y = out.data() + sample * g.o * p;
            for (std::size_t o = 0; o < g.o; ++o) std::fill(y + o * p, y + (o + 1) * p, b[o]);
            gemm::nn(g.o, p, g.ckk(), w, cols.data(), y);
        }
    }
    LayerOutput r{std::move(out), {}};
    r.cache.input = in;
    return r;
}

LayerGrads conv_backward(const Conv2d& l, std::span<const Tensor> params, const LayerCache& cache,
                         const Tensor& dy, bool need_input) {
    const ConvGeom g = conv_geom(l, Shape(cache.input_shape.begin() + 1, cache.input_shape.end()));
    const std::size_t n = cache.input_shape[0];
    const std::size_t p = g.positions();
    const std::size_t in_stride = g.c * g.h * g.w;
    LayerGrads r;
    Tensor dw(params[0].shape());
    Tensor db(params[1].shape());
    if (need_input) r.grad_input = Tensor(cache.input_shape);
    std::vector<float> cols(g.ckk() * p);
    std::vector<float> dcols(need_input ? g.ckk() * p : 0);
    for (std::size_t sample = 0; sample < n; ++sample) {
        const float* dys = dy.data() + sample * g.o * p;
        im2col(cache.input.data() + sample * in_stride, g, cols.data());
        gemm::nt(g.o, g.ckk(), p, dys, cols.data(), dw.data());
        for (std::size_t o = 0; o < g.o; ++o) {
            float acc = 0.0f;
            for (std::size_t q = 0; q < p; ++q) acc += dys[o * p + q];
            db[o] += acc;
        }
        if (need_input) {
            std::fill(dcols.begin(), dcols.end(), 0.0f);
            gemm::tn(g.ckk(), p, g.o, params[0].data(), dys, dcols.data());
            col2im(dcols.data(), g, r.grad_input.data() + sample * in_stride);
        }
    }
    r.param_grads.push_back(std::move(dw));
    r.param_grads.push_back(std::move(db));
    return r;
}

LayerOutput pool_forward(const MaxPool2d& l, const Tensor& in) {
    const Shape s = per_sample(in);
    const Shape os = output_shape(l, s);
    const std::size_t n = in.dim(0), c = s[0], h = s[1], w = s[2], oh = os[1], ow = os[2];
    Tensor out(with_batch(n, os));
    LayerOutput r{Tensor{}, {}};
    r.cache.argmax.resize(out.size());
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const float* x = in.data() + plane * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (oy * l.h) * w + ox * l.w;
                for (std::size_t i = 0; i < l.h; ++i) {
                    for (std::size_t j = 0; j < l.w; ++j) {
                        const std::size_t idx = (oy * l.h + i) * w + ox * l.w + j;
                        if (x[idx] > x[best]) best = idx;
                    }
                }
                const std::size_t o = (plane * oh + oy) * ow + ox;
                out[o] = x[best];
                r.cache.argmax[o] = static_cast<std::uint32_t>(plane * h * w + best);
            }
        }
    }
    r.output = std::move(out);
    return r;
}

LayerOutput softmax_forward(const Tensor& in) {
    if (in.rank() != 2) shape_error("softmax", "(batch, classes)", in.shape());
    const std::size_t n = in.dim(0), k = in.dim(1);
    Tensor out(in.shape());
    for (std::size_t b = 0; b < n; ++b) {
        const float* x = in.data() + b * k;
        float* y = out.data() + b * k;
        const float mx = *std::max_element(x, x + k);
        float sum = 0.0f;
        for (std::size_t j = 0; j < k; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (std::size_t j = 0; j < k; ++j) y[j] /= sum;
    }
    LayerOutput r{out, {}};
    r.cache.output = std::move(out);
    return r;
}

LayerOutput dense_forward(const Dense& l, std::span<const Tensor> params, const Tensor& in) {
    if (in.rank() != 2) shape_error("dense", "(batch, features)", in.shape());
    check_params("dense", params, param_shapes(l, per_sample(in)));
    const std::size_t n = in.dim(0), fin = in.dim(1), fout = l.out_features;
    Tensor out({n, fout});
    for (std::size_t b = 0; b < n; ++b) {
        std::copy(params[1].data(), params[1].data() + fout, out.data() + b * fout);
    }
    gemm::nt(n, fout, fin, in.data(), params[0].data(), out.data());
    LayerOutput r{std::move(out), {}};
    r.cache.input = in;
    return r;
}

LayerGrads dense_backward(const Dense& l, std::span<const Tensor> params, const LayerCache& cache,
                          const Tensor& dy, bool need_input) {
    const std::size_t n = cache.input_shape[0], fin = cache.input_shape[1], fout = l.out_features;
    LayerGrads r;
    Tensor dw(params[0].shape());
    Tensor db(params[1].shape());
    gemm::tn(fout, fin, n, dy.data(), cache.input.data(), dw.data());
    for (std::size_t o = 0; o < fout; ++o) {
        float acc = 0.0f;
        for (std::size_t b = 0; b < n; ++b) acc += dy[b * fout + o];
        db[o] = acc;
    }
    if (need_input) {
        r.grad_input = Tensor(cache.input_shape);
        gemm::nn(n, fin, fout, dy.data(), params[0].data(), r.grad_input.data());
    }
    r.param_grads.push_back(std::move(dw));
    r.param_grads.push_back(std::move(db));
    return r;
}

} // namespace

std::string_view layer_name(const LayerSpec& layer) {
    return std::visit(overloaded{[](const Conv2d&) { return std::string_view("conv2d"); },
                                 [](const MaxPool2d&) { return std::string_view("maxpool2d"); },
                                 [](const ReLU&) { return std::string_view("relu"); },
                                 [](const Dropout&) { return std::string_view("dropout"); },
                                 [](const Flatten&) { return std::string_view("flatten"); },
                                 [](const Dense&) { return std::string_view("dense"); },
                                 [](const Softmax&) { return std::string_view("softmax"); }},
                      layer);
}

bool has_params(const LayerSpec& layer) {
    return std::holds_alternative<Conv2d>(layer) || std::holds_alternative<Dense>(layer);
}

void validate(const LayerSpec& layer) {
    std::visit(overloaded{[](const Conv2d& l) {
                              if (l.out_channels == 0 || l.kernel_h == 0 || l.kernel_w == 0 ||
                                  l.stride == 0 || l.dilation == 0) {
                                  throw ModelError("conv2d: dims, stride and dilation must be >= 1");
                              }
                          },
                          [](const MaxPool2d& l) {
                              if (l.h == 0 || l.w == 0) throw ModelError("maxpool2d: window must be >= 1");
                          },
                          [](const Dropout& l) {
                              if (!(l.rate >= 0.0f && l.rate < 1.0f)) {
                                  throw ModelError("dropout: rate must be in [0, 1)");
                              }
                          },
                          [](const Dense& l) {
                              if (l.out_features == 0) throw ModelError("dense: out_features must be >= 1");
                          },
                          [](const auto&) {}},
               layer);
}

Shape output_shape(const LayerSpec& layer, const Shape& in) {
    validate(layer);
    return std::visit(
        overloaded{[&](const Conv2d& l) {
                       const auto g = conv_geom(l, in);
                       return Shape{g.o, g.oh, g.ow};
                   },
                   [&](const MaxPool2d& l) {
                       if (in.size() != 3 || in[1] < l.h || in[2] < l.w) {
                           shape_error("maxpool2d", "(C,H,W) with H,W >= window", in);
                       }
                       return Shape{in[0], in[1] / l.h, in[2] / l.w};
                   },
                   [&](const Flatten&) { return Shape{shape_size(in)}; },
                   [&](const Dense& l) {
                       if (in.size() != 1) shape_error("dense", "(features)", in);
                       return Shape{l.out_features};
                   },
                   [&](const Softmax&) {
                       if (in.size() != 1) shape_error("softmax", "(classes)", in);
                       return in;
                   },
                   [&](const auto&) { return in; }},
        layer);
}

std::vector<Shape> param_shapes(const LayerSpec& layer, const Shape& in) {
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
        const auto g = conv_geom(*c, in);
        return {Shape{g.o, g.c, g.kh, g.kw}, Shape{g.o}};
    }
    if (const auto* d = std::get_if<Dense>(&layer)) {
        if (in.size() != 1) shape_error("dense", "(features)", in);
        return {Shape{d->out_features, in[0]}, Shape{d->out_features}};
    }
    return {};
}

std::vector<Tensor> init_params(const LayerSpec& layer, const Shape& in, Rng& rng) {
    validate(layer);
    const auto shapes = param_shapes(layer, in);
    if (shapes.empty()) return {};
    Tensor w(shapes[0]);
    const std::size_t fan_in = shape_size(shapes[0]) / shapes[0][0];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w.values()) v = static_cast<float>(rng.uniform(-bound, bound));
    return {std::move(w), Tensor(shapes[1])};
}

LayerOutput layer_forward(const LayerSpec& layer, std::span<const Tensor> params,
                          const Tensor& input, Mode mode, Rng& rng) {
    validate(layer);
    if (!input.all_finite()) {
        throw ModelError(std::string(layer_name(layer)) + ": non-finite input");
    }
    LayerOutput r = std::visit(
        overloaded{
            [&](const Conv2d& l) { return conv_forward(l, params, input); },
            [&](const MaxPool2d& l) { return pool_forward(l, input); },
            [&](const ReLU&) {
                Tensor out(input.shape());
                for (std::size_t i = 0; i < input.size(); ++i) out[i] = std::max(0.0f, input[i]);
                LayerOutput o{std::move(out), {}};
                o.cache.input = input;
                return o;
            },
            [&](const Dropout& l) {
                LayerOutput o{input, {}};
                if (mode == Mode::Train && l.rate > 0.0f) {
                    const float keep_scale = 1.0f / (1.0f - l.rate);
                    o.cache.mask.resize(input.size());
                    for (std::size_t i = 0; i < input.size(); ++i) {
                        o.cache.mask[i] = rng.uniform() >= l.rate ? keep_scale : 0.0f;
                        o.output[i] = input[i] * o.cache.mask[i];
                    }
                }
                return o;
            },
            [&](const Flatten&) {
                return LayerOutput{input.reshaped({input.dim(0), input.size() / input.dim(0)}), {}};
            },
            [&](const Dense& l) { return dense_forward(l, params, input); },
            [&](const Softmax&) { return softmax_forward(input); }},
        layer);
    if (!has_params(layer) && !params.empty()) {
        throw ModelError(std::string(layer_name(layer)) + ": takes no parameters");
    }
    r.cache.kind = layer.index();
    r.cache.input_shape = input.shape();
    r.cache.output_shape = r.output.shape();
    return r;
}

LayerGrads layer_backward(const LayerSpec& layer, std::span<const Tensor> params,
                          const LayerCache& cache, const Tensor& dy, bool need_input_grad) {
    if (cache.kind != layer.index()) {
        throw ModelError(std::string(layer_name(layer)) + ": cache was produced by a different layer kind");
    }
    if (dy.shape() != cache.output_shape) {
        throw ModelError(std::string(layer_name(layer)) + ": grad_output shape " +
                         shape_string(dy.shape()) + " does not match forward output " +
                         shape_string(cache.output_shape));
    }
    if (has_params(layer)) {
        check_params(layer_name(layer), params,
                     param_shapes(layer, Shape(cache.input_shape.begin() + 1, cache.input_shape.end())));
    }
    return std::visit(
        overloaded{
            [&](const Conv2d& l) { return conv_backward(l, params, cache, dy, need_input_grad); },
            [&](const MaxPool2d&) {
                LayerGrads g;
                if (!need_input_grad) return g;
                g.grad_input = Tensor(cache.input_shape);
                for (std::size_t o = 0; o < dy.size(); ++o) g.grad_input[cache.argmax[o]] += dy[o];
                return g;
            },
            [&](const ReLU&) {
                LayerGrads g;
                if (!need_input_grad) return g;
                g.grad_input = Tensor(cache.input_shape);
                for (std::size_t i = 0; i < dy.size(); ++i) {
                    g.grad_input[i] = cache.input[i] > 0.0f ? dy[i] : 0.0f;
                }
                return g;
            },
            [&](const Dropout&) {
                LayerGrads g;
                if (!need_input_grad) return g;
                g.grad_input = dy;
                if (!cache.mask.empty()) {
                    for (std::size_t i = 0; i < dy.size(); ++i) g.grad_input[i] *= cache.mask[i];
                }
                return g;
            },
            [&](const Flatten&) {
                LayerGrads g;
                if (need_input_grad) g.grad_input = dy.reshaped(cache.input_shape);
                return g;
            },
            [&](const Dense& l) { return dense_backward(l, params, cache, dy, need_input_grad); },
            [&](const Softmax&) {
                LayerGrads g;
                if (!need_input_grad) return g;
                const std::size_t n = dy.dim(0), k = dy.dim(1);
                g.grad_input = Tensor(dy.shape());
                for (std::size_t b = 0; b < n; ++b) {
                    const float* y = cache.output.data() + b * k;
                    const float* d = dy.data() + b * k;
                    float s = 0.0f;
                    for (std::size_t j = 0; j < k; ++j) s += d[j] * y[j];
                    for (std::size_t j = 0; j < k; ++j) g.grad_input[b * k + j] = y[j] * (d[j] - s);
                }
                return g;
            }},
        layer);
}

Tensor stack_forward(const Stack& stack, Tensor input, Mode mode, Rng& rng, StackTrace* trace,
                     std::size_t end) {
    end = std::min(end, stack.layers.size());
    if (trace) {
        trace->caches.clear();
        trace->caches.reserve(end);
    }
    for (std::size_t i = 0; i < end; ++i) {
        auto r = layer_forward(stack.layers[i], stack.params[i], input, mode, rng);
        input = std::move(r.output);
        if (trace) trace->caches.push_back(std::move(r.cache));
    }
    return input;
}

Tensor stack_backward(const Stack& stack, const StackTrace& trace, Tensor grad,
                      std::vector<std::vector<Tensor>>& grads, std::size_t end,
                      bool need_input_grad) {
    end = std::min(end, trace.caches.size());
    for (std::size_t i = end; i-- > 0;) {
        const bool need = i > 0 || need_input_grad;
        auto g = layer_backward(stack.layers[i], stack.params[i], trace.caches[i], grad, need);
        for (std::size_t p = 0; p < g.param_grads.size(); ++p) {
            auto& acc = grads[i][p];
            const auto& src = g.param_grads[p];
            for (std::size_t k = 0; k < src.size(); ++k) acc[k] += src[k];
        }
        grad = std::move(g.grad_input);
    }
    return grad;
}

std::vector<std::vector<Tensor>> zero_grads(const Stack& stack) {
    std::vector<std::vector<Tensor>> out(stack.params.size());
    for (std::size_t i = 0; i < stack.params.size(); ++i) {
        for (const auto& p : stack.params[i]) out[i].emplace_back(p.shape());
    }
    return out;
}

} // namespace cardiofuse::nn
