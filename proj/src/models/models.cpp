#include "cardiofuse/models.hpp"

#include "cardiofuse/error.hpp"

#include <algorithm>

namespace cardiofuse::models {
namespace {

nn::Stack make_path(const ArchOptions& o) {
    nn::Stack s;
    for (std::size_t c : o.block_channels) {
        s.layers.emplace_back(nn::Conv2d{c, 3, 3, 1, o.dilation, nn::Padding::Same});
        s.layers.emplace_back(nn::MaxPool2d{2, 2});
        s.layers.emplace_back(nn::ReLU{});
    }
    s.layers.emplace_back(nn::Conv2d{o.final_channels, 3, 3, 1, 1, nn::Padding::Same});
    s.layers.emplace_back(nn::Flatten{});
    return s;
}

nn::Stack make_head(const std::vector<std::size_t>& widths, float dropout) {
    nn::Stack s;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (dropout > 0.0f) s.layers.emplace_back(nn::Dropout{dropout});
        s.layers.emplace_back(nn::Dense{widths[i]});
        if (i + 1 < widths.size()) s.layers.emplace_back(nn::ReLU{});
    }
    s.layers.emplace_back(nn::Softmax{});
    return s;
}

nn::Shape init_stack(nn::Stack& s, nn::Shape shape, std::uint64_t seed, const std::string& prefix) {
    s.params.assign(s.layers.size(), {});
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
        Rng rng(seed, "init." + prefix + "." + std::to_string(i));
        s.params[i] = nn::init_params(s.layers[i], shape, rng);
        shape = nn::output_shape(s.layers[i], shape);
    }
    return shape;
}

void check_input(const nn::Shape& s, const char* what) {
    if (s.size() != 3) {
        throw ModelError(std::string(what) + " input must be (C,H,W), got " + nn::shape_string(s));
    }
}

std::string prefix_of(Modality m) { return m == Modality::Pcg ? "path.pcg" : "path.ecg"; }

void collect(const nn::Stack& s, const std::string& prefix,
             std::vector<std::pair<std::string, const nn::Tensor*>>& out) {
    for (std::size_t i = 0; i < s.params.size(); ++i) {
        static const char* kSuffix[] = {"w", "b"};
        for (std::size_t p = 0; p < s.params[i].size(); ++p) {
            out.emplace_back(prefix + "." + std::to_string(i) + "." + kSuffix[p], &s.params[i][p]);
        }
    }
}

nn::Tensor concat_features(const nn::Tensor& a, const nn::Tensor& b) {
    const std::size_t n = a.dim(0), wa = a.dim(1), wb = b.dim(1);
    nn::Tensor out({n, wa + wb});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(a.data() + i * wa, a.data() + (i + 1) * wa, out.data() + i * (wa + wb));
        std::copy(b.data() + i * wb, b.data() + (i + 1) * wb, out.data() + i * (wa + wb) + wa);
    }
    return out;
}

} // namespace

std::string to_string(ModelKind k) {
    switch (k) {
    case ModelKind::PcgOnly:
        return "pcg";
    case ModelKind::EcgOnly:
        return "ecg";
    case ModelKind::Hybrid:
        return "hybrid";
    }
    return "pcg";
}

ModelKind parse_model_kind(const std::string& s) {
    if (s == "pcg") return ModelKind::PcgOnly;
    if (s == "ecg") return ModelKind::EcgOnly;
    if (s == "hybrid") return ModelKind::Hybrid;
    throw ConfigError("unknown model '" + s + "' (expected pcg, ecg or hybrid)");
}

nlohmann::json to_json(const Architecture& a) {
    return {{"kind", to_string(a.kind)},
            {"pcg_input", a.pcg_input},
            {"ecg_input", a.ecg_input},
            {"dropout", a.options.dropout},
            {"dilation", a.options.dilation},
            {"block_channels", a.options.block_channels},
            {"final_channels", a.options.final_channels},
            {"head_widths", a.head_widths}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
    try {
        Architecture a;
        a.kind = parse_model_kind(j.at("kind").get<std::string>());
        a.pcg_input = j.at("pcg_input").get<nn::Shape>();
        a.ecg_input = j.at("ecg_input").get<nn::Shape>();
        a.options.dropout = j.at("dropout").get<float>();
        a.options.dilation = j.at("dilation").get<std::size_t>();
        a.options.block_channels = j.at("block_channels").get<std::vector<std::size_t>>();
        a.options.final_channels = j.at("final_channels").get<std::size_t>();
        a.head_widths = j.at("head_widths").get<std::vector<std::size_t>>();
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("architecture: ") + e.what());
    } catch (const ConfigError& e) {
        throw ModelError(std::string("architecture: ") + e.what());
    }
}

bool ModelGraph::has(Modality m) const {
    return m == Modality::Pcg ? !pcg_path.layers.empty() : !ecg_path.layers.empty();
}

const nn::Stack& ModelGraph::path(Modality m) const { return m == Modality::Pcg ? pcg_path : ecg_path; }
nn::Stack& ModelGraph::path(Modality m) { return m == Modality::Pcg ? pcg_path : ecg_path; }

std::size_t ModelGraph::feature_width(Modality m) const {
    if (!has(m)) return 0;
    nn::Shape s = m == Modality::Pcg ? arch.pcg_input : arch.ecg_input;
    for (const auto& l : path(m).layers) s = nn::output_shape(l, s);
    return nn::shape_size(s);
}

std::vector<std::pair<std::string, const nn::Tensor*>> ModelGraph::named_params() const {
    std::vector<std::pair<std::string, const nn::Tensor*>> out;
    collect(pcg_path, "path.pcg", out);
    collect(ecg_path, "path.ecg", out);
    collect(head, "head", out);
    return out;
}

std::vector<std::pair<std::string, nn::Tensor*>> ModelGraph::named_params() {
    std::vector<std::pair<std::string, nn::Tensor*>> out;
    for (auto& [name, t] : std::as_const(*this).named_params()) out.emplace_back(name, const_cast<nn::Tensor*>(t));
    return out;
}

ModelGraph build(const Architecture& arch, std::uint64_t seed) {
    for (auto& l : make_path(arch.options).layers) nn::validate(l);
    if (arch.head_widths.empty() || arch.head_widths.back() != 2) {
        throw ModelError("head must end in a 2-wide Dense layer");
    }
    ModelGraph g;
    g.arch = arch;
    std::size_t width = 0;
    const bool use_pcg = arch.kind != ModelKind::EcgOnly;
    const bool use_ecg = arch.kind != ModelKind::PcgOnly;
    if (use_pcg) {
        check_input(arch.pcg_input, "PCG");
        g.pcg_path = make_path(arch.options);
        width += nn::shape_size(init_stack(g.pcg_path, arch.pcg_input, seed, "path.pcg"));
    } else {
        g.arch.pcg_input.clear();
    }
    if (use_ecg) {
        check_input(arch.ecg_input, "ECG");
        g.ecg_path = make_path(arch.options);
        width += nn::shape_size(init_stack(g.ecg_path, arch.ecg_input, seed, "path.ecg"));
    } else {
        g.arch.ecg_input.clear();
    }
    g.head = make_head(arch.head_widths, arch.options.dropout);
    init_stack(g.head, nn::Shape{width}, seed, "head");
    return g;
}

ModelGraph build_single(Modality modality, const nn::Shape& input_shape, std::uint64_t seed,
                        const ArchOptions& options) {
    Architecture a;
    a.kind = modality == Modality::Pcg ? ModelKind::PcgOnly : ModelKind::EcgOnly;
    (modality == Modality::Pcg ? a.pcg_input : a.ecg_input) = input_shape;
    a.options = options;
    a.head_widths = {128, 64, 2};
    return build(a, seed);
}

ModelGraph build_hybrid(const nn::Shape& pcg_shape, const nn::Shape& ecg_shape, std::uint64_t seed,
                        const ArchOptions& options) {
    Architecture a;
    a.kind = ModelKind::Hybrid;
    a.pcg_input = pcg_shape;
    a.ecg_input = ecg_shape;
    a.options = options;
    a.head_widths = {256, 64, 2};
    return build(a, seed);
}

nn::Tensor path_features(const ModelGraph& model, Modality modality, const nn::Tensor& input) {
    if (!model.has(modality)) {
        throw ModelError(to_string(model.arch.kind) + " model has no " + std::string(to_string(modality)) + " path");
    }
    Rng rng(0, "infer");
    return nn::stack_forward(model.path(modality), input, nn::Mode::Infer, rng);
}

nn::Tensor forward(const ModelGraph& model, const nn::Tensor* pcg, const nn::Tensor* ecg, nn::Mode mode,
                   Rng* rng) {
    Rng local(0, "infer");
    Rng& r = rng ? *rng : local;
    auto run = [&](Modality m, const nn::Tensor* x) {
        if (!x || x->empty()) {
            throw ModelError(to_string(model.arch.kind) + " model needs a " + std::string(to_string(m)) +
                             " scalogram batch");
        }
        return nn::stack_forward(model.path(m), *x, mode, r);
    };
    nn::Tensor feats;
    if (model.has(Modality::Pcg) && model.has(Modality::Ecg)) {
        auto fp = run(Modality::Pcg, pcg);
        auto fe = run(Modality::Ecg, ecg);
        if (fp.dim(0) != fe.dim(0)) throw ModelError("PCG and ECG batches differ in size");
        feats = concat_features(fp, fe);
    } else if (model.has(Modality::Pcg)) {
        feats = run(Modality::Pcg, pcg);
    } else {
        feats = run(Modality::Ecg, ecg);
    }
    return nn::stack_forward(model.head, std::move(feats), mode, r);
}

std::vector<double> predict(const ModelGraph& model, const std::vector<dataset::LoadedSample>& samples,
                            std::size_t batch_size) {
    std::vector<double> out;
    out.reserve(samples.size());
    std::vector<std::size_t> idx;
    for (std::size_t at = 0; at < samples.size(); at += batch_size) {
        idx.clear();
        for (std::size_t i = at; i < std::min(samples.size(), at + batch_size); ++i) idx.push_back(i);
        const auto b = dataset::make_batch(samples, idx);
        const auto p = forward(model, &b.pcg, &b.ecg);
        for (std::size_t i = 0; i < idx.size(); ++i) out.push_back(static_cast<double>(p[i * 2 + 1]));
    }
    return out;
}

double predict_one(const ModelGraph& model, const dataset::LoadedSample& sample) {
    return predict(model, {sample}, 1).front();
}

std::size_t transplant(ModelGraph& hybrid, const ModelGraph* pcg_source, const ModelGraph* ecg_source) {
    std::size_t copied = 0;
    auto copy_path = [&](Modality m, const ModelGraph* src) {
        if (!src) return;
        const std::string prefix = prefix_of(m);
        if (!hybrid.has(m)) throw ModelError("transplant: destination has no " + prefix + " tensors");
        if (!src->has(m)) throw ModelError("transplant: source has no " + prefix + " tensors");
        auto& dst = hybrid.path(m);
        const auto& from = src->path(m);
        const std::size_t n = std::max(dst.layers.size(), from.layers.size());
        for (std::size_t i = 0; i < n; ++i) {
            const std::string where = prefix + "." + std::to_string(i);
            if (i >= dst.layers.size() || i >= from.layers.size() ||
                dst.layers[i].index() != from.layers[i].index()) {
                throw ModelError("transplant: layer " + where + " differs between source and destination");
            }
            const auto& a = dst.params[i];
            const auto& b = from.params[i];
            for (std::size_t p = 0; p < std::max(a.size(), b.size()); ++p) {
                const std::string name = where + (p == 0 ? ".w" : ".b");
                if (p >= a.size() || p >= b.size() || a[p].shape() != b[p].shape()) {
                    throw ModelError("transplant: geometry mismatch at " + name + ": destination " +
                                     (p < a.size() ? nn::shape_string(a[p].shape()) : "none") + ", source " +
                                     (p < b.size() ? nn::shape_string(b[p].shape()) : "none"));
                }
            }
            if (const auto* cd = std::get_if<nn::Conv2d>(&dst.layers[i])) {
                const auto& cs = std::get<nn::Conv2d>(from.layers[i]);
                if (cd->stride != cs.stride || cd->dilation != cs.dilation || cd->padding != cs.padding) {
                    throw ModelError("transplant: geometry mismatch at " + where +
                                     ".w: stride, dilation or padding differ");
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            dst.params[i] = from.params[i];
            copied += from.params[i].size();
        }
    };
    // A failure on the ECG side must not leave a half-transplanted hybrid.
    ModelGraph backup = hybrid;
    try {
        copy_path(Modality::Pcg, pcg_source);
        copy_path(Modality::Ecg, ecg_source);
    } catch (...) {
        hybrid = std::move(backup);
        throw;
    }
    return copied;
}

} // namespace cardiofuse::models
