#pragma once

#include "cardiofuse/dataset.hpp"
#include "cardiofuse/nn/adam.hpp"
#include "cardiofuse/nn/layers.hpp"
#include "cardiofuse/signal_io.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace cardiofuse::models {

enum class ModelKind { PcgOnly, EcgOnly, Hybrid };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

/// Geometry knobs shared by every path. Dropout sits before each Dense layer
/// when rate > 0; dilation applies to the three block convolutions.
struct ArchOptions {
    float dropout = 0.0f;
    std::size_t dilation = 1;
    std::vector<std::size_t> block_channels{16, 32, 64};
    std::size_t final_channels = 64;
};

struct Architecture {
    ModelKind kind = ModelKind::PcgOnly;
    nn::Shape pcg_input; ///< (C, H, W); empty when the path is absent
    nn::Shape ecg_input;
    ArchOptions options;
    std::vector<std::size_t> head_widths; ///< last entry is 2
};

nlohmann::json to_json(const Architecture& a);
Architecture architecture_from_json(const nlohmann::json& j);

struct ModelGraph {
    Architecture arch;
    nn::Stack pcg_path; ///< empty layers when absent
    nn::Stack ecg_path;
    nn::Stack head;

    bool has(Modality m) const;
    const nn::Stack& path(Modality m) const;
    nn::Stack& path(Modality m);
    /// Flatten width of one path.
    std::size_t feature_width(Modality m) const;

    /// Every parameter with its unique name (path.pcg.*, path.ecg.*, head.*),
    /// in a fixed order.
    std::vector<std::pair<std::string, nn::Tensor*>> named_params();
    std::vector<std::pair<std::string, const nn::Tensor*>> named_params() const;
};

/// Three Conv -> MaxPool -> ReLU blocks (16/32/64 channels, 3x3 same), a
/// 64-channel 3x3 conv and Flatten, then Dense 128 -> 64 -> 2 and Softmax.
ModelGraph build_single(Modality modality, const nn::Shape& input_shape, std::uint64_t seed,
                        const ArchOptions& options = {});

/// Two independent paths whose flatten outputs are concatenated (PCG first)
/// into a shared Dense 256 -> 64 -> 2 head.
ModelGraph build_hybrid(const nn::Shape& pcg_shape, const nn::Shape& ecg_shape, std::uint64_t seed,
                        const ArchOptions& options = {});

/// Builds from a stored architecture with freshly initialized parameters.
ModelGraph build(const Architecture& arch, std::uint64_t seed);

/// Output of one path up to and including Flatten, inference mode.
nn::Tensor path_features(const ModelGraph& model, Modality modality, const nn::Tensor& input);

/// Softmax probabilities (B, 2). Single-modality models ignore the other input.
nn::Tensor forward(const ModelGraph& model, const nn::Tensor* pcg, const nn::Tensor* ecg,
                   nn::Mode mode = nn::Mode::Infer, Rng* rng = nullptr);

/// Abnormal-class probability per sample, batched inference.
std::vector<double> predict(const ModelGraph& model, const std::vector<dataset::LoadedSample>& samples,
                            std::size_t batch_size = 32);
double predict_one(const ModelGraph& model, const dataset::LoadedSample& sample);

/// Copies every path.* tensor the sources provide into the hybrid. Sources
/// may be single-modality models or hybrids. Returns the number of tensors copied.
std::size_t transplant(ModelGraph& hybrid, const ModelGraph* pcg_source, const ModelGraph* ecg_source);

struct TrainConfig {
    float lr = 1e-3f;
    std::size_t batch_size = 20;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    /// Stop after this many epochs without a validation improvement; 0 disables.
    std::size_t patience = 0;
};

struct EpochRecord {
    std::size_t epoch = 0; ///< 1-based
    double train_loss = 0.0;
    double val_gmean = 0.0;
    bool improved = false;
};

struct TrainResult {
    ModelGraph model; ///< best-by-validation snapshot
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0; ///< 0 when no epoch ran
    double best_val_gmean = 0.0;
    bool stopped_early = false;
};

using TrainLogger = std::function<void(const std::string&)>;

/// Mini-batch ADAM on the softmax cross-entropy, keeping the snapshot with the
/// best validation G-mean at threshold 0.5 (ties keep the earlier epoch).
TrainResult train(ModelGraph model, const std::vector<dataset::LoadedSample>& train_set,
                  const std::vector<dataset::LoadedSample>& val_set, const TrainConfig& cfg,
                  const TrainLogger& log = {});

nlohmann::json history_json(const TrainResult& r);

/// "CFCK", u32 version, length-prefixed architecture JSON, then named fp32 tensors.
std::vector<std::uint8_t> encode_checkpoint(const ModelGraph& model);
ModelGraph decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_checkpoint(const std::filesystem::path& path);

} // namespace cardiofuse::models
