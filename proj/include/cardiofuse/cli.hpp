#pragma once

#include "cardiofuse/dataset.hpp"
#include "cardiofuse/evalx.hpp"
#include "cardiofuse/models.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace cardiofuse::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kModelError = 4, kEvalError = 5 };

struct ModelTrainConfig {
    models::TrainConfig train;
    models::ArchOptions arch;
};

struct SynthConfig {
    std::filesystem::path out_dir;
    std::size_t records = 200;
    double abnormal_fraction = 0.5;
    double duration = 8.0;
    int fs_pcg = 2000;
    int fs_ecg = 500;
    /// Relative weights of abnormal records carrying the cue in both
    /// modalities, PCG only, and ECG only.
    double cue_both = 1.0;
    double cue_pcg_only = 1.0;
    double cue_ecg_only = 1.0;
    double murmur_amplitude = 0.5;
    double noise = 0.02;
};

enum class ThresholdPolicy { Default, OptimalGmean };

std::string to_string(ThresholdPolicy p);
ThresholdPolicy parse_threshold_policy(const std::string& s);

struct PipelineConfig {
    std::filesystem::path base_dir; ///< relative paths resolve against this
    std::uint64_t seed = 0;
    std::filesystem::path manifest;
    std::filesystem::path work_dir;
    std::filesystem::path output_dir;
    int setting = 3;
    bool balance = false;
    dataset::BuildConfig build; ///< out_dir filled per setting
    ModelTrainConfig pcg;
    ModelTrainConfig ecg;
    ModelTrainConfig hybrid;
    ThresholdPolicy threshold_policy = ThresholdPolicy::OptimalGmean;
    std::vector<evalx::EvalMode> modes{evalx::EvalMode::SampleWise, evalx::EvalMode::RecordWise};
    SynthConfig synth;

    std::filesystem::path dataset_dir(int setting) const;
    std::filesystem::path model_dir(models::ModelKind kind) const;
    const ModelTrainConfig& model_config(models::ModelKind kind) const;
};

/// Full-default template written by `init`.
nlohmann::json default_config_json();

/// Parses a config object (missing keys fall back to defaults, unknown keys
/// are rejected). Throws ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

struct Io {
    std::ostream& out;
    std::ostream& err;
};

/// Writes the synthetic corpus and its manifest.
struct SynthSummary {
    std::size_t normal = 0;
    std::size_t abnormal = 0;
    std::filesystem::path manifest;
};
SynthSummary synthesize(const SynthConfig& cfg, std::uint64_t seed);

int cmd_init(const std::filesystem::path& path, Io io, bool force = false);
int cmd_synthesize(const PipelineConfig& cfg, Io io);
int cmd_prepare(const PipelineConfig& cfg, std::optional<int> setting, Io io);

struct TrainOptions {
    models::ModelKind model = models::ModelKind::PcgOnly;
    std::optional<std::filesystem::path> from_pcg;
    std::optional<std::filesystem::path> from_ecg;
    std::optional<std::filesystem::path> out_dir;
    std::optional<int> setting;
};
int cmd_train(const PipelineConfig& cfg, const TrainOptions& opt, Io io);

struct EvaluateOptions {
    std::filesystem::path checkpoint;
    std::optional<std::vector<evalx::EvalMode>> modes;
    std::optional<ThresholdPolicy> policy;
    std::optional<std::filesystem::path> out_dir;
    std::optional<int> setting;
};
int cmd_evaluate(const PipelineConfig& cfg, const EvaluateOptions& opt, Io io);

/// Table-style percentages formatted with two decimals ("87.60").
nlohmann::json table_row(const evalx::MetricsReport& r);
std::string format_report(const std::string& title, const evalx::MetricsReport& r);

/// Full command-line entry point (argv[0] is the program name).
int run(int argc, const char* const* argv, Io io);

} // namespace cardiofuse::cli
