#include "cardiofuse/cli.hpp"

#include "cardiofuse/error.hpp"
#include "cardiofuse/rng.hpp"

#include <fstream>
#include <sstream>

namespace cardiofuse::cli {
namespace {

using nlohmann::json;

json train_defaults(std::size_t epochs, std::size_t patience) {
    return {{"lr", 0.001}, {"batch_size", 20}, {"epochs", epochs}, {"patience", patience},
            {"dropout", 0.0}, {"dilation", 1}};
}

void reject_unknown(const json& user, const json& defaults, const std::string& where) {
    if (!user.is_object()) return;
    for (const auto& [key, value] : user.items()) {
        if (!defaults.contains(key)) {
            throw ConfigError("unknown config key '" + where + key + "'");
        }
        const auto& d = defaults.at(key);
        if (d.is_object()) {
            if (!value.is_object()) throw ConfigError("config key '" + where + key + "' must be an object");
            reject_unknown(value, d, where + key + ".");
        }
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + where + key + "' has the wrong type");
    }
}

dsp::WaveletSpec wavelet_from(const json& j, const std::string& where, dsp::Normalization norm) {
    const auto kind = get<std::string>(j, "kind", where);
    if (kind == "morlet") return dsp::WaveletSpec::morlet(norm);
    if (kind == "cmor") {
        const auto w = dsp::WaveletSpec::complex_morlet(get<double>(j, "fb", where), get<double>(j, "fc", where), norm);
        try {
            w.validate();
        } catch (const std::exception& e) {
            throw ConfigError(where + e.what());
        }
        return w;
    }
    throw ConfigError("config key '" + where + "kind' must be morlet or cmor");
}

ModelTrainConfig model_from(const json& j, const std::string& name, std::uint64_t seed) {
    const std::string where = "train." + name + ".";
    ModelTrainConfig m;
    m.train.lr = get<float>(j, "lr", where);
    m.train.batch_size = get<std::size_t>(j, "batch_size", where);
    m.train.epochs = get<std::size_t>(j, "epochs", where);
    m.train.patience = get<std::size_t>(j, "patience", where);
    m.train.seed = detail::splitmix64(seed ^ detail::fnv1a("train." + name));
    m.arch.dropout = get<float>(j, "dropout", where);
    m.arch.dilation = get<std::size_t>(j, "dilation", where);
    if (!(m.train.lr > 0.0f)) throw ConfigError(where + "lr must be positive");
    if (m.train.batch_size == 0) throw ConfigError(where + "batch_size must be at least 1");
    if (!(m.arch.dropout >= 0.0f && m.arch.dropout < 1.0f)) throw ConfigError(where + "dropout must be in [0,1)");
    if (m.arch.dilation < 1) throw ConfigError(where + "dilation must be at least 1");
    return m;
}

} // namespace

std::string to_string(ThresholdPolicy p) { return p == ThresholdPolicy::Default ? "default_0.5" : "optimal_gmean"; }

ThresholdPolicy parse_threshold_policy(const std::string& s) {
    if (s == "default_0.5" || s == "default") return ThresholdPolicy::Default;
    if (s == "optimal_gmean" || s == "optimal") return ThresholdPolicy::OptimalGmean;
    throw ConfigError("unknown threshold policy '" + s + "' (expected default_0.5 or optimal_gmean)");
}

std::filesystem::path PipelineConfig::dataset_dir(int s) const { return work_dir / ("setting" + std::to_string(s)); }

std::filesystem::path PipelineConfig::model_dir(models::ModelKind kind) const {
    return output_dir / models::to_string(kind);
}

const ModelTrainConfig& PipelineConfig::model_config(models::ModelKind kind) const {
    switch (kind) {
    case models::ModelKind::PcgOnly:
        return pcg;
    case models::ModelKind::EcgOnly:
        return ecg;
    case models::ModelKind::Hybrid:
        return hybrid;
    }
    return pcg;
}

json default_config_json() {
    return {
        {"seed", 2024},
        {"setting", 3},
        {"balance", false},
        {"paths", {{"manifest", "data/manifest.csv"}, {"work_dir", "work"}, {"output_dir", "out"}}},
        {"signal", {{"fs_pcg", 1000}, {"fs_ecg", 300}}},
        {"windows", {{"pcg_seconds", 3.5}, {"ecg_seconds", 3.3}}},
        {"split", {{"train", 0.7}, {"val", 0.1}, {"test", 0.2}}},
        {"scalogram",
         {{"rows", 64},
          {"cols", 128},
          {"n_scales", 96},
          {"pcg_scales", {7.0, 130.0}},
          {"ecg_scales", {20.0, 500.0}},
          {"normalization", "unit_area"},
          {"pcg_wavelet", {{"kind", "morlet"}, {"fb", 1.5}, {"fc", 1.0}}},
          {"ecg_wavelet", {{"kind", "cmor"}, {"fb", 1.5}, {"fc", 1.0}}}}},
        {"train", {{"pcg", train_defaults(12, 4)}, {"ecg", train_defaults(12, 4)}, {"hybrid", train_defaults(30, 5)}}},
        {"evaluation", {{"threshold_policy", "optimal_gmean"}, {"modes", {"sample_wise", "record_wise"}}}},
        {"synthesize",
         {{"out_dir", "data"},
          {"records", 200},
          {"abnormal_fraction", 0.5},
          {"duration_seconds", 8.0},
          {"fs_pcg", 2000},
          {"fs_ecg", 500},
          {"cue_mix", {{"both", 1.0}, {"pcg_only", 1.0}, {"ecg_only", 1.0}}},
          {"murmur_amplitude", 0.5},
          {"noise", 0.02}}},
    };
}

PipelineConfig config_from_json(const json& user, const std::filesystem::path& base_dir) {
    if (!user.is_object()) throw ConfigError("config must be a JSON object");
    const json defaults = default_config_json();
    reject_unknown(user, defaults, "");
    json j = defaults;
    j.merge_patch(user);

    PipelineConfig c;
    c.base_dir = base_dir;
    c.seed = get<std::uint64_t>(j, "seed", "");
    c.setting = get<int>(j, "setting", "");
    if (c.setting < 1 || c.setting > 3) throw ConfigError("setting must be 1, 2 or 3");
    c.balance = get<bool>(j, "balance", "");

    const auto& paths = j.at("paths");
    c.manifest = resolve(base_dir, get<std::string>(paths, "manifest", "paths."));
    c.work_dir = resolve(base_dir, get<std::string>(paths, "work_dir", "paths."));
    c.output_dir = resolve(base_dir, get<std::string>(paths, "output_dir", "paths."));

    auto& b = c.build;
    b.seed = c.seed;
    b.fs_pcg = get<int>(j.at("signal"), "fs_pcg", "signal.");
    b.fs_ecg = get<int>(j.at("signal"), "fs_ecg", "signal.");
    if (b.fs_pcg <= 0 || b.fs_ecg <= 0) throw ConfigError("signal rates must be positive");
    b.pcg_window = get<double>(j.at("windows"), "pcg_seconds", "windows.");
    b.ecg_window = get<double>(j.at("windows"), "ecg_seconds", "windows.");
    if (!(b.pcg_window > 0) || !(b.ecg_window > 0)) throw ConfigError("window durations must be positive");
    const auto& sp = j.at("split");
    b.ratios = {get<double>(sp, "train", "split."), get<double>(sp, "val", "split."), get<double>(sp, "test", "split.")};
    try {
        dataset::split_counts(10, b.ratios);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("split: ") + e.what());
    }

    const auto& sg = j.at("scalogram");
    auto& s = b.scalogram;
    s.rows = get<std::size_t>(sg, "rows", "scalogram.");
    s.cols = get<std::size_t>(sg, "cols", "scalogram.");
    s.n_scales = get<std::size_t>(sg, "n_scales", "scalogram.");
    if (s.rows == 0 || s.cols == 0 || s.n_scales == 0) throw ConfigError("scalogram geometry must be positive");
    if (s.rows > s.n_scales) throw ConfigError("scalogram.rows cannot exceed scalogram.n_scales");
    const auto pr = get<std::vector<double>>(sg, "pcg_scales", "scalogram.");
    const auto er = get<std::vector<double>>(sg, "ecg_scales", "scalogram.");
    if (pr.size() != 2 || er.size() != 2 || !(pr[0] > 0 && pr[0] <= pr[1]) || !(er[0] > 0 && er[0] <= er[1])) {
        throw ConfigError("scale ranges must be [lo, hi] with 0 < lo <= hi");
    }
    s.pcg_scale_min = pr[0];
    s.pcg_scale_max = pr[1];
    s.ecg_scale_min = er[0];
    s.ecg_scale_max = er[1];
    const auto norm_s = get<std::string>(sg, "normalization", "scalogram.");
    if (norm_s != "unit_area" && norm_s != "unit_energy") {
        throw ConfigError("scalogram.normalization must be unit_area or unit_energy");
    }
    const auto norm = norm_s == "unit_area" ? dsp::Normalization::UnitArea : dsp::Normalization::UnitEnergy;
    s.pcg_wavelet = wavelet_from(sg.at("pcg_wavelet"), "scalogram.pcg_wavelet.", norm);
    s.ecg_wavelet = wavelet_from(sg.at("ecg_wavelet"), "scalogram.ecg_wavelet.", norm);

    c.pcg = model_from(j.at("train").at("pcg"), "pcg", c.seed);
    c.ecg = model_from(j.at("train").at("ecg"), "ecg", c.seed);
    c.hybrid = model_from(j.at("train").at("hybrid"), "hybrid", c.seed);

    const auto& ev = j.at("evaluation");
    c.threshold_policy = parse_threshold_policy(get<std::string>(ev, "threshold_policy", "evaluation."));
    c.modes.clear();
    for (const auto& m : get<std::vector<std::string>>(ev, "modes", "evaluation.")) {
        c.modes.push_back(evalx::parse_eval_mode(m));
    }
    if (c.modes.empty()) throw ConfigError("evaluation.modes must not be empty");

    const auto& sy = j.at("synthesize");
    auto& y = c.synth;
    y.out_dir = resolve(base_dir, get<std::string>(sy, "out_dir", "synthesize."));
    y.records = get<std::size_t>(sy, "records", "synthesize.");
    y.abnormal_fraction = get<double>(sy, "abnormal_fraction", "synthesize.");
    y.duration = get<double>(sy, "duration_seconds", "synthesize.");
    y.fs_pcg = get<int>(sy, "fs_pcg", "synthesize.");
    y.fs_ecg = get<int>(sy, "fs_ecg", "synthesize.");
    const auto& mix = sy.at("cue_mix");
    y.cue_both = get<double>(mix, "both", "synthesize.cue_mix.");
    y.cue_pcg_only = get<double>(mix, "pcg_only", "synthesize.cue_mix.");
    y.cue_ecg_only = get<double>(mix, "ecg_only", "synthesize.cue_mix.");
    y.murmur_amplitude = get<double>(sy, "murmur_amplitude", "synthesize.");
    y.noise = get<double>(sy, "noise", "synthesize.");
    if (y.records == 0) throw ConfigError("synthesize.records must be at least 1");
    if (!(y.abnormal_fraction >= 0 && y.abnormal_fraction <= 1)) {
        throw ConfigError("synthesize.abnormal_fraction must be in [0,1]");
    }
    if (!(y.duration > 0) || y.fs_pcg <= 0 || y.fs_ecg <= 0) {
        throw ConfigError("synthesize duration and rates must be positive");
    }
    if (y.cue_both < 0 || y.cue_pcg_only < 0 || y.cue_ecg_only < 0 ||
        y.cue_both + y.cue_pcg_only + y.cue_ecg_only <= 0) {
        throw ConfigError("synthesize.cue_mix weights must be non-negative with a positive sum");
    }
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j, std::filesystem::absolute(path).parent_path());
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
    if (dynamic_cast<const DataError*>(&e)) return kDataError;
    if (dynamic_cast<const ModelError*>(&e)) return kModelError;
    if (dynamic_cast<const EvalError*>(&e)) return kEvalError;
    if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return kDataError;
    return 1;
}

} // namespace cardiofuse::cli
