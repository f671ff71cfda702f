#include "cardiofuse/dataset.hpp"

#include "cardiofuse/error.hpp"
#include "cardiofuse/rng.hpp"
#include "cardiofuse/segmentation.hpp"

#include <exception>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

namespace cardiofuse::dataset {
namespace {

constexpr int kStampVersion = 1;

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    out << text;
    if (!out) throw DataError("short write to " + p.string());
}

std::string file_name_token(const std::string& id) {
    std::string s = id;
    for (auto& c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '-' || c == '_' || c == '.';
        if (!ok) c = '_';
    }
    return s;
}

nlohmann::json wavelet_json(const dsp::WaveletSpec& w) {
    return {{"kind", w.kind == dsp::WaveletKind::MorletReal ? "morlet" : "cmor"},
            {"fb", w.fb},
            {"fc", w.fc},
            {"normalization", w.normalization == dsp::Normalization::UnitArea ? "unit_area" : "unit_energy"}};
}

nlohmann::json file_fingerprint(const std::optional<std::filesystem::path>& p) {
    if (!p) return nullptr;
    const auto bytes = read_file(*p);
    return {{"path", p->string()}, {"bytes", bytes.size()}, {"fnv1a", detail::fnv1a(bytes)}};
}

nlohmann::json stamp_for(int setting, const std::vector<RecordDescriptor>& manifest, const BuildConfig& cfg) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& d : manifest) {
        records.push_back({{"record_id", d.record_id},
                           {"label", std::string(to_string(d.label))},
                           {"fs_pcg", d.fs_pcg},
                           {"fs_ecg", d.fs_ecg},
                           {"pcg", file_fingerprint(d.pcg_path)},
                           {"ecg", file_fingerprint(d.ecg_path)}});
    }
    return {{"version", kStampVersion}, {"setting", setting}, {"config", to_json(cfg)}, {"records", records}};
}

Waveform canonical(const Waveform& w, int fs) { return w.fs == fs ? w : signal_io::resample(w, fs); }

struct RecordResult {
    std::vector<SampleEntry> samples;
    std::string log;
};

struct Plans {
    std::optional<dsp::CwtPlan> pcg;
    std::optional<dsp::CwtPlan> ecg;
};

std::string write_window(const BuildConfig& cfg, const dsp::CwtPlan& plan, const Waveform& w,
                         const segmentation::SegmentWindow& win, int index, const std::string& record_id,
                         Modality m) {
    const auto x = segmentation::extract(w, win);
    dsp::ScalogramMeta meta{record_id, index, std::string(to_string(m)), plan.grid().id()};
    const auto s = dsp::make_scalogram(x, plan, cfg.scalogram.rows, cfg.scalogram.cols, std::move(meta));
    const std::string rel = "sgm/" + file_name_token(record_id) + "_w" + std::to_string(index) + "_" +
                            std::string(to_string(m)) + ".sgm";
    dsp::write_sgm(cfg.out_dir / rel, s);
    return rel;
}

RecordResult build_record(int setting, const RecordDescriptor& d, const BuildConfig& cfg, const Plans& plans,
                          Split split) {
    const bool need_pcg = setting == 1 || setting == 3;
    const bool need_ecg = setting == 2 || setting == 3;
    if (need_pcg && !d.pcg_path) throw DataError("record '" + d.record_id + "' has no PCG signal");
    if (need_ecg && !d.ecg_path) throw DataError("record '" + d.record_id + "' has no ECG signal");

    RecordDescriptor only = d;
    if (!need_pcg) only.pcg_path.reset();
    if (!need_ecg) only.ecg_path.reset();
    const auto rec = signal_io::load_record(only);

    RecordResult r;
    auto make_entry = [&](int k) {
        SampleEntry e;
        e.sample_id = d.record_id + "_w" + std::to_string(k);
        e.record_id = d.record_id;
        e.label = d.label;
        e.split = split;
        return e;
    };

    if (setting == 1) {
        const auto pcg = canonical(*rec.pcg, cfg.fs_pcg);
        const auto peaks = segmentation::pcg_peaks(pcg);
        const auto wins = segmentation::windows_nonoverlap(pcg, peaks, cfg.pcg_window, d.record_id, Modality::Pcg);
        for (std::size_t k = 0; k < wins.size(); ++k) {
            auto e = make_entry(static_cast<int>(k));
            e.pcg_sgm = write_window(cfg, *plans.pcg, pcg, wins[k], static_cast<int>(k), d.record_id, Modality::Pcg);
            r.samples.push_back(std::move(e));
        }
    } else if (setting == 2) {
        const auto ecg = canonical(*rec.ecg, cfg.fs_ecg);
        const auto peaks = segmentation::ecg_rpeaks(ecg);
        if (!peaks.empty()) {
            const auto win = segmentation::window_center_median_peak(ecg, peaks, cfg.ecg_window, d.record_id,
                                                                     Modality::Ecg);
            auto e = make_entry(0);
            e.ecg_sgm = write_window(cfg, *plans.ecg, ecg, win, 0, d.record_id, Modality::Ecg);
            r.samples.push_back(std::move(e));
        }
    } else {
        const auto pcg = canonical(*rec.pcg, cfg.fs_pcg);
        const auto ecg = canonical(*rec.ecg, cfg.fs_ecg);
        const auto pairs = segmentation::windows_simultaneous(pcg, ecg, cfg.pcg_window, d.record_id);
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const int idx = static_cast<int>(k);
            auto e = make_entry(idx);
            e.pcg_sgm = write_window(cfg, *plans.pcg, pcg, pairs[k].pcg, idx, d.record_id, Modality::Pcg);
            e.ecg_sgm = write_window(cfg, *plans.ecg, ecg, pairs[k].ecg, idx, d.record_id, Modality::Ecg);
            r.samples.push_back(std::move(e));
        }
    }
    if (r.samples.empty()) {
        r.log = "record " + d.record_id + ": no usable " +
                std::string(setting == 2 ? "R peaks" : "windows") + ", skipped";
    }
    return r;
}

bool cache_valid(const std::filesystem::path& root, const nlohmann::json& stamp) {
    const auto stamp_path = root / "stamp.json";
    if (!std::filesystem::exists(stamp_path) || !std::filesystem::exists(root / "samples.csv") ||
        !std::filesystem::exists(root / "split.json")) {
        return false;
    }
    try {
        if (nlohmann::json::parse(read_file(stamp_path)) != stamp) return false;
        for (const auto& e : parse_samples_csv(read_file(root / "samples.csv"))) {
            if (e.has_pcg() && !std::filesystem::exists(root / e.pcg_sgm)) return false;
            if (e.has_ecg() && !std::filesystem::exists(root / e.ecg_sgm)) return false;
        }
    } catch (const std::exception&) {
        return false;
    }
    return true;
}

} // namespace

nlohmann::json to_json(const BuildConfig& c) {
    const auto& s = c.scalogram;
    return {{"seed", c.seed},
            {"fs_pcg", c.fs_pcg},
            {"fs_ecg", c.fs_ecg},
            {"pcg_window", c.pcg_window},
            {"ecg_window", c.ecg_window},
            {"ratios", {c.ratios.train, c.ratios.val, c.ratios.test}},
            {"scalogram",
             {{"rows", s.rows},
              {"cols", s.cols},
              {"n_scales", s.n_scales},
              {"pcg_scales", {s.pcg_scale_min, s.pcg_scale_max}},
              {"ecg_scales", {s.ecg_scale_min, s.ecg_scale_max}},
              {"pcg_wavelet", wavelet_json(s.pcg_wavelet)},
              {"ecg_wavelet", wavelet_json(s.ecg_wavelet)}}}};
}

DatasetIndex build_setting(int setting, const std::vector<RecordDescriptor>& manifest, const BuildConfig& cfg) {
    if (setting < 1 || setting > 3) throw ConfigError("setting must be 1, 2 or 3");
    if (cfg.out_dir.empty()) throw ConfigError("dataset output directory is not set");
    if (cfg.pcg_window <= 0 || cfg.ecg_window <= 0) throw ConfigError("window durations must be positive");
    if (cfg.fs_pcg <= 0 || cfg.fs_ecg <= 0) throw ConfigError("canonical rates must be positive");

    DatasetIndex idx;
    idx.root = cfg.out_dir;
    idx.setting = setting;
    const auto stamp = stamp_for(setting, manifest, cfg);
    if (cache_valid(cfg.out_dir, stamp)) {
        idx = load_dataset(cfg.out_dir);
        idx.cache_hit = true;
        idx.log.push_back("cache hit: " + cfg.out_dir.string());
        return idx;
    }

    std::vector<RecordLabel> labels;
    for (const auto& d : manifest) labels.push_back({d.record_id, d.label});
    idx.split = split_by_record(labels, cfg.ratios, cfg.seed);
    for (const auto& w : idx.split.warnings) idx.log.push_back("warning: " + w);

    std::filesystem::create_directories(cfg.out_dir);
    std::filesystem::remove(cfg.out_dir / "stamp.json");
    std::filesystem::remove_all(cfg.out_dir / "sgm");
    std::filesystem::create_directories(cfg.out_dir / "sgm");

    const auto& sc = cfg.scalogram;
    Plans plans;
    if (setting != 2) {
        plans.pcg.emplace(dsp::make_scales(sc.pcg_scale_min, sc.pcg_scale_max, sc.n_scales), sc.pcg_wavelet,
                          segmentation::window_length(cfg.pcg_window, cfg.fs_pcg));
    }
    if (setting != 1) {
        const double ecg_dur = setting == 2 ? cfg.ecg_window : cfg.pcg_window;
        plans.ecg.emplace(dsp::make_scales(sc.ecg_scale_min, sc.ecg_scale_max, sc.n_scales), sc.ecg_wavelet,
                          segmentation::window_length(ecg_dur, cfg.fs_ecg));
    }

    const auto n = static_cast<std::int64_t>(manifest.size());
    std::vector<RecordResult> results(manifest.size());
    std::vector<std::exception_ptr> errors(manifest.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& d = manifest[static_cast<std::size_t>(i)];
        try {
            results[static_cast<std::size_t>(i)] = build_record(setting, d, cfg, plans, idx.split.of(d.record_id));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        if (!errors[i]) continue;
        const std::string ctx = manifest[i].record_id;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const FormatError& e) {
            throw FormatError(std::string(e.what()).find(ctx) == std::string::npos
                                  ? "record '" + ctx + "': " + e.what()
                                  : std::string(e.what()));
        } catch (const DataError& e) {
            throw DataError(std::string(e.what()).find(ctx) == std::string::npos ? "record '" + ctx + "': " + e.what()
                                                                                  : std::string(e.what()));
        }
    }
    for (auto& r : results) {
        if (!r.log.empty()) idx.log.push_back(r.log);
        for (auto& s : r.samples) idx.samples.push_back(std::move(s));
    }

    write_file(cfg.out_dir / "samples.csv", samples_csv(idx.samples));
    auto split_json = to_json(idx.split);
    split_json["setting"] = setting;
    write_file(cfg.out_dir / "split.json", split_json.dump(2) + "\n");
    write_file(cfg.out_dir / "stamp.json", stamp.dump(2) + "\n");
    return idx;
}

DatasetIndex build_setting1(const std::vector<RecordDescriptor>& m, const BuildConfig& c) { return build_setting(1, m, c); }
DatasetIndex build_setting2(const std::vector<RecordDescriptor>& m, const BuildConfig& c) { return build_setting(2, m, c); }
DatasetIndex build_setting3(const std::vector<RecordDescriptor>& m, const BuildConfig& c) { return build_setting(3, m, c); }

DatasetIndex load_dataset(const std::filesystem::path& root) {
    DatasetIndex idx;
    idx.root = root;
    if (!std::filesystem::exists(root / "samples.csv") || !std::filesystem::exists(root / "split.json")) {
        throw DataError("no prepared dataset in " + root.string() + " (run prepare first)");
    }
    idx.samples = parse_samples_csv(read_file(root / "samples.csv"));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(root / "split.json"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("split.json: " + std::string(e.what()));
    }
    idx.split = split_from_json(j);
    idx.setting = j.value("setting", 0);
    return idx;
}

} // namespace cardiofuse::dataset
