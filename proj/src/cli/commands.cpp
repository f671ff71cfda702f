#include "cardiofuse/cli.hpp"

#include "cardiofuse/error.hpp"
#include "cardiofuse/rng.hpp"

#include <fstream>
#include <functional>
#include <set>

#include "CLI11.hpp"

namespace cardiofuse::cli {
namespace {

using models::ModelKind;

int guarded(Io io, const std::function<int()>& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        io.err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write " + p.string());
    f << j.dump(2) << "\n";
    if (!f) throw DataError("short write to " + p.string());
}

std::uint64_t derived_seed(std::uint64_t seed, const std::string& tag) {
    return detail::splitmix64(seed ^ detail::fnv1a(tag));
}

bool needs(ModelKind k, Modality m) {
    return k == ModelKind::Hybrid || (m == Modality::Pcg ? k == ModelKind::PcgOnly : k == ModelKind::EcgOnly);
}

void require_modalities(const std::vector<dataset::SampleEntry>& entries, ModelKind kind, int setting) {
    for (const auto& e : entries) {
        if (needs(kind, Modality::Pcg) && !e.has_pcg()) {
            throw DataError("setting " + std::to_string(setting) + " dataset has no PCG scalograms for a " +
                            models::to_string(kind) + " model");
        }
        if (needs(kind, Modality::Ecg) && !e.has_ecg()) {
            throw DataError("setting " + std::to_string(setting) + " dataset has no ECG scalograms for a " +
                            models::to_string(kind) + " model");
        }
    }
}

std::vector<evalx::ScoredSample> score(const models::ModelGraph& m, const std::vector<dataset::LoadedSample>& s) {
    const auto p = models::predict(m, s);
    std::vector<evalx::ScoredSample> out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out.push_back({s[i].sample_id, s[i].record_id, s[i].label, p[i]});
    return out;
}

std::string count_line(const std::vector<dataset::SampleEntry>& entries, dataset::Split split) {
    std::size_t n[2] = {}, r[2] = {};
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (e.split != split) continue;
        ++n[e.label_index()];
        if (seen.insert(e.record_id).second) ++r[e.label_index()];
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "  %-6s samples normal %5zu abnormal %5zu | records normal %4zu abnormal %4zu",
                  std::string(dataset::to_string(split)).c_str(), n[0], n[1], r[0], r[1]);
    return buf;
}

} // namespace

int cmd_init(const std::filesystem::path& path, Io io, bool force) {
    return guarded(io, [&] {
        if (std::filesystem::exists(path) && !force) {
            throw ConfigError(path.string() + " already exists (use --force to overwrite)");
        }
        write_json(path, default_config_json());
        io.out << "wrote default config to " << path.string() << "\n";
        return kOk;
    });
}

int cmd_synthesize(const PipelineConfig& cfg, Io io) {
    return guarded(io, [&] {
        const auto s = synthesize(cfg.synth, derived_seed(cfg.seed, "synthesize"));
        io.out << "synthesized " << (s.normal + s.abnormal) << " records (" << s.normal << " normal, " << s.abnormal
               << " abnormal)\nmanifest: " << s.manifest.string() << "\n";
        return kOk;
    });
}

int cmd_prepare(const PipelineConfig& cfg, std::optional<int> setting_opt, Io io) {
    return guarded(io, [&] {
        const int setting = setting_opt.value_or(cfg.setting);
        if (setting < 1 || setting > 3) throw ConfigError("setting must be 1, 2 or 3");
        if (!std::filesystem::exists(cfg.manifest)) {
            throw ConfigError("manifest not found: " + cfg.manifest.string());
        }
        const auto manifest = signal_io::read_manifest(cfg.manifest);
        auto build = cfg.build;
        build.out_dir = cfg.dataset_dir(setting);
        const auto idx = dataset::build_setting(setting, manifest, build);
        for (const auto& l : idx.log) io.out << l << "\n";
        std::set<std::string> with_samples;
        for (const auto& e : idx.samples) with_samples.insert(e.record_id);
        io.out << "setting " << setting << ": " << idx.samples.size() << " samples from " << with_samples.size()
               << " of " << manifest.size() << " records -> " << build.out_dir.string() << "\n";
        for (auto s : {dataset::Split::Train, dataset::Split::Val, dataset::Split::Test}) {
            io.out << count_line(idx.samples, s) << "\n";
        }
        return kOk;
    });
}

int cmd_train(const PipelineConfig& cfg, const TrainOptions& opt, Io io) {
    return guarded(io, [&] {
        const int setting = opt.setting.value_or(cfg.setting);
        const auto kind = opt.model;
        if (kind != ModelKind::Hybrid && (opt.from_pcg || opt.from_ecg)) {
            throw ConfigError("--from-pcg/--from-ecg only apply to the hybrid model");
        }
        const auto idx = dataset::load_dataset(cfg.dataset_dir(setting));
        require_modalities(idx.samples, kind, setting);
        auto train_entries = dataset::select(idx.samples, dataset::Split::Train);
        const auto val_entries = dataset::select(idx.samples, dataset::Split::Val);
        if (train_entries.empty()) throw DataError("the training split is empty");
        const std::size_t before = train_entries.size();
        if (cfg.balance) train_entries = dataset::balance(train_entries, derived_seed(cfg.seed, "balance.train"));
        const auto train_set = dataset::load_samples(idx.root, train_entries);
        const auto val_set = dataset::load_samples(idx.root, val_entries);
        io.out << "training " << models::to_string(kind) << " on " << train_set.size() << " samples";
        if (cfg.balance) io.out << " (balanced from " << before << ")";
        io.out << ", validating on " << val_set.size() << "\n";

        const auto& mc = cfg.model_config(kind);
        const nn::Shape shape{1, train_set.front().rows, train_set.front().cols};
        const auto init_seed = derived_seed(cfg.seed, "init." + models::to_string(kind));
        auto model = kind == ModelKind::Hybrid ? models::build_hybrid(shape, shape, init_seed, mc.arch)
                                               : models::build_single(kind == ModelKind::PcgOnly ? Modality::Pcg
                                                                                                  : Modality::Ecg,
                                                                      shape, init_seed, mc.arch);
        std::size_t transplanted = 0;
        if (kind == ModelKind::Hybrid) {
            if (opt.from_pcg || opt.from_ecg) {
                std::optional<models::ModelGraph> src_pcg, src_ecg;
                if (opt.from_pcg) src_pcg = models::load_checkpoint(*opt.from_pcg);
                if (opt.from_ecg) src_ecg = models::load_checkpoint(*opt.from_ecg);
                transplanted = models::transplant(model, src_pcg ? &*src_pcg : nullptr, src_ecg ? &*src_ecg : nullptr);
                io.out << "transplanted " << transplanted << " tensors into the hybrid feature paths ("
                       << (opt.from_pcg ? "pcg" : "") << (opt.from_pcg && opt.from_ecg ? " + " : "")
                       << (opt.from_ecg ? "ecg" : "") << "), all trainable\n";
            } else {
                io.out << "training from scratch (no transplanted weights)\n";
            }
        }

        const auto result = models::train(std::move(model), train_set, val_set, mc.train,
                                          [&](const std::string& line) { io.out << "  " << line << "\n"; });
        const auto out_dir = opt.out_dir.value_or(cfg.model_dir(kind));
        models::save_checkpoint(result.model, out_dir / "model.cfck");
        auto hist = models::history_json(result);
        hist["model"] = models::to_string(kind);
        hist["setting"] = setting;
        hist["train_samples"] = train_set.size();
        hist["val_samples"] = val_set.size();
        hist["transplanted_tensors"] = transplanted;
        write_json(out_dir / "history.json", hist);
        io.out << "best epoch " << result.best_epoch << " (val G-mean " << result.best_val_gmean << ")"
               << (result.stopped_early ? ", stopped early" : "") << "\ncheckpoint: " << (out_dir / "model.cfck").string()
               << "\n";
        return kOk;
    });
}

int cmd_evaluate(const PipelineConfig& cfg, const EvaluateOptions& opt, Io io) {
    return guarded(io, [&] {
        const int setting = opt.setting.value_or(cfg.setting);
        if (!std::filesystem::exists(opt.checkpoint)) {
            throw ModelError("checkpoint not found: " + opt.checkpoint.string());
        }
        const auto model = models::load_checkpoint(opt.checkpoint);
        const auto kind = model.arch.kind;
        const auto idx = dataset::load_dataset(cfg.dataset_dir(setting));
        require_modalities(idx.samples, kind, setting);
        const auto policy = opt.policy.value_or(cfg.threshold_policy);
        const auto modes = opt.modes.value_or(cfg.modes);

        double threshold = 0.5;
        if (policy == ThresholdPolicy::OptimalGmean) {
            const auto val = dataset::load_samples(idx.root, dataset::select(idx.samples, dataset::Split::Val));
            if (val.empty()) throw EvalError("optimal_gmean needs a non-empty validation split");
            threshold = evalx::optimal_threshold(score(model, val));
        }
        auto test_entries = dataset::select(idx.samples, dataset::Split::Test);
        if (cfg.balance && !test_entries.empty()) {
            test_entries = dataset::balance_records(test_entries, derived_seed(cfg.seed, "balance.test"));
        }
        if (test_entries.empty()) throw EvalError("the test split is empty");
        const auto scored = score(model, dataset::load_samples(idx.root, test_entries));

        const auto out_dir = opt.out_dir.value_or(opt.checkpoint.parent_path() / "eval");
        nlohmann::json report = {{"model", models::to_string(kind)},
                                 {"setting", setting},
                                 {"threshold_policy", to_string(policy)},
                                 {"threshold", threshold},
                                 {"threshold_source", policy == ThresholdPolicy::OptimalGmean ? "validation" : "default"},
                                 {"test_samples", scored.size()},
                                 {"balanced_test", cfg.balance}};
        nlohmann::json per_mode = nlohmann::json::object();
        std::vector<evalx::RocSeries> series;
        for (const auto mode : modes) {
            const auto r = evalx::evaluate(scored, threshold, mode);
            auto j = evalx::to_json(r);
            j["table"] = table_row(r);
            per_mode[evalx::to_string(mode)] = j;
            const auto dir = out_dir / evalx::to_string(mode);
            evalx::write_roc_csv(dir / "roc.csv", r.roc);
            evalx::write_text(dir / "roc.svg",
                              evalx::roc_svg({{models::to_string(kind), r.roc, r.auc}},
                                             models::to_string(kind) + " " + evalx::to_string(mode)));
            io.out << format_report(models::to_string(kind), r);
        }
        report["modes"] = per_mode;
        write_json(out_dir / "report.json", report);

        std::string csv = "sample_id,record_id,label,score\n";
        for (const auto& s : scored) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.9g", s.score);
            csv += s.sample_id + "," + s.record_id + "," + std::to_string(s.label) + "," + buf + "\n";
        }
        evalx::write_text(out_dir / "scores.csv", csv);
        io.out << "report: " << (out_dir / "report.json").string() << "\n";
        return kOk;
    });
}

int run(int argc, const char* const* argv, Io io) {
    CLI::App app{"cardiofuse: dual-modality PCG + ECG screening pipeline"};
    app.require_subcommand(1);
    std::string config_path = "cardiofuse.json";
    bool force = false;
    std::optional<int> setting;
    std::string model_name = "pcg";
    std::optional<std::string> from_pcg, from_ecg, out_dir, checkpoint, mode, policy;

    auto* init = app.add_subcommand("init", "Write a config file with every default filled in");
    init->add_option("--config,-c", config_path, "Path of the config to create");
    init->add_flag("--force", force, "Overwrite an existing file");

    auto* synth = app.add_subcommand("synthesize", "Generate a seeded synthetic PCG + ECG corpus");
    auto* prepare = app.add_subcommand("prepare", "Segment records and cache scalograms for a setting");
    auto* train = app.add_subcommand("train", "Train a pcg, ecg or hybrid model");
    auto* evaluate = app.add_subcommand("evaluate", "Score the test split and write reports");
    for (auto* sub : {synth, prepare, train, evaluate}) {
        sub->add_option("--config,-c", config_path, "Pipeline config JSON");
    }
    for (auto* sub : {prepare, train, evaluate}) {
        sub->add_option("--setting", setting, "Dataset setting (1 PCG, 2 ECG, 3 simultaneous)")
            ->check(CLI::Range(1, 3));
    }
    train->add_option("--model,-m", model_name, "pcg, ecg or hybrid")->check(CLI::IsMember({"pcg", "ecg", "hybrid"}));
    train->add_option("--from-pcg", from_pcg, "PCG checkpoint to transplant into the hybrid");
    train->add_option("--from-ecg", from_ecg, "ECG checkpoint to transplant into the hybrid");
    train->add_option("--out", out_dir, "Output directory (default <output_dir>/<model>)");
    evaluate->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate");
    evaluate->add_option("--model,-m", model_name, "Use <output_dir>/<model>/model.cfck")
        ->check(CLI::IsMember({"pcg", "ecg", "hybrid"}));
    evaluate->add_option("--mode", mode, "sample, record or both")->check(CLI::IsMember({"sample", "record", "both"}));
    evaluate->add_option("--threshold-policy", policy, "default_0.5 or optimal_gmean");
    evaluate->add_option("--out", out_dir, "Output directory (default next to the checkpoint)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, io.out, io.err);
        return code == 0 ? kOk : kConfigError;
    }

    if (init->parsed()) return cmd_init(config_path, io, force);

    PipelineConfig cfg;
    try {
        cfg = load_config(config_path);
    } catch (const std::exception& e) {
        io.err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    if (synth->parsed()) return cmd_synthesize(cfg, io);
    if (prepare->parsed()) return cmd_prepare(cfg, setting, io);

    ModelKind kind;
    try {
        kind = models::parse_model_kind(model_name);
    } catch (const std::exception& e) {
        io.err << "error: " << e.what() << "\n";
        return kConfigError;
    }
    if (train->parsed()) {
        TrainOptions t;
        t.model = kind;
        if (from_pcg) t.from_pcg = *from_pcg;
        if (from_ecg) t.from_ecg = *from_ecg;
        if (out_dir) t.out_dir = *out_dir;
        t.setting = setting;
        return cmd_train(cfg, t, io);
    }
    EvaluateOptions ev;
    ev.checkpoint = checkpoint ? std::filesystem::path(*checkpoint) : cfg.model_dir(kind) / "model.cfck";
    if (mode) {
        if (*mode == "sample") ev.modes = std::vector{evalx::EvalMode::SampleWise};
        if (*mode == "record") ev.modes = std::vector{evalx::EvalMode::RecordWise};
        if (*mode == "both") ev.modes = std::vector{evalx::EvalMode::SampleWise, evalx::EvalMode::RecordWise};
    }
    if (policy) {
        try {
            ev.policy = parse_threshold_policy(*policy);
        } catch (const std::exception& e) {
            io.err << "error: " << e.what() << "\n";
            return kConfigError;
        }
    }
    if (out_dir) ev.out_dir = *out_dir;
    ev.setting = setting;
    return cmd_evaluate(cfg, ev, io);
}

} // namespace cardiofuse::cli
