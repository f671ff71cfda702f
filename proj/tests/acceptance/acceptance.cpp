// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fail.

#include "cardiofuse/cli.hpp"
#include "cardiofuse/dsp.hpp"
#include "cardiofuse/error.hpp"
#include "cardiofuse/evalx.hpp"
#include "cardiofuse/models.hpp"
#include "cardiofuse/rng.hpp"
#include "support/cwt_oracle.hpp"
#include "support/gradcheck.hpp"
#include "support/metric_oracles.hpp"
#include "support/temp_dir.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace cardiofuse;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome gmean_pairs() {
    struct Row {
        double sen, spe, gmean;
    };
    const Row rows[] = {{92.31, 92.86, 92.58}, {87, 86.6, 86.8},       {24.6, 87.8, 46.47},
                        {87.72, 87.5, 87.6},   {94.74, 75, 84.29},     {85.7, 82.6, 84.15},
                        {80.95, 78.26, 79.6},  {56.02, 49.50, 52.65},  {70.16, 81.73, 75.72}};
    std::size_t ok = 0;
    double worst = 0.0;
    for (const auto& r : rows) {
        const double err = std::abs(100.0 * evalx::gmean(r.sen / 100.0, r.spe / 100.0) - r.gmean);
        worst = std::max(worst, err);
        ok += err <= 0.05;
    }
    return {ok == std::size(rows), fmt("%zu/9 pairs within 0.05 pp (worst %.4f)", ok, worst)};
}

Outcome cwt_tones() {
    Rng rng(2, "acceptance.tones");
    const auto cmor_grid = dsp::make_scales(20, 500, 96);
    const auto morlet_grid = dsp::make_scales(7, 130, 96);
    const auto cmor = dsp::WaveletSpec::complex_morlet(1.5, 1.0);
    const auto morlet = dsp::WaveletSpec::morlet();
    const double morlet_fc = 5.0 / (2.0 * std::numbers::pi);
    std::size_t cmor_ok = 0, morlet_ok = 0;
    constexpr int kTones = 20;
    for (int i = 0; i < kTones; ++i) {
        {
            const auto tc = cftest::random_tone(cmor_grid, 1.0, rng);
            const auto x = cftest::tone(tc.f, tc.fs, cftest::tone_length(cmor, cmor_grid), rng.uniform(0, 6.28));
            const auto c = dsp::cwt(x, cmor_grid, cmor);
            cmor_ok += cftest::argmax_scale(c, cftest::tone_margin(cmor, cmor_grid)) ==
                       cftest::nearest_scale(cmor_grid, tc.expected_scale);
        }
        {
            const auto tc = cftest::random_tone(morlet_grid, morlet_fc, rng);
            const auto x = cftest::tone(tc.f, tc.fs, cftest::tone_length(morlet, morlet_grid), rng.uniform(0, 6.28));
            const auto c = dsp::cwt(x, morlet_grid, morlet);
            const auto got = cftest::argmax_scale(c, cftest::tone_margin(morlet, morlet_grid));
            const auto want = cftest::nearest_scale(morlet_grid, tc.expected_scale);
            morlet_ok += (got > want ? got - want : want - got) <= 1;
        }
    }
    return {cmor_ok == kTones && morlet_ok == kTones,
            fmt("cmor exact %zu/%d, morlet within one step %zu/%d", cmor_ok, kTones, morlet_ok, kTones)};
}

Outcome gradients() {
    constexpr std::uint64_t kSeeds = 20;
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0, runs = 0;
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
        for (const auto& c : cftest::layer_cases()) {
            worst = std::max(worst, cftest::run_layer_case(c, seed).worst());
            ++runs;
        }
        for (bool fused : {true, false}) {
            const auto r = cftest::run_composed_case(seed, fused);
            worst = std::max(worst, r.worst());
            checked += r.checked;
            skipped += r.skipped;
            ++runs;
        }
    }
    const bool coverage = skipped * 20 < checked;
    return {worst < 1e-3 && coverage,
            fmt("%zu checks over %llu seeds, worst relative error %.2e, composed coords %zu checked / %zu at kinks",
                runs, static_cast<unsigned long long>(kSeeds), worst, checked, skipped)};
}

Outcome auc_oracle() {
    Rng rng(4, "acceptance.auc");
    std::size_t ok = 0;
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const auto s = cftest::random_scored(rng, 2 + rng.below(49), i % 2 == 0);
        const double d = std::abs(evalx::roc_auc(s).auc - cftest::pair_count_auc(s));
        worst = std::max(worst, d);
        ok += d <= 1e-12;
    }
    return {ok == 200, fmt("%zu/200 sets, max |diff| %.1e", ok, worst)};
}

Outcome threshold_oracle() {
    Rng rng(5, "acceptance.threshold");
    std::size_t ok = 0, dominates = 0;
    for (int i = 0; i < 100; ++i) {
        const auto s = cftest::random_scored(rng, 10 + rng.below(41), i % 3 == 0);
        const double t = evalx::optimal_threshold(s);
        const double g = cftest::gmean_at(s, t);
        const auto dense = cftest::dense_scan(s);
        const auto [lo, hi] = cftest::bracketing_scores(s, t);
        ok += g >= dense.gmean - 1e-12 && dense.threshold >= lo && dense.threshold <= hi;
        dominates += g >= cftest::gmean_at(s, 0.5) - 1e-12;
    }
    return {ok == 100 && dominates == 100,
            fmt("dense-scan match %zu/100, G-mean >= G-mean@0.5 %zu/100", ok, dominates)};
}

Outcome transplant_equivalence() {
    const nn::Shape shape{1, 64, 128};
    const auto pcg = models::build_single(Modality::Pcg, shape, 61);
    const auto ecg = models::build_single(Modality::Ecg, shape, 62);
    auto hybrid = models::build_hybrid(shape, shape, 63);
    const auto copied = models::transplant(hybrid, &pcg, &ecg);
    Rng rng(6, "acceptance.transplant");
    std::size_t ok = 0;
    for (int i = 0; i < 50; ++i) {
        nn::Tensor x({1, 1, 64, 128});
        for (auto& v : x.values()) v = static_cast<float>(rng.uniform());
        const auto a = models::path_features(pcg, Modality::Pcg, x), b = models::path_features(hybrid, Modality::Pcg, x);
        const auto c = models::path_features(ecg, Modality::Ecg, x), d = models::path_features(hybrid, Modality::Ecg, x);
        ok += a.shape() == b.shape() && c.shape() == d.shape() &&
              std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0 &&
              std::memcmp(c.data(), d.data(), c.size() * sizeof(float)) == 0;
    }
    return {ok == 50, fmt("%zu tensors transplanted, %zu/50 scalograms bitwise equal on both paths", copied, ok)};
}

Outcome split_hygiene() {
    std::vector<dataset::RecordLabel> records;
    for (int i = 0; i < 407; ++i) {
        records.push_back({fmt("rec%03d", i), i < 117 ? Label::Normal : Label::Abnormal});
    }
    std::size_t ok = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto s = dataset::split_by_record(records, {}, seed);
        // expand each record into several samples and check no record id
        // appears under two splits
        std::map<std::string, std::set<dataset::Split>> seen;
        for (const auto& r : records) {
            for (int k = 0; k < 3; ++k) seen[r.record_id].insert(s.of(r.record_id));
        }
        bool disjoint = seen.size() == 407;
        for (const auto& [id, sp] : seen) disjoint = disjoint && sp.size() == 1;
        ok += disjoint && s.splits.size() == 407 && s.count(dataset::Split::Train) == 285 &&
              s.count(dataset::Split::Val) == 40 && s.count(dataset::Split::Test) == 82;
    }
    return {ok == 100, fmt("%zu/100 splits disjoint with 285/40/82", ok)};
}

// ---- end-to-end study ----

struct Captured {
    std::ostringstream out, err;
    cli::Io io() { return {out, err}; }
};

struct Variant {
    std::string name;
    double abnormal_fraction = 0.5;
    bool scratch_hybrid = false;
};

struct VariantResult {
    std::map<std::string, json> reports; ///< by model directory name
    std::string error;
};

double gm(const json& report, const char* mode) { return report["modes"][mode]["gmean"].get<double>(); }

VariantResult run_variant(const std::filesystem::path& root, const Variant& v) {
    VariantResult res;
    std::filesystem::create_directories(root);
    auto j = cli::default_config_json();
    j["synthesize"]["abnormal_fraction"] = v.abnormal_fraction;
    cftest::write_text(root / "cardiofuse.json", j.dump(2));
    const auto cfg = cli::load_config(root / "cardiofuse.json");

    auto step = [&](const std::string& what, const std::function<int(cli::Io)>& f) {
        if (!res.error.empty()) return;
        Captured c;
        if (const int code = f(c.io()); code != 0) res.error = what + " exited " + std::to_string(code) + ": " + c.err.str();
    };
    step("synthesize", [&](cli::Io io) { return cli::cmd_synthesize(cfg, io); });
    step("prepare", [&](cli::Io io) { return cli::cmd_prepare(cfg, 3, io); });
    auto train = [&](models::ModelKind kind, bool transplant, const std::string& dir) {
        step("train " + dir, [&](cli::Io io) {
            cli::TrainOptions t;
            t.model = kind;
            t.out_dir = cfg.output_dir / dir;
            if (transplant) {
                t.from_pcg = cfg.output_dir / "pcg/model.cfck";
                t.from_ecg = cfg.output_dir / "ecg/model.cfck";
            }
            return cli::cmd_train(cfg, t, io);
        });
        step("evaluate " + dir, [&](cli::Io io) {
            cli::EvaluateOptions e;
            e.checkpoint = cfg.output_dir / dir / "model.cfck";
            return cli::cmd_evaluate(cfg, e, io);
        });
        if (res.error.empty()) {
            res.reports[dir] = json::parse(cftest::read_text(cfg.output_dir / dir / "eval/report.json"));
        }
    };
    train(models::ModelKind::PcgOnly, false, "pcg");
    train(models::ModelKind::EcgOnly, false, "ecg");
    train(models::ModelKind::Hybrid, true, "hybrid");
    if (v.scratch_hybrid) train(models::ModelKind::Hybrid, false, "hybrid_scratch");
    return res;
}

const Variant kBalanced{"balanced", 0.5, false};
const Variant kImbalanced{"imbalanced", 0.7, true};

Outcome end_to_end(const std::filesystem::path& root, double& seconds) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto bal = run_variant(root / kBalanced.name, kBalanced);
    const auto imb = bal.error.empty() ? run_variant(root / kImbalanced.name, kImbalanced) : VariantResult{};
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!bal.error.empty()) return {false, "balanced study: " + bal.error};
    if (!imb.error.empty()) return {false, "imbalanced study: " + imb.error};

    const auto& r = bal.reports;
    const double hyb = gm(r.at("hybrid"), "record_wise"), pcg = gm(r.at("pcg"), "record_wise"),
                 ecg = gm(r.at("ecg"), "record_wise"), hyb_sw = gm(r.at("hybrid"), "sample_wise");
    const double imb_t = gm(imb.reports.at("hybrid"), "record_wise"),
                 imb_s = gm(imb.reports.at("hybrid_scratch"), "record_wise");
    const bool a = hyb >= 0.90;
    const bool b = hyb > pcg && hyb > ecg;
    const bool c = imb_t >= imb_s - 0.02;
    const bool d = hyb >= hyb_sw - 0.01;
    const bool budget = seconds < 20 * 60;
    return {a && b && c && d && budget,
            fmt("(a) hybrid record-wise G-mean %.2f%s; (b) vs pcg %.2f / ecg %.2f%s; (c) imbalanced transplanted %.2f "
                "vs scratch %.2f%s; (d) sample-wise %.2f%s; %.0f s%s",
                100 * hyb, a ? "" : " FAIL", 100 * pcg, 100 * ecg, b ? "" : " FAIL", 100 * imb_t, 100 * imb_s,
                c ? "" : " FAIL", 100 * hyb_sw, d ? "" : " FAIL", seconds, budget ? "" : " over budget")};
}

std::map<std::string, std::vector<std::uint8_t>> artifacts(const std::filesystem::path& root) {
    std::map<std::string, std::vector<std::uint8_t>> out;
    if (!std::filesystem::exists(root)) return out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
        // stamp.json fingerprints inputs by absolute path, which differs per run directory
        if (!e.is_regular_file() || e.path().filename() == "stamp.json") continue;
        const auto ext = e.path().extension();
        if (ext == ".cfck" || ext == ".json" || ext == ".csv" || ext == ".svg" || ext == ".sgm") {
            out[std::filesystem::relative(e.path(), root).string()] = cftest::read_bytes(e.path());
        }
    }
    return out;
}

Outcome determinism(const std::filesystem::path& first, const std::filesystem::path& second) {
    const auto bal = run_variant(second / kBalanced.name, kBalanced);
    const auto imb = bal.error.empty() ? run_variant(second / kImbalanced.name, kImbalanced) : VariantResult{};
    if (!bal.error.empty() || !imb.error.empty()) return {false, "rerun failed: " + bal.error + imb.error};
    std::size_t files = 0, ckpts = 0, reports = 0, differ = 0;
    std::string first_diff;
    for (const auto& v : {kBalanced, kImbalanced}) {
        const auto a = artifacts(first / v.name), b = artifacts(second / v.name);
        if (a.size() != b.size()) {
            ++differ;
            first_diff = v.name + ": file sets differ";
        }
        for (const auto& [rel, bytes] : a) {
            ++files;
            ckpts += rel.ends_with(".cfck");
            reports += rel.ends_with("report.json");
            const auto it = b.find(rel);
            if (it == b.end() || it->second != bytes) {
                if (differ++ == 0) first_diff = v.name + "/" + rel;
            }
        }
    }
    const bool pass = differ == 0 && ckpts == 7 && reports == 7;
    return {pass, fmt("%zu artifacts compared (%zu checkpoints, %zu reports), %zu differ%s%s", files, ckpts, reports,
                      differ, first_diff.empty() ? "" : ", first: ", first_diff.c_str())};
}

// ---- format round trips ----

Outcome round_trips(const std::filesystem::path& dir) {
    Rng rng(10, "acceptance.formats");
    std::size_t ck_ok = 0, sgm_ok = 0;
    std::filesystem::create_directories(dir);
    for (int i = 0; i < 100; ++i) {
        const std::size_t h = 8 * (1 + rng.below(3)), w = 8 * (1 + rng.below(4));
        models::ArchOptions o;
        o.block_channels = {1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4)};
        o.final_channels = 1 + rng.below(4);
        o.dilation = 1 + rng.below(2);
        o.dropout = rng.below(2) ? 0.25f : 0.0f;
        const auto kind = static_cast<models::ModelKind>(rng.below(3));
        auto m = kind == models::ModelKind::Hybrid
                     ? models::build_hybrid({1, h, w}, {1, h, w}, rng.below(1000), o)
                     : models::build_single(kind == models::ModelKind::PcgOnly ? Modality::Pcg : Modality::Ecg,
                                            {1, h, w}, rng.below(1000), o);
        for (auto& [name, t] : m.named_params()) {
            for (auto& v : t->values()) v = static_cast<float>(rng.normal());
        }
        const auto bytes = models::encode_checkpoint(m);
        const auto path = dir / "m.cfck";
        models::save_checkpoint(m, path);
        const auto back = models::load_checkpoint(path);
        bool same = models::encode_checkpoint(back) == bytes && cftest::read_bytes(path) == bytes;
        const auto pa = m.named_params();
        const auto pb = back.named_params();
        same = same && pa.size() == pb.size();
        for (std::size_t k = 0; same && k < pa.size(); ++k) {
            same = pa[k].first == pb[k].first && pa[k].second->shape() == pb[k].second->shape() &&
                   std::memcmp(pa[k].second->data(), pb[k].second->data(), pa[k].second->size() * sizeof(float)) == 0;
        }
        ck_ok += same;

        dsp::Scalogram s;
        s.rows = 1 + rng.below(64);
        s.cols = 1 + rng.below(128);
        s.data.resize(s.rows * s.cols);
        for (auto& v : s.data) v = static_cast<float>(rng.uniform());
        s.meta = {fmt("rec%d", i), static_cast<int>(rng.below(10)), rng.below(2) ? "pcg" : "ecg", fmt("grid%d", i % 7)};
        const auto sp = dir / "s.sgm";
        dsp::write_sgm(sp, s);
        const auto sb = dsp::read_sgm(sp);
        sgm_ok += sb.rows == s.rows && sb.cols == s.cols && sb.meta.record_id == s.meta.record_id &&
                  sb.meta.window == s.meta.window && sb.meta.modality == s.meta.modality &&
                  sb.meta.grid_id == s.meta.grid_id &&
                  std::memcmp(sb.data.data(), s.data.data(), s.data.size() * sizeof(float)) == 0 &&
                  dsp::encode_sgm(sb) == cftest::read_bytes(sp);
    }
    return {ck_ok == 100 && sgm_ok == 100, fmt(".cfck %zu/100, .sgm %zu/100 bitwise", ck_ok, sgm_ok)};
}

} // namespace

int main() {
    cftest::TempDir work("cf-acceptance");
    bool all = true;
    auto report = [&](int n, const char* title, double budget_s, const std::function<Outcome()>& f) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (budget_s > 0 && s >= budget_s) {
            o.pass = false;
            o.detail += fmt("; %.1f s exceeds the %.0f s budget", s, budget_s);
        }
        all = all && o.pass;
        std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", n, title, o.detail.c_str(), s);
        std::fflush(stdout);
    };
    report(1, "G-mean arithmetic", 1, gmean_pairs);
    report(2, "CWT scale-frequency oracle", 30, cwt_tones);
    report(3, "gradient suite", 60, gradients);
    report(4, "AUC oracle", 0, auc_oracle);
    report(5, "threshold oracle", 0, threshold_oracle);
    report(6, "transplant equivalence", 0, transplant_equivalence);
    report(7, "split hygiene", 0, split_hygiene);
    double study_s = 0.0;
    report(8, "end-to-end synthetic study", 0, [&] { return end_to_end(work / "run1", study_s); });
    report(9, "determinism", 0, [&] { return determinism(work / "run1", work / "run2"); });
    report(10, "format round trips", 0, [&] { return round_trips(work / "formats"); });
    return all ? 0 : 1;
}
