#include "cardiofuse/cli.hpp"

#include "cardiofuse/error.hpp"
#include "cardiofuse/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace cardiofuse::cli {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class Cue { None, Both, PcgOnly, EcgOnly };

void add_gaussian(std::vector<double>& x, int fs, double center, double amp, double sigma) {
    const auto lo = static_cast<std::int64_t>(std::floor((center - 5 * sigma) * fs));
    const auto hi = static_cast<std::int64_t>(std::ceil((center + 5 * sigma) * fs));
    for (auto i = std::max<std::int64_t>(lo, 0); i <= hi && i < static_cast<std::int64_t>(x.size()); ++i) {
        const double t = static_cast<double>(i) / fs - center;
        x[static_cast<std::size_t>(i)] += amp * std::exp(-0.5 * t * t / (sigma * sigma));
    }
}

void add_burst(std::vector<double>& x, int fs, double center, double amp, double sigma, double freq, double phase) {
    const auto lo = static_cast<std::int64_t>(std::floor((center - 5 * sigma) * fs));
    const auto hi = static_cast<std::int64_t>(std::ceil((center + 5 * sigma) * fs));
    for (auto i = std::max<std::int64_t>(lo, 0); i <= hi && i < static_cast<std::int64_t>(x.size()); ++i) {
        const double t = static_cast<double>(i) / fs - center;
        x[static_cast<std::size_t>(i)] += amp * std::exp(-0.5 * t * t / (sigma * sigma)) * std::sin(kTwoPi * freq * t + phase);
    }
}

/// Band-limited noise from random tones in [f_lo, f_hi] under a Hann window.
void add_murmur(std::vector<double>& x, int fs, double t0, double t1, double amp, Rng& rng) {
    if (t1 <= t0) return;
    constexpr int kTones = 16;
    double freq[kTones], phase[kTones];
    for (int k = 0; k < kTones; ++k) {
        freq[k] = rng.uniform(120.0, 180.0);
        phase[k] = rng.uniform(0.0, kTwoPi);
    }
    const auto lo = static_cast<std::int64_t>(std::ceil(t0 * fs));
    const auto hi = static_cast<std::int64_t>(std::floor(t1 * fs));
    const double scale = amp * std::sqrt(2.0 / kTones);
    for (auto i = std::max<std::int64_t>(lo, 0); i <= hi && i < static_cast<std::int64_t>(x.size()); ++i) {
        const double t = static_cast<double>(i) / fs;
        const double win = 0.5 - 0.5 * std::cos(kTwoPi * (t - t0) / (t1 - t0));
        double s = 0.0;
        for (int k = 0; k < kTones; ++k) s += std::sin(kTwoPi * freq[k] * t + phase[k]);
        x[static_cast<std::size_t>(i)] += scale * win * s;
    }
}

Waveform to_waveform(const std::vector<double>& x, int fs, double peak_limit) {
    double peak = 0.0;
    for (double v : x) peak = std::max(peak, std::abs(v));
    const double gain = peak > peak_limit ? peak_limit / peak : 1.0;
    Waveform w;
    w.fs = fs;
    w.samples.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) w.samples[i] = static_cast<float>(x[i] * gain);
    return w;
}

/// Largest-remainder apportionment of n items over weights.
std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<std::size_t> out(weights.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double ideal = static_cast<double>(n) * weights[i] / total;
        out[i] = static_cast<std::size_t>(std::floor(ideal));
        used += out[i];
        rem.emplace_back(ideal - std::floor(ideal), i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; used < n; ++k, ++used) ++out[rem[k % rem.size()].second];
    return out;
}

} // namespace

SynthSummary synthesize(const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.out_dir.empty()) throw ConfigError("synthesize.out_dir is not set");
    const Rng root(seed, "synthesize");
    const std::size_t n = cfg.records;
    const auto n_abnormal = static_cast<std::size_t>(std::llround(cfg.abnormal_fraction * static_cast<double>(n)));

    std::vector<Label> labels(n, Label::Normal);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_abnormal), Label::Abnormal);
    Rng label_rng = root.split("labels");
    shuffle(std::span<Label>(labels), label_rng);

    const auto mix = apportion(n_abnormal, {cfg.cue_both, cfg.cue_pcg_only, cfg.cue_ecg_only});
    std::vector<Cue> cues;
    cues.insert(cues.end(), mix[0], Cue::Both);
    cues.insert(cues.end(), mix[1], Cue::PcgOnly);
    cues.insert(cues.end(), mix[2], Cue::EcgOnly);
    Rng cue_rng = root.split("cues");
    shuffle(std::span<Cue>(cues), cue_rng);

    std::filesystem::create_directories(cfg.out_dir / "pcg");
    std::filesystem::create_directories(cfg.out_dir / "ecg");
    std::string manifest = "record_id,label,pcg_path,ecg_path,fs_pcg,fs_ecg\n";
    SynthSummary summary;
    std::size_t next_cue = 0;

    for (std::size_t i = 0; i < n; ++i) {
        char id_buf[32];
        std::snprintf(id_buf, sizeof id_buf, "syn%04zu", i);
        const std::string id = id_buf;
        const Cue cue = labels[i] == Label::Abnormal ? cues[next_cue++] : Cue::None;
        const bool murmur = cue == Cue::Both || cue == Cue::PcgOnly;
        const bool ecg_cue = cue == Cue::Both || cue == Cue::EcgOnly;
        Rng rng = root.split(static_cast<std::uint64_t>(i));

        const double rr0 = 60.0 / rng.uniform(60.0, 90.0);
        std::vector<double> beats;
        for (double t = rng.uniform(0.1, 0.6); t < cfg.duration + 1.0;) {
            beats.push_back(t);
            t += rr0 * (1.0 + (ecg_cue ? rng.uniform(-0.2, 0.2) : rng.uniform(-0.02, 0.02)));
        }

        std::vector<double> pcg(static_cast<std::size_t>(std::llround(cfg.duration * cfg.fs_pcg)), 0.0);
        for (std::size_t b = 0; b < beats.size(); ++b) {
            const double rr = b + 1 < beats.size() ? beats[b + 1] - beats[b] : rr0;
            const double s1 = beats[b] + 0.05;
            const double s2 = s1 + 0.3 * std::sqrt(rr);
            add_burst(pcg, cfg.fs_pcg, s1, rng.uniform(0.9, 1.1), 0.018, rng.uniform(45.0, 55.0), rng.uniform(0, kTwoPi));
            add_burst(pcg, cfg.fs_pcg, s2, rng.uniform(0.6, 0.8), 0.014, rng.uniform(60.0, 75.0), rng.uniform(0, kTwoPi));
            if (murmur) add_murmur(pcg, cfg.fs_pcg, s1 + 0.05, s2 - 0.04, cfg.murmur_amplitude, rng);
        }
        for (auto& v : pcg) v += cfg.noise * rng.normal();

        std::vector<double> ecg(static_cast<std::size_t>(std::llround(cfg.duration * cfg.fs_ecg)), 0.0);
        const double w = ecg_cue ? 2.6 : 1.0;
        for (double tb : beats) {
            add_gaussian(ecg, cfg.fs_ecg, tb - 0.18, 0.12, 0.022);
            add_gaussian(ecg, cfg.fs_ecg, tb - 0.022 * w, -0.12, 0.008 * w);
            add_gaussian(ecg, cfg.fs_ecg, tb, 1.0, 0.009 * w);
            add_gaussian(ecg, cfg.fs_ecg, tb + 0.022 * w, -0.22, 0.008 * w);
            add_gaussian(ecg, cfg.fs_ecg, tb + 0.28, 0.3, 0.045);
        }
        const double wander_phase = rng.uniform(0, kTwoPi);
        for (std::size_t k = 0; k < ecg.size(); ++k) {
            const double t = static_cast<double>(k) / cfg.fs_ecg;
            ecg[k] += 0.04 * std::sin(kTwoPi * 0.25 * t + wander_phase) + 0.5 * cfg.noise * rng.normal();
        }

        const std::string pcg_rel = "pcg/" + id + ".wav";
        const std::string ecg_rel = "ecg/" + id + ".csv";
        signal_io::write_wav_pcm16(cfg.out_dir / pcg_rel, to_waveform(pcg, cfg.fs_pcg, 0.9));
        signal_io::write_csv_signal(cfg.out_dir / ecg_rel, to_waveform(ecg, cfg.fs_ecg, 1e9));
        manifest += id + "," + std::string(to_string(labels[i])) + "," + pcg_rel + "," + ecg_rel + "," +
                    std::to_string(cfg.fs_pcg) + "," + std::to_string(cfg.fs_ecg) + "\n";
        (labels[i] == Label::Abnormal ? summary.abnormal : summary.normal)++;
    }

    summary.manifest = cfg.out_dir / "manifest.csv";
    std::ofstream f(summary.manifest, std::ios::binary);
    if (!f) throw DataError("cannot write " + summary.manifest.string());
    f << manifest;
    if (!f) throw DataError("short write to " + summary.manifest.string());
    return summary;
}

} // namespace cardiofuse::cli
