#include "cardiofuse/segmentation.hpp"

#include "cardiofuse/error.hpp"
#include "filters.hpp"

#include <algorithm>
#include <cmath>

namespace cardiofuse::segmentation {
namespace {

constexpr double kBandLowHz = 25.0;
constexpr double kBandHighHz = 400.0;
constexpr double kEnvelopeSmoothSeconds = 0.020;
constexpr double kMaximaBlockSeconds = 1.5;
constexpr std::size_t kMedianBlocks = 2; // blocks on each side
constexpr double kPcgThresholdRatio = 0.5;
// keeps filter tails in otherwise silent stretches from counting as beats
constexpr double kPcgGlobalFloor = 0.02;

constexpr double kEcgLocalWindowSeconds = 1.5; // half-width
constexpr double kEcgLocalRatio = 0.35;
constexpr double kEcgGlobalRatio = 0.10;

std::size_t seconds_to_samples(double s, int fs) {
    return static_cast<std::size_t>(std::llround(s * fs));
}

std::vector<std::size_t> local_maxima(std::span<const double> x, std::span<const double> floor) {
    std::vector<std::size_t> out;
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double left = i > 0 ? x[i - 1] : -1.0;
        const double right = i + 1 < n ? x[i + 1] : -1.0;
        if (x[i] > left && x[i] >= right && x[i] > 0.0 && x[i] >= floor[i]) out.push_back(i);
    }
    return out;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

} // namespace

std::size_t window_length(double duration, int fs) {
    if (!(duration > 0.0)) throw ConfigError("window duration must be positive");
    return seconds_to_samples(duration, fs);
}

std::vector<double> shannon_envelope(const Waveform& w) {
    const std::size_t n = w.samples.size();
    if (n == 0) return {};
    std::vector<double> x(w.samples.begin(), w.samples.end());

    std::vector<detail::Biquad> sections;
    sections.push_back(detail::butter_highpass(kBandLowHz, w.fs));
    if (kBandHighHz < 0.45 * w.fs) sections.push_back(detail::butter_lowpass(kBandHighHz, w.fs));
    x = detail::filtfilt(x, sections, static_cast<std::size_t>(w.fs / 10));

    double peak = 0.0;
    for (double v : x) peak = std::max(peak, std::abs(v));
    if (!(peak > 0.0)) return std::vector<double>(n, 0.0);

    std::vector<double> energy(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = x[i] / peak;
        const double s2 = s * s;
        energy[i] = s2 > 0.0 ? -s2 * std::log(s2) : 0.0;
    }
    std::size_t width = seconds_to_samples(kEnvelopeSmoothSeconds, w.fs);
    width |= 1u;
    return detail::moving_average(energy, width);
}

PeakList pcg_peaks(const Waveform& w) {
    PeakList out;
    out.fs = w.fs;
    const auto env = shannon_envelope(w);
    const std::size_t n = env.size();
    const double global = n == 0 ? 0.0 : *std::max_element(env.begin(), env.end());
    if (!(global > 0.0)) return out;

    // per-block envelope maxima; threshold = ratio x their moving median
    const std::size_t block = std::max<std::size_t>(1, seconds_to_samples(kMaximaBlockSeconds, w.fs));
    const std::size_t n_blocks = (n + block - 1) / block;
    std::vector<double> block_max(n_blocks, 0.0);
    for (std::size_t i = 0; i < n; ++i) block_max[i / block] = std::max(block_max[i / block], env[i]);
    std::vector<double> threshold(n);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t lo = b >= kMedianBlocks ? b - kMedianBlocks : 0;
        const std::size_t hi = std::min(n_blocks, b + kMedianBlocks + 1);
        const double t = std::max(
            kPcgThresholdRatio * median({block_max.begin() + static_cast<std::ptrdiff_t>(lo),
                                         block_max.begin() + static_cast<std::ptrdiff_t>(hi)}),
            kPcgGlobalFloor * global);
        for (std::size_t i = b * block; i < std::min(n, (b + 1) * block); ++i) threshold[i] = t;
    }

    const auto candidates = local_maxima(env, threshold);
    out.indices = detail::suppress_nonmax(candidates, env,
                                          seconds_to_samples(kPcgRefractorySeconds, w.fs));
    return out;
}

PeakList ecg_rpeaks(const Waveform& w) {
    PeakList out;
    out.fs = w.fs;
    const std::size_t n = w.samples.size();
    if (n == 0) return out;
    const auto& x = w.samples;

    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) {
        diff[i] = static_cast<double>(x[i]) - static_cast<double>(x[i >= 4 ? i - 4 : 0]);
    }
    static constexpr double kBinomial[5] = {1.0, 4.0, 6.0, 4.0, 1.0};
    std::vector<double> feature(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 5; ++k) {
            if (i >= k) acc += kBinomial[k] * diff[i - k];
        }
        feature[i] = std::abs(acc / 16.0);
    }
    const double global = *std::max_element(feature.begin(), feature.end());
    if (!(global > 0.0)) return out;

    auto threshold =
        detail::sliding_max(feature, seconds_to_samples(kEcgLocalWindowSeconds, w.fs));
    for (auto& t : threshold) t = std::max(kEcgLocalRatio * t, kEcgGlobalRatio * global);

    const std::size_t refractory = seconds_to_samples(kEcgRefractorySeconds, w.fs);
    const auto detections =
        detail::suppress_nonmax(local_maxima(feature, threshold), feature, refractory);

    // filter delay moves detections off the R apex; snap to the raw maximum
    const std::size_t snap = seconds_to_samples(kRPeakSnapSeconds, w.fs);
    std::vector<double> magnitude(n);
    for (std::size_t i = 0; i < n; ++i) magnitude[i] = std::abs(static_cast<double>(x[i]));
    std::vector<std::size_t> snapped;
    snapped.reserve(detections.size());
    for (std::size_t d : detections) {
        const std::size_t lo = d >= snap ? d - snap : 0;
        const std::size_t hi = std::min(n - 1, d + snap);
        std::size_t best = lo;
        for (std::size_t i = lo; i <= hi; ++i) {
            if (magnitude[i] > magnitude[best]) best = i;
        }
        snapped.push_back(best);
    }
    std::sort(snapped.begin(), snapped.end());
    snapped.erase(std::unique(snapped.begin(), snapped.end()), snapped.end());
    out.indices = detail::suppress_nonmax(snapped, magnitude, refractory);
    return out;
}

std::vector<SegmentWindow> windows_nonoverlap(const Waveform& w, const PeakList& peaks,
                                              double duration, std::string_view record_id,
                                              Modality modality) {
    const std::size_t len = window_length(duration, w.fs);
    const std::size_t n = w.samples.size();
    std::vector<SegmentWindow> out;
    if (len == 0) return out;
    std::size_t next_free = 0;
    for (std::size_t p : peaks.indices) {
        if (p < next_free || p + len > n) continue;
        SegmentWindow win;
        win.record_id = std::string(record_id);
        win.modality = modality;
        win.start = static_cast<std::int64_t>(p);
        win.length = len;
        win.anchor = p;
        win.fs = w.fs;
        out.push_back(std::move(win));
        next_free = p + len;
    }
    return out;
}

SegmentWindow window_center_median_peak(const Waveform& w, const PeakList& peaks, double duration,
                                        std::string_view record_id, Modality modality) {
    if (peaks.empty()) throw DataError("no peaks");
    const std::size_t len = window_length(duration, w.fs);
    const std::size_t ordinal = std::max<std::size_t>(1, peaks.size() / 2);
    const std::size_t center = peaks.indices[ordinal - 1];
    SegmentWindow win;
    win.record_id = std::string(record_id);
    win.modality = modality;
    win.start = static_cast<std::int64_t>(center) - static_cast<std::int64_t>(len / 2);
    win.length = len;
    win.anchor = center;
    win.fs = w.fs;
    return win;
}

SegmentWindow map_window(const SegmentWindow& src, int target_fs, double duration,
                         Modality modality) {
    SegmentWindow out;
    out.record_id = src.record_id;
    out.modality = modality;
    out.fs = target_fs;
    out.start = std::llround(static_cast<double>(src.start) * target_fs / src.fs);
    out.length = window_length(duration, target_fs);
    out.anchor = static_cast<std::size_t>(
        std::max<long long>(0, std::llround(static_cast<double>(src.anchor) * target_fs / src.fs)));
    return out;
}

std::vector<WindowPair> pair_windows(const Waveform& pcg, const Waveform& ecg,
                                     const std::vector<SegmentWindow>& pcg_windows,
                                     double duration) {
    std::vector<WindowPair> out;
    const auto ecg_n = static_cast<std::int64_t>(ecg.samples.size());
    for (const auto& pw : pcg_windows) {
        if (pw.fs != pcg.fs) throw DataError("pcg window rate does not match the pcg signal");
        auto ew = map_window(pw, ecg.fs, duration, Modality::Ecg);
        if (ew.start < 0 || ew.end() > ecg_n + 1) continue;
        out.push_back({pw, std::move(ew)});
    }
    return out;
}

std::vector<WindowPair> windows_simultaneous(const Waveform& pcg, const Waveform& ecg,
                                             double duration, std::string_view record_id) {
    if (pcg.samples.empty() || ecg.samples.empty()) {
        throw DataError("simultaneous windowing requires both pcg and ecg");
    }
    const auto peaks = pcg_peaks(pcg);
    const auto wins = windows_nonoverlap(pcg, peaks, duration, record_id, Modality::Pcg);
    return pair_windows(pcg, ecg, wins, duration);
}

std::vector<float> extract(const Waveform& w, const SegmentWindow& window) {
    std::vector<float> out(window.length, 0.0f);
    const auto n = static_cast<std::int64_t>(w.samples.size());
    for (std::size_t i = 0; i < window.length; ++i) {
        const std::int64_t src = window.start + static_cast<std::int64_t>(i);
        if (src >= 0 && src < n) out[i] = w.samples[static_cast<std::size_t>(src)];
    }
    return out;
}

} // namespace cardiofuse::segmentation
