#pragma once

#include "cardiofuse/signal_io.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cardiofuse::segmentation {

/// Strictly ascending sample indices of detected landmarks.
struct PeakList {
    std::vector<std::size_t> indices;
    int fs = 0;

    std::size_t size() const { return indices.size(); }
    bool empty() const { return indices.empty(); }
};

/// [start, start + length) in samples of the source signal. start may be
/// negative and the end may run past the signal; those samples are zeros.
struct SegmentWindow {
    std::string record_id;
    Modality modality = Modality::Pcg;
    std::int64_t start = 0;
    std::size_t length = 0;
    std::size_t anchor = 0;
    int fs = 0;

    std::int64_t end() const { return start + static_cast<std::int64_t>(length); }
    double start_time() const { return static_cast<double>(start) / fs; }
    double end_time() const { return static_cast<double>(end()) / fs; }
};

struct WindowPair {
    SegmentWindow pcg;
    SegmentWindow ecg;
};

inline constexpr double kPcgRefractorySeconds = 0.3;
inline constexpr double kEcgRefractorySeconds = 0.25;
inline constexpr double kRPeakSnapSeconds = 0.040;
inline constexpr double kPcgWindowSeconds = 3.5;
inline constexpr double kEcgWindowSeconds = 3.3;

/// round(duration * fs)
std::size_t window_length(double duration, int fs);

/// Normalized Shannon-energy envelope of the 25-400 Hz band, 20 ms smoothing.
std::vector<double> shannon_envelope(const Waveform& w);

/// Main heart-sound peaks: envelope maxima above 0.5 x moving median of the
/// envelope maxima, at least 0.3 s apart.
PeakList pcg_peaks(const Waveform& w);

/// R peaks: x[n] - x[n-4] differentiator, binomial low-pass, adaptive
/// amplitude threshold, 0.25 s refractory, snapped to the raw |x| maximum
/// within +-40 ms.
PeakList ecg_rpeaks(const Waveform& w);

/// Greedy left-to-right windows starting at peaks; a peak is skipped when its
/// window would overrun the signal or overlap the previous window.
std::vector<SegmentWindow> windows_nonoverlap(const Waveform& w, const PeakList& peaks,
                                              double duration, std::string_view record_id = {},
                                              Modality modality = Modality::Pcg);

/// One window centered on peak floor(n/2) (1-based; n == 1 uses the first
/// peak). Throws DataError("no peaks") when the list is empty.
SegmentWindow window_center_median_peak(const Waveform& w, const PeakList& peaks, double duration,
                                        std::string_view record_id = {},
                                        Modality modality = Modality::Ecg);

/// Maps a window's start time to another rate; the length is
/// round(duration * target_fs).
SegmentWindow map_window(const SegmentWindow& src, int target_fs, double duration,
                         Modality modality);

/// Pairs each PCG window with the ECG span covering the same time interval.
/// PCG windows whose ECG counterpart would run more than one sample past the
/// ECG signal are dropped.
std::vector<WindowPair> pair_windows(const Waveform& pcg, const Waveform& ecg,
                                     const std::vector<SegmentWindow>& pcg_windows,
                                     double duration);

/// PCG peaks -> non-overlapping windows -> time-aligned ECG windows.
std::vector<WindowPair> windows_simultaneous(const Waveform& pcg, const Waveform& ecg,
                                             double duration = kPcgWindowSeconds,
                                             std::string_view record_id = {});

/// Copies the window's samples, zero-filling whatever lies outside the signal.
std::vector<float> extract(const Waveform& w, const SegmentWindow& window);

} // namespace cardiofuse::segmentation
