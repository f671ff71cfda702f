#pragma once

#include <span>
#include <vector>

namespace cardiofuse::segmentation::detail {

struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

/// Second-order Butterworth sections (bilinear transform, prewarped).
Biquad butter_lowpass(double cutoff_hz, double fs);
Biquad butter_highpass(double cutoff_hz, double fs);

/// Zero-phase forward-backward filtering through every section, with odd
/// reflection padding at both ends.
std::vector<double> filtfilt(std::span<const double> x, std::span<const Biquad> sections,
                             std::size_t pad);

/// Centered moving average of odd width (shrinks at the edges).
std::vector<double> moving_average(std::span<const double> x, std::size_t width);

/// Centered sliding maximum over [i - half, i + half].
std::vector<double> sliding_max(std::span<const double> x, std::size_t half);

/// Keeps the largest candidates so that accepted indices are at least
/// min_distance apart; returns them ascending. Ties favor the earlier index.
std::vector<std::size_t> suppress_nonmax(std::span<const std::size_t> candidates,
                                         std::span<const double> amplitude,
                                         std::size_t min_distance);

} // namespace cardiofuse::segmentation::detail
