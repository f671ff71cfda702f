#include "filters.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace cardiofuse::segmentation::detail {
namespace {

constexpr double kPi = 3.141592653589793;
constexpr double kButterworthQ = 0.7071067811865476;

void run_section(std::vector<double>& x, const Biquad& s) {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (auto& v : x) {
        const double y = s.b0 * v + s.b1 * x1 + s.b2 * x2 - s.a1 * y1 - s.a2 * y2;
        x2 = x1;
        x1 = v;
        y2 = y1;
        y1 = y;
        v = y;
    }
}

} // namespace

Biquad butter_lowpass(double cutoff_hz, double fs) {
    const double w0 = 2.0 * kPi * cutoff_hz / fs;
    const double c = std::cos(w0);
    const double alpha = std::sin(w0) / (2.0 * kButterworthQ);
    const double a0 = 1.0 + alpha;
    return {(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0, -2.0 * c / a0,
            (1.0 - alpha) / a0};
}

Biquad butter_highpass(double cutoff_hz, double fs) {
    const double w0 = 2.0 * kPi * cutoff_hz / fs;
    const double c = std::cos(w0);
    const double alpha = std::sin(w0) / (2.0 * kButterworthQ);
    const double a0 = 1.0 + alpha;
    return {(1.0 + c) / 2.0 / a0, -(1.0 + c) / a0, (1.0 + c) / 2.0 / a0, -2.0 * c / a0,
            (1.0 - alpha) / a0};
}

std::vector<double> filtfilt(std::span<const double> x, std::span<const Biquad> sections,
                             std::size_t pad) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    pad = std::min(pad, n - 1);
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    for (const auto& s : sections) run_section(ext, s);
    std::reverse(ext.begin(), ext.end());
    for (const auto& s : sections) run_section(ext, s);
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
            ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> moving_average(std::span<const double> x, std::size_t width) {
    const std::size_t n = x.size();
    std::vector<double> out(n, 0.0);
    if (n == 0) return out;
    const std::size_t half = width / 2;
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n, i + half + 1);
        out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

std::vector<double> sliding_max(std::span<const double> x, std::size_t half) {
    const std::size_t n = x.size();
    std::vector<double> out(n, 0.0);
    std::deque<std::size_t> q;
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t hi = std::min(n, i + half + 1);
        while (next < hi) {
            while (!q.empty() && x[q.back()] <= x[next]) q.pop_back();
            q.push_back(next++);
        }
        while (q.front() + half < i) q.pop_front();
        out[i] = x[q.front()];
    }
    return out;
}

std::vector<std::size_t> suppress_nonmax(std::span<const std::size_t> candidates,
                                         std::span<const double> amplitude,
                                         std::size_t min_distance) {
    std::vector<std::size_t> order(candidates.begin(), candidates.end());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return amplitude[a] > amplitude[b];
    });
    std::vector<std::size_t> kept;
    for (std::size_t c : order) {
        const bool clear = std::all_of(kept.begin(), kept.end(), [&](std::size_t k) {
            return (c > k ? c - k : k - c) >= min_distance;
        });
        if (clear) kept.push_back(c);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

} // namespace cardiofuse::segmentation::detail
