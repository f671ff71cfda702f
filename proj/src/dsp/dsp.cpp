#include "cardiofuse/dsp.hpp"

#include "cardiofuse/error.hpp"
#include "fft.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace cardiofuse::dsp {
namespace {

constexpr double kPi = 3.141592653589793238462643;

} // namespace

WaveletSpec WaveletSpec::morlet(Normalization n) {
    WaveletSpec s;
    s.kind = WaveletKind::MorletReal;
    s.normalization = n;
    return s;
}

WaveletSpec WaveletSpec::complex_morlet(double fb, double fc, Normalization n) {
    WaveletSpec s;
    s.kind = WaveletKind::ComplexMorlet;
    s.fb = fb;
    s.fc = fc;
    s.normalization = n;
    return s;
}

std::complex<double> WaveletSpec::operator()(double t) const {
    if (kind == WaveletKind::MorletReal) {
        return {std::exp(-0.5 * t * t) * std::cos(5.0 * t), 0.0};
    }
    const double env = std::exp(-t * t / fb) / std::sqrt(kPi * fb);
    const double ph = 2.0 * kPi * fc * t;
    return {env * std::cos(ph), env * std::sin(ph)};
}

double WaveletSpec::envelope_sigma() const {
    return kind == WaveletKind::MorletReal ? 1.0 : std::sqrt(fb / 2.0);
}

double WaveletSpec::center_frequency() const {
    return kind == WaveletKind::MorletReal ? 5.0 / (2.0 * kPi) : fc;
}

double WaveletSpec::amplitude(double scale) const {
    return normalization == Normalization::UnitArea ? 1.0 / scale : 1.0 / std::sqrt(scale);
}

void WaveletSpec::validate() const {
    if (kind == WaveletKind::ComplexMorlet && !(fb > 0.0 && fc > 0.0)) {
        throw ConfigError("complex Morlet requires fb > 0 and fc > 0");
    }
}

std::string ScaleGrid::id() const {
    if (scales.empty()) return "log:empty";
    char buf[96];
    std::snprintf(buf, sizeof buf, "log:%g-%gx%zu", scales.front(), scales.back(), scales.size());
    return buf;
}

ScaleGrid make_scales(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi)) {
        throw ConfigError("make_scales: require 0 < lo <= hi");
    }
    if (count == 0) throw ConfigError("make_scales: count must be >= 1");
    ScaleGrid g;
    if (count == 1) {
        g.scales = {lo};
        return g;
    }
    if (lo == hi) throw ConfigError("make_scales: lo == hi requires count == 1");
    g.scales.resize(count);
    const double llo = std::log(lo);
    const double step = (std::log(hi) - llo) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) {
        g.scales[i] = std::exp(llo + step * static_cast<double>(i));
    }
    g.scales.front() = lo;
    g.scales.back() = hi;
    return g;
}

std::size_t support_half_width(const WaveletSpec& spec, double scale) {
    return static_cast<std::size_t>(std::ceil(kSupportSigmas * spec.envelope_sigma() * scale));
}

CwtPlan::CwtPlan(ScaleGrid grid, WaveletSpec spec, std::size_t n_samples)
    : grid_(std::move(grid)), spec_(spec), n_(n_samples) {
    spec_.validate();
    if (n_ == 0) throw DataError("cwt: empty signal");
    if (grid_.scales.empty()) throw ConfigError("cwt: empty scale grid");
    for (std::size_t i = 1; i < grid_.scales.size(); ++i) {
        if (!(grid_.scales[i] > grid_.scales[i - 1])) {
            throw ConfigError("cwt: scales must be strictly ascending");
        }
    }
    if (!(grid_.scales.front() > 0.0)) throw ConfigError("cwt: scales must be positive");

    const std::size_t max_half = support_half_width(spec_, grid_.scales.back());
    if (2 * max_half + 1 > 8 * n_) {
        throw DataError("cwt: scale " + std::to_string(grid_.scales.back()) +
                        " too large for signal length " + std::to_string(n_) + " (support " +
                        std::to_string(2 * max_half + 1) + " samples)");
    }
    fft_n_ = detail::next_pow2(n_ + max_half);
    auto fft = std::make_shared<detail::FftPlan>(fft_n_);

    kernel_spectra_.resize(grid_.scales.size());
    for (std::size_t s = 0; s < grid_.scales.size(); ++s) {
        const double a = grid_.scales[s];
        const auto half = static_cast<long>(support_half_width(spec_, a));
        const double amp = spec_.amplitude(a);
        auto& g = kernel_spectra_[s];
        g.assign(fft_n_, {0.0, 0.0});
        const auto n = static_cast<long>(fft_n_);
        for (long j = -half; j <= half; ++j) {
            // g[j] = amp * conj(psi(-j / a)) turns the correlation into a convolution
            const auto v = amp * std::conj(spec_(-static_cast<double>(j) / a));
            g[static_cast<std::size_t>(((j % n) + n) % n)] = v;
        }
        fft->forward(g);
    }
    fft_ = std::move(fft);
}

CoefficientMatrix CwtPlan::transform(std::span<const float> signal) const {
    if (signal.size() != n_) {
        throw DataError("cwt plan built for " + std::to_string(n_) + " samples, got " +
                        std::to_string(signal.size()));
    }
    const std::size_t rows = grid_.scales.size();
    CoefficientMatrix out;
    out.n_scales = rows;
    out.n_samples = n_;
    out.real.assign(rows * n_, 0.0);
    const bool complex_kernel = spec_.kind == WaveletKind::ComplexMorlet;
    if (complex_kernel) out.imag.assign(rows * n_, 0.0);

    std::vector<std::complex<double>> x(fft_n_, {0.0, 0.0});
    for (std::size_t i = 0; i < n_; ++i) x[i] = {static_cast<double>(signal[i]), 0.0};
    fft_->forward(x);

    std::vector<std::complex<double>> buf(fft_n_);
    if (complex_kernel) {
        for (std::size_t s = 0; s < rows; ++s) {
            const auto& g = kernel_spectra_[s];
            for (std::size_t k = 0; k < fft_n_; ++k) buf[k] = x[k] * g[k];
            fft_->inverse(buf);
            for (std::size_t t = 0; t < n_; ++t) {
                out.real[s * n_ + t] = buf[t].real();
                out.imag[s * n_ + t] = buf[t].imag();
            }
        }
        return out;
    }
    // Real signal and real kernel: two scales share one inverse transform,
    // carried in the real and imaginary parts.
    const std::complex<double> i1(0.0, 1.0);
    for (std::size_t s = 0; s < rows; s += 2) {
        const auto& g0 = kernel_spectra_[s];
        if (s + 1 < rows) {
            const auto& g1 = kernel_spectra_[s + 1];
            for (std::size_t k = 0; k < fft_n_; ++k) buf[k] = x[k] * (g0[k] + i1 * g1[k]);
        } else {
            for (std::size_t k = 0; k < fft_n_; ++k) buf[k] = x[k] * g0[k];
        }
        fft_->inverse(buf);
        for (std::size_t t = 0; t < n_; ++t) out.real[s * n_ + t] = buf[t].real();
        if (s + 1 < rows) {
            for (std::size_t t = 0; t < n_; ++t) out.real[(s + 1) * n_ + t] = buf[t].imag();
        }
    }
    return out;
}

CoefficientMatrix cwt(std::span<const float> signal, const ScaleGrid& grid,
                      const WaveletSpec& spec) {
    return CwtPlan(grid, spec, signal.size()).transform(signal);
}

CoefficientMatrix cwt(const Waveform& w, const ScaleGrid& grid, const WaveletSpec& spec) {
    return cwt(std::span<const float>(w.samples), grid, spec);
}

Scalogram scalogram_of(const CoefficientMatrix& coeffs) {
    Scalogram s;
    s.rows = coeffs.n_scales;
    s.cols = coeffs.n_samples;
    const std::size_t n = s.rows * s.cols;
    std::vector<double> mag(n);
    for (std::size_t i = 0; i < n; ++i) {
        mag[i] = coeffs.is_complex() ? std::hypot(coeffs.real[i], coeffs.imag[i])
                                     : std::abs(coeffs.real[i]);
    }
    s.data.assign(n, 0.0f);
    if (n == 0) return s;
    const auto [lo_it, hi_it] = std::minmax_element(mag.begin(), mag.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    if (!(range > 0.0) || !std::isfinite(range)) return s;
    for (std::size_t i = 0; i < n; ++i) {
        s.data[i] = static_cast<float>(std::clamp((mag[i] - lo) / range, 0.0, 1.0));
    }
    return s;
}

namespace {

// Boundaries of an even partition of n items into k blocks, remainders first.
std::vector<std::size_t> partition(std::size_t n, std::size_t k) {
    std::vector<std::size_t> edges(k + 1, 0);
    const std::size_t base = n / k;
    const std::size_t rem = n % k;
    for (std::size_t b = 0; b < k; ++b) edges[b + 1] = edges[b] + base + (b < rem ? 1 : 0);
    return edges;
}

} // namespace

Scalogram pool_to(const Scalogram& s, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0 || out_h > s.rows || out_w > s.cols) {
        throw ConfigError("pool_to: cannot pool " + std::to_string(s.rows) + "x" +
                          std::to_string(s.cols) + " to " + std::to_string(out_h) + "x" +
                          std::to_string(out_w));
    }
    if (out_h == s.rows && out_w == s.cols) return s;
    const auto re = partition(s.rows, out_h);
    const auto ce = partition(s.cols, out_w);
    Scalogram out;
    out.rows = out_h;
    out.cols = out_w;
    out.meta = s.meta;
    out.data.resize(out_h * out_w);
    for (std::size_t r = 0; r < out_h; ++r) {
        for (std::size_t c = 0; c < out_w; ++c) {
            double acc = 0.0;
            for (std::size_t i = re[r]; i < re[r + 1]; ++i) {
                for (std::size_t j = ce[c]; j < ce[c + 1]; ++j) acc += s.data[i * s.cols + j];
            }
            const auto count = static_cast<double>((re[r + 1] - re[r]) * (ce[c + 1] - ce[c]));
            out.data[r * out_w + c] = static_cast<float>(std::clamp(acc / count, 0.0, 1.0));
        }
    }
    return out;
}

Scalogram make_scalogram(std::span<const float> window, const CwtPlan& plan, std::size_t out_h,
                         std::size_t out_w, ScalogramMeta meta) {
    auto s = scalogram_of(plan.transform(window));
    s = pool_to(s, out_h, out_w);
    if (meta.grid_id.empty()) meta.grid_id = plan.grid().id();
    s.meta = std::move(meta);
    return s;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) |
           (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

} // namespace

std::vector<std::uint8_t> encode_sgm(const Scalogram& s) {
    if (s.data.size() != s.rows * s.cols) throw DataError("sgm: data size mismatch");
    std::vector<std::uint8_t> out;
    out.reserve(16 + 4 * s.data.size() + 128);
    constexpr std::string_view magic = "SGM1";
    out.insert(out.end(), magic.begin(), magic.end());
    put_u32(out, static_cast<std::uint32_t>(s.rows));
    put_u32(out, static_cast<std::uint32_t>(s.cols));
    for (float v : s.data) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        put_u32(out, bits);
    }
    const nlohmann::json meta = {{"record_id", s.meta.record_id},
                                 {"window", s.meta.window},
                                 {"modality", s.meta.modality},
                                 {"grid", s.meta.grid_id}};
    const std::string blob = meta.dump();
    put_u32(out, static_cast<std::uint32_t>(blob.size()));
    out.insert(out.end(), blob.begin(), blob.end());
    return out;
}

Scalogram decode_sgm(std::span<const std::uint8_t> b) {
    if (b.size() < 12 || std::memcmp(b.data(), "SGM1", 4) != 0) throw FormatError("sgm: bad magic");
    Scalogram s;
    s.rows = get_u32(b, 4);
    s.cols = get_u32(b, 8);
    const std::size_t n = s.rows * s.cols;
    if (b.size() < 12 + 4 * n + 4) throw FormatError("sgm: truncated payload");
    s.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = get_u32(b, 12 + 4 * i);
        std::memcpy(&s.data[i], &bits, sizeof bits);
    }
    const std::size_t at = 12 + 4 * n;
    const std::uint32_t len = get_u32(b, at);
    if (b.size() < at + 4 + len) throw FormatError("sgm: truncated metadata");
    const std::string blob(reinterpret_cast<const char*>(b.data() + at + 4), len);
    try {
        const auto meta = nlohmann::json::parse(blob);
        s.meta.record_id = meta.value("record_id", std::string{});
        s.meta.window = meta.value("window", 0);
        s.meta.modality = meta.value("modality", std::string{});
        s.meta.grid_id = meta.value("grid", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("sgm: bad metadata json: ") + e.what());
    }
    return s;
}

void write_sgm(const std::filesystem::path& path, const Scalogram& s) {
    const auto bytes = encode_sgm(s);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

Scalogram read_sgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                          std::istreambuf_iterator<char>()};
    try {
        return decode_sgm(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace cardiofuse::dsp
