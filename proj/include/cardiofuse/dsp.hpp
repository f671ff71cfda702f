#pragma once

#include "cardiofuse/signal_io.hpp"

#include <complex>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cardiofuse::dsp {

namespace detail {
class FftPlan;
}

enum class WaveletKind { MorletReal, ComplexMorlet };

/// Amplitude factor applied to the dilated wavelet at scale a.
///   UnitArea    1/a        (tone magnitude peaks exactly at a = fc*fs/f)
///   UnitEnergy  1/sqrt(a)  (energy-preserving; peak biased toward larger a)
enum class Normalization { UnitArea, UnitEnergy };

struct WaveletSpec {
    WaveletKind kind = WaveletKind::MorletReal;
    double fb = 1.5; ///< bandwidth, complex Morlet only
    double fc = 1.0; ///< center frequency in cycles per unit time, complex Morlet only
    Normalization normalization = Normalization::UnitArea;

    /// psi(t) = exp(-t^2/2) cos(5t)
    static WaveletSpec morlet(Normalization n = Normalization::UnitArea);
    /// psi(t) = (pi fb)^(-1/2) exp(2 pi i fc t) exp(-t^2/fb)
    static WaveletSpec complex_morlet(double fb, double fc,
                                      Normalization n = Normalization::UnitArea);

    std::complex<double> operator()(double t) const;
    /// Standard deviation of the Gaussian envelope in unit time.
    double envelope_sigma() const;
    /// Center frequency in cycles per unit time (5/2pi for the real Morlet).
    double center_frequency() const;
    double amplitude(double scale) const;
    void validate() const;
};

/// Half-width, in multiples of the envelope sigma, beyond which the wavelet is
/// truncated.
inline constexpr double kSupportSigmas = 8.0;

struct ScaleGrid {
    std::vector<double> scales;

    std::size_t size() const { return scales.size(); }
    /// Canonical textual id, e.g. "log:7-130x96".
    std::string id() const;
};

/// count log-spaced scales from lo to hi inclusive.
ScaleGrid make_scales(double lo, double hi, std::size_t count);

/// Row-major n_scales x n_samples coefficients; imag is empty for real wavelets.
struct CoefficientMatrix {
    std::size_t n_scales = 0;
    std::size_t n_samples = 0;
    std::vector<double> real;
    std::vector<double> imag;

    bool is_complex() const { return !imag.empty(); }
    std::complex<double> at(std::size_t scale, std::size_t t) const {
        const auto i = scale * n_samples + t;
        return {real[i], imag.empty() ? 0.0 : imag[i]};
    }
};

/// Precomputed kernel spectra for one (grid, wavelet, signal length) triple.
/// Reusable across windows of the same length; const methods are thread-safe.
class CwtPlan {
public:
    CwtPlan(ScaleGrid grid, WaveletSpec spec, std::size_t n_samples);

    CoefficientMatrix transform(std::span<const float> signal) const;

    const ScaleGrid& grid() const { return grid_; }
    const WaveletSpec& spec() const { return spec_; }
    std::size_t n_samples() const { return n_; }
    std::size_t fft_size() const { return fft_n_; }

private:
    ScaleGrid grid_;
    WaveletSpec spec_;
    std::size_t n_ = 0;
    std::size_t fft_n_ = 0;
    std::shared_ptr<const detail::FftPlan> fft_;
    std::vector<std::vector<std::complex<double>>> kernel_spectra_;
};

/// Kernel half-width in samples at the given scale.
std::size_t support_half_width(const WaveletSpec& spec, double scale);

/// Row i is sum_k x[k] * amp(a_i) * conj(psi((k - t) / a_i)); zero-padded edges.
CoefficientMatrix cwt(const Waveform& w, const ScaleGrid& grid, const WaveletSpec& spec);
CoefficientMatrix cwt(std::span<const float> signal, const ScaleGrid& grid,
                      const WaveletSpec& spec);

struct ScalogramMeta {
    std::string record_id;
    int window = 0;
    std::string modality;
    std::string grid_id;
};

struct Scalogram {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;
    ScalogramMeta meta;

    float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// |coefficients| then min-max normalized to [0, 1]. A matrix with zero
/// dynamic range (including all zeros) maps to all zeros.
Scalogram scalogram_of(const CoefficientMatrix& coeffs);

/// Block-mean pooling onto an even partition; leading blocks take remainders.
Scalogram pool_to(const Scalogram& s, std::size_t out_h, std::size_t out_w);

/// cwt -> scalogram_of -> pool_to for a single window.
Scalogram make_scalogram(std::span<const float> window, const CwtPlan& plan, std::size_t out_h,
                         std::size_t out_w, ScalogramMeta meta = {});

/// `.sgm`: "SGM1", u32 rows, u32 cols, rows*cols f32 (all little-endian),
/// u32 byte length + UTF-8 JSON metadata.
std::vector<std::uint8_t> encode_sgm(const Scalogram& s);
Scalogram decode_sgm(std::span<const std::uint8_t> bytes);
void write_sgm(const std::filesystem::path& path, const Scalogram& s);
Scalogram read_sgm(const std::filesystem::path& path);

} // namespace cardiofuse::dsp
