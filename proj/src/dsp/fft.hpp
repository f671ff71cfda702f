#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace cardiofuse::dsp::detail {

std::size_t next_pow2(std::size_t n);

/// Fixed-size complex DFT backed by FFTW. The inverse is scaled by 1/N.
/// forward/inverse may be called concurrently on one plan.
class FftPlan {
public:
    explicit FftPlan(std::size_t n);
    ~FftPlan();
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    std::size_t size() const { return n_; }
    void forward(std::vector<std::complex<double>>& a) const { run(a, false); }
    void inverse(std::vector<std::complex<double>>& a) const { run(a, true); }

private:
    void run(std::vector<std::complex<double>>& a, bool inverse) const;

    std::size_t n_;
    void* forward_ = nullptr; // fftw_plan
    void* inverse_ = nullptr;
};

} // namespace cardiofuse::dsp::detail
