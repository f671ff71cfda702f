#include "fft.hpp"

#include <cstring>
#include <memory>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

namespace cardiofuse::dsp::detail {
namespace {

// The FFTW planner is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(fftw_complex* p) const { fftw_free(p); }
};
using Buffer = std::unique_ptr<fftw_complex, FftwFree>;

Buffer allocate(std::size_t n) {
    auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (!p) throw std::bad_alloc();
    return Buffer(p);
}

} // namespace

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

FftPlan::FftPlan(std::size_t n) : n_(n) {
    if (n == 0) throw std::invalid_argument("fft size must be positive");
    // FFTW_ESTIMATE picks the algorithm without timing runs, so the plan and
    // therefore every rounding step is the same on every run.
    std::lock_guard lock(planner_mutex());
    auto buf = allocate(n);
    const int len = static_cast<int>(n);
    forward_ = fftw_plan_dft_1d(len, buf.get(), buf.get(), FFTW_FORWARD, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_1d(len, buf.get(), buf.get(), FFTW_BACKWARD, FFTW_ESTIMATE);
    if (!forward_ || !inverse_) throw std::runtime_error("fftw planning failed");
}

FftPlan::~FftPlan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(forward_));
    fftw_destroy_plan(static_cast<fftw_plan>(inverse_));
}

void FftPlan::run(std::vector<std::complex<double>>& a, bool inverse) const {
    if (a.size() != n_) throw std::invalid_argument("fft buffer size mismatch");
    // fftw_malloc alignment matches the planning buffer, as new-array execution requires.
    auto buf = allocate(n_);
    std::memcpy(buf.get(), a.data(), sizeof(fftw_complex) * n_);
    fftw_execute_dft(static_cast<fftw_plan>(inverse ? inverse_ : forward_), buf.get(), buf.get());
    std::memcpy(reinterpret_cast<double*>(a.data()), buf.get(), sizeof(fftw_complex) * n_);
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n_);
        for (auto& x : a) x *= inv;
    }
}

} // namespace cardiofuse::dsp::detail
