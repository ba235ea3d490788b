#include "fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <stdexcept>

namespace lskde::detail {

namespace {
std::mutex& planner_mutex() {
    static std::mutex mu;
    return mu;
}
} // namespace

RealFft::RealFft(std::size_t length) : n_(length) {
    if (n_ < 2) throw std::invalid_argument("fft: length must be >= 2");
    real_ = fftw_alloc_real(n_);
    auto* c = fftw_alloc_complex(n_ / 2 + 1);
    cplx_ = c;
    if (!real_ || !c) throw std::bad_alloc();
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan_fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), real_, c, FFTW_ESTIMATE);
    plan_inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), c, real_, FFTW_ESTIMATE);
    if (!plan_fwd_ || !plan_inv_) throw std::runtime_error("fft: planning failed");
}

RealFft::~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
    fftw_free(real_);
    fftw_free(static_cast<fftw_complex*>(cplx_));
}

void RealFft::forward(std::span<const double> in, std::complex<double>* out) const {
    if (in.size() > n_) throw std::invalid_argument("fft: input longer than transform");
    std::lock_guard<std::mutex> lock(mu_);
    std::memcpy(real_, in.data(), in.size() * sizeof(double));
    std::memset(real_ + in.size(), 0, (n_ - in.size()) * sizeof(double));
    fftw_execute(static_cast<fftw_plan>(plan_fwd_));
    std::memcpy(out, cplx_, spectrum_size() * sizeof(std::complex<double>));
}

void RealFft::inverse(std::span<const std::complex<double>> in, double* out) const {
    if (in.size() != spectrum_size()) throw std::invalid_argument("fft: spectrum size mismatch");
    std::lock_guard<std::mutex> lock(mu_);
    std::memcpy(cplx_, in.data(), in.size() * sizeof(std::complex<double>));
    fftw_execute(static_cast<fftw_plan>(plan_inv_));
    const double inv_n = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = real_[i] * inv_n;
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

std::vector<double> linear_convolve(std::span<const double> a, std::span<const double> b,
                                    double scale) {
    const std::size_t out_len = a.size() + b.size() - 1;
    if (a.size() * b.size() <= std::size_t{1} << 22) {
        std::vector<double> c(out_len, 0.0);
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double ai = a[i];
            if (ai == 0.0) continue;
            for (std::size_t j = 0; j < b.size(); ++j) c[i + j] += ai * b[j];
        }
        for (double& v : c) v *= scale;
        return c;
    }
    const std::size_t n = next_pow2(out_len);
    RealFft fft(n);
    std::vector<std::complex<double>> fa(fft.spectrum_size()), fb(fft.spectrum_size());
    fft.forward(a, fa.data());
    fft.forward(b, fb.data());
    for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
    std::vector<double> full(n);
    fft.inverse(fa, full.data());
    std::vector<double> c(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(out_len));
    for (double& v : c) v *= scale;
    return c;
}

} // namespace lskde::detail
