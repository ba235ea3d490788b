#pragma once

#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <vector>

namespace lskde::detail {

// Real 1-d FFT pair (r2c forward, c2r inverse) of fixed length, backed by
// FFTW. Instances own aligned buffers and serialize access to them; FFTW
// planner calls are globally serialized as required by the library.
class RealFft {
public:
    explicit RealFft(std::size_t length);
    ~RealFft();
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    std::size_t length() const { return n_; }
    std::size_t spectrum_size() const { return n_ / 2 + 1; }

    // Zero-pads `in` to the transform length.
    void forward(std::span<const double> in, std::complex<double>* out) const;
    // Writes `length()` samples, already scaled by 1/length.
    void inverse(std::span<const std::complex<double>> in, double* out) const;

private:
    std::size_t n_;
    double* real_;
    void* cplx_;
    void* plan_fwd_;
    void* plan_inv_;
    mutable std::mutex mu_;
};

std::size_t next_pow2(std::size_t n);

// Discrete linear convolution c_k = scale * sum_j a_j b_{k-j}, chooses the
// direct or FFT path by problem size.
std::vector<double> linear_convolve(std::span<const double> a, std::span<const double> b,
                                    double scale);

} // namespace lskde::detail
