#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace lskde {

// Compactly supported base kernel u with unit integral. `eval` must return
// exactly 0 outside [-radius, radius].
struct BaseKernel1D {
    std::string name;
    double radius = 0.0;
    double lipschitz = 0.0;
    double sup_norm = 0.0;
    std::function<double(double)> eval;
};

// Catalog kernels, both normalized to support [-1/2, 1/2].
BaseKernel1D triangular_kernel();
BaseKernel1D biweight_kernel();
BaseKernel1D base_kernel_by_name(const std::string& name);

namespace detail {

// Thread-safe memo for s -> value, shared between copies of a kernel.
class NormCache {
public:
    double get_or_compute(double s, const std::function<double(double)>& fn) const;

private:
    mutable std::mutex mu_;
    mutable std::map<double, double> values_;
};

} // namespace detail

// Order-l kernel u_l(y) = sum_{k=1..l} C(l,k) (-1)^(k+1) (1/k) u(y/k).
// Integrates to one and annihilates moments 1..l-1.
class HigherOrderKernel1D {
public:
    HigherOrderKernel1D(BaseKernel1D base, int order);

    double operator()(double y) const;
    int order() const { return order_; }
    double radius() const { return radius_; }
    const BaseKernel1D& base() const { return base_; }
    double value_at_zero() const { return zero_value_; }

    // ||u_l||_s, cached per s.
    double norm(double s) const;
    // Quadrature of u_l(y) y^j over the support.
    double moment(int j) const;
    // L_K * sum_k C(l,k) / k^2, an upper bound for the Lipschitz constant.
    double lipschitz_bound() const;

private:
    BaseKernel1D base_;
    int order_;
    double radius_;
    double zero_value_;
    std::vector<double> coeff_; // coeff_[k-1] multiplies u(y/k)
    std::shared_ptr<detail::NormCache> norms_;
};

HigherOrderKernel1D build_higher_order(const BaseKernel1D& base, int order);

// Anisotropic bandwidth vector with cached volume V_h = prod h_i.
class Bandwidth {
public:
    explicit Bandwidth(std::vector<double> h);

    std::size_t dim() const { return h_.size(); }
    double operator[](std::size_t i) const { return h_[i]; }
    const std::vector<double>& components() const { return h_; }
    double volume() const { return volume_; }

    friend bool operator==(const Bandwidth& a, const Bandwidth& b) { return a.h_ == b.h_; }

private:
    std::vector<double> h_;
    double volume_;
};

// K(t) = prod_i u_l(t_i), all factors sharing the same base kernel and order.
class ProductKernel {
public:
    ProductKernel(HigherOrderKernel1D factor, std::size_t dim);

    std::size_t dim() const { return dim_; }
    const HigherOrderKernel1D& factor() const { return *factor_; }
    double radius() const { return factor_->radius(); }

    double operator()(std::span<const double> t) const;
    double value_at_zero() const;
    // ||K||_s = ||u_l||_s^d by the tensor factorization.
    double norm(double s) const;

private:
    std::shared_ptr<const HigherOrderKernel1D> factor_;
    std::size_t dim_;
};

// Weight functions U: R^d -> R fed to the majorant machinery. Both K_h and
// K_h * K_eta implement this surface.
class WeightFunction {
public:
    virtual ~WeightFunction() = default;
    virtual std::size_t dim() const = 0;
    virtual double eval(std::span<const double> t) const = 0;
    virtual double norm(double s) const = 0;
    virtual double support_radius(std::size_t axis) const = 0;
};

// K_h(t) = V_h^{-1} K(t/h) with coordinate-wise division.
class ScaledKernel final : public WeightFunction {
public:
    ScaledKernel(ProductKernel kernel, Bandwidth h);

    std::size_t dim() const override { return kernel_.dim(); }
    double eval(std::span<const double> t) const override;
    // Closed-form scaling ||K_h||_s = V_h^(1/s-1) ||K||_s.
    double norm(double s) const override;
    double support_radius(std::size_t axis) const override {
        return kernel_.radius() * h_[axis];
    }

    const Bandwidth& bandwidth() const { return h_; }
    const ProductKernel& kernel() const { return kernel_; }

private:
    ProductKernel kernel_;
    Bandwidth h_;
};

// K_h * K_eta materialized as one sampled convolution per axis; the
// d-dimensional function is the tensor product of the axis factors.
// Evaluation interpolates linearly between samples.
class ConvKernel final : public WeightFunction {
public:
    struct Axis {
        double spacing = 0.0;
        long half = 0;                // samples at j*spacing, |j| <= half
        std::vector<double> samples;  // size 2*half+1
        double radius() const { return spacing * static_cast<double>(half); }
        double interp(double x) const;
        double integral() const;
        double norm_pow(double s) const; // integral of |c|^s
    };

    ConvKernel(std::vector<Axis> axes, Bandwidth h, Bandwidth eta);

    std::size_t dim() const override { return axes_.size(); }
    double eval(std::span<const double> t) const override;
    double norm(double s) const override;
    double support_radius(std::size_t axis) const override { return axes_[axis].radius(); }

    double integral() const;
    const Axis& axis(std::size_t i) const { return axes_[i]; }
    const Bandwidth& h() const { return h_; }
    const Bandwidth& eta() const { return eta_; }

private:
    std::vector<Axis> axes_;
    Bandwidth h_;
    Bandwidth eta_;
    std::shared_ptr<detail::NormCache> norms_;
};

// Samples the two scaled factors per axis at spacing
// min(h_i, eta_i) * base_radius / samples_per_support and convolves them
// discretely.
ConvKernel convolve_pair(const ProductKernel& kernel, const Bandwidth& h, const Bandwidth& eta,
                         int samples_per_support = 32);

double scaled_eval(const ProductKernel& kernel, const Bandwidth& h, std::span<const double> t);

inline double kernel_norm(const WeightFunction& u, double s) { return u.norm(s); }

} // namespace lskde
