#include "lskde/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fft.hpp"
#include "lskde/rng.hpp"

namespace lskde {
namespace {

constexpr std::size_t kQuadNodes = 1u << 19;

// Composite midpoint rule on [a, b].
template <typename F>
double integrate(F&& fn, double a, double b, std::size_t n = kQuadNodes) {
    const double step = (b - a) / static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += fn(a + (static_cast<double>(i) + 0.5) * step);
    }
    return acc * step;
}

double binomial(int n, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    return c;
}

void validate_base_kernel(const BaseKernel1D& u) {
    if (!u.eval) throw std::invalid_argument("kernel " + u.name + ": missing evaluation rule");
    if (!(u.radius > 0.0)) throw std::invalid_argument("kernel " + u.name + ": radius must be > 0");
    const double mass = integrate(u.eval, -u.radius, u.radius);
    if (std::fabs(mass - 1.0) > 1e-8)
        throw std::invalid_argument("kernel " + u.name + ": integral differs from 1 beyond 1e-8");
    if (u.eval(u.radius * 1.0000001) != 0.0 || u.eval(-u.radius * 1.0000001) != 0.0)
        throw std::invalid_argument("kernel " + u.name + ": nonzero outside declared support");
    // Spot-check the declared Lipschitz constant on deterministic random pairs.
    Philox4x64 rng(0x6b65726eULL);
    for (int i = 0; i < 64; ++i) {
        const double x = (2.0 * rng.next_double() - 1.0) * u.radius;
        const double y = (2.0 * rng.next_double() - 1.0) * u.radius;
        if (std::fabs(u.eval(x) - u.eval(y)) > u.lipschitz * std::fabs(x - y) + 1e-12)
            throw std::invalid_argument("kernel " + u.name + ": Lipschitz bound violated");
    }
}

} // namespace

BaseKernel1D triangular_kernel() {
    BaseKernel1D u;
    u.name = "triangular";
    u.radius = 0.5;
    u.lipschitz = 4.0;
    u.sup_norm = 2.0;
    u.eval = [](double y) { return std::max(0.0, 2.0 - 4.0 * std::fabs(y)); };
    validate_base_kernel(u);
    return u;
}

BaseKernel1D biweight_kernel() {
    BaseKernel1D u;
    u.name = "biweight";
    u.radius = 0.5;
    // max |u'| = 30 y (1 - 4y^2) at y = 1/sqrt(12).
    u.lipschitz = 10.0 / std::sqrt(3.0);
    u.sup_norm = 15.0 / 8.0;
    u.eval = [](double y) {
        if (std::fabs(y) > 0.5) return 0.0;
        const double t = 1.0 - 4.0 * y * y;
        return 15.0 / 8.0 * t * t;
    };
    validate_base_kernel(u);
    return u;
}

BaseKernel1D base_kernel_by_name(const std::string& name) {
    if (name == "triangular") return triangular_kernel();
    if (name == "biweight") return biweight_kernel();
    throw std::invalid_argument("unknown kernel '" + name + "' (catalog: triangular, biweight)");
}

namespace detail {

double NormCache::get_or_compute(double s, const std::function<double(double)>& fn) const {
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = values_.find(s);
        if (it != values_.end()) return it->second;
    }
    const double v = fn(s);
    std::lock_guard<std::mutex> lock(mu_);
    return values_.emplace(s, v).first->second;
}

} // namespace detail

HigherOrderKernel1D::HigherOrderKernel1D(BaseKernel1D base, int order)
    : base_(std::move(base)), order_(order), norms_(std::make_shared<detail::NormCache>()) {
    if (order_ < 1) throw std::invalid_argument("higher-order kernel: order must be >= 1");
    if (!base_.eval) throw std::invalid_argument("higher-order kernel: base kernel missing eval");
    coeff_.resize(static_cast<std::size_t>(order_));
    for (int k = 1; k <= order_; ++k) {
        const double sign = (k % 2 == 1) ? 1.0 : -1.0;
        coeff_[static_cast<std::size_t>(k - 1)] =
            sign * binomial(order_, k) / static_cast<double>(k);
    }
    radius_ = static_cast<double>(order_) * base_.radius;
    zero_value_ = (*this)(0.0);
    const double mass = integrate([this](double y) { return (*this)(y); }, -radius_, radius_);
    if (std::fabs(mass - 1.0) > 1e-8)
        throw std::invalid_argument("higher-order kernel: integral differs from 1 beyond 1e-8");
}

double HigherOrderKernel1D::operator()(double y) const {
    double v = 0.0;
    for (int k = 1; k <= order_; ++k) {
        v += coeff_[static_cast<std::size_t>(k - 1)] * base_.eval(y / static_cast<double>(k));
    }
    return v;
}

double HigherOrderKernel1D::norm(double s) const {
    return norms_->get_or_compute(s, [this](double p) {
        const double pow_int = integrate(
            [this, p](double y) { return std::pow(std::fabs((*this)(y)), p); }, -radius_, radius_);
        return std::pow(pow_int, 1.0 / p);
    });
}

double HigherOrderKernel1D::moment(int j) const {
    if (j < 0) throw std::invalid_argument("moment: order must be >= 0");
    return integrate([this, j](double y) { return (*this)(y)*std::pow(y, j); }, -radius_, radius_);
}

double HigherOrderKernel1D::lipschitz_bound() const {
    double bound = 0.0;
    for (int k = 1; k <= order_; ++k) {
        bound += binomial(order_, k) / static_cast<double>(k * k);
    }
    return bound * base_.lipschitz;
}

HigherOrderKernel1D build_higher_order(const BaseKernel1D& base, int order) {
    return HigherOrderKernel1D(base, order);
}

Bandwidth::Bandwidth(std::vector<double> h) : h_(std::move(h)) {
    if (h_.empty()) throw std::invalid_argument("bandwidth: dimension must be >= 1");
    volume_ = 1.0;
    for (double hi : h_) {
        if (!(hi > 0.0) || !std::isfinite(hi))
            throw std::invalid_argument("bandwidth: components must be positive and finite");
        volume_ *= hi;
    }
}

ProductKernel::ProductKernel(HigherOrderKernel1D factor, std::size_t dim)
    : factor_(std::make_shared<const HigherOrderKernel1D>(std::move(factor))), dim_(dim) {
    if (dim_ == 0) throw std::invalid_argument("product kernel: dimension must be >= 1");
}

double ProductKernel::operator()(std::span<const double> t) const {
    double v = 1.0;
    for (std::size_t i = 0; i < dim_; ++i) {
        v *= (*factor_)(t[i]);
        if (v == 0.0) return 0.0;
    }
    return v;
}

double ProductKernel::value_at_zero() const {
    return std::pow(factor_->value_at_zero(), static_cast<double>(dim_));
}

double ProductKernel::norm(double s) const {
    return std::pow(factor_->norm(s), static_cast<double>(dim_));
}

ScaledKernel::ScaledKernel(ProductKernel kernel, Bandwidth h)
    : kernel_(std::move(kernel)), h_(std::move(h)) {
    if (h_.dim() != kernel_.dim())
        throw std::invalid_argument("scaled kernel: bandwidth dimension mismatch");
}

double ScaledKernel::eval(std::span<const double> t) const {
    const auto& factor = kernel_.factor();
    double v = 1.0;
    for (std::size_t i = 0; i < dim(); ++i) {
        v *= factor(t[i] / h_[i]);
        if (v == 0.0) return 0.0;
    }
    return v / h_.volume();
}

double ScaledKernel::norm(double s) const {
    return std::pow(h_.volume(), 1.0 / s - 1.0) * kernel_.norm(s);
}

double ConvKernel::Axis::interp(double x) const {
    const double r = radius();
    if (!(std::fabs(x) < r)) return 0.0;
    const double u = x / spacing + static_cast<double>(half);
    const auto i = static_cast<std::size_t>(u);
    const double frac = u - static_cast<double>(i);
    return samples[i] * (1.0 - frac) + samples[i + 1] * frac;
}

double ConvKernel::Axis::integral() const {
    double acc = 0.0;
    for (double v : samples) acc += v;
    acc -= 0.5 * (samples.front() + samples.back());
    return acc * spacing;
}

double ConvKernel::Axis::norm_pow(double s) const {
    double acc = 0.0;
    for (double v : samples) acc += std::pow(std::fabs(v), s);
    acc -= 0.5 * (std::pow(std::fabs(samples.front()), s) +
                  std::pow(std::fabs(samples.back()), s));
    return acc * spacing;
}

ConvKernel::ConvKernel(std::vector<Axis> axes, Bandwidth h, Bandwidth eta)
    : axes_(std::move(axes)), h_(std::move(h)), eta_(std::move(eta)),
      norms_(std::make_shared<detail::NormCache>()) {
    if (axes_.empty()) throw std::invalid_argument("conv kernel: no axes");
}

double ConvKernel::eval(std::span<const double> t) const {
    double v = 1.0;
    for (std::size_t i = 0; i < axes_.size(); ++i) {
        v *= axes_[i].interp(t[i]);
        if (v == 0.0) return 0.0;
    }
    return v;
}

double ConvKernel::norm(double s) const {
    return norms_->get_or_compute(s, [this](double p) {
        double pow_int = 1.0;
        for (const auto& ax : axes_) pow_int *= ax.norm_pow(p);
        return std::pow(pow_int, 1.0 / p);
    });
}

double ConvKernel::integral() const {
    double v = 1.0;
    for (const auto& ax : axes_) v *= ax.integral();
    return v;
}

ConvKernel convolve_pair(const ProductKernel& kernel, const Bandwidth& h, const Bandwidth& eta,
                         int samples_per_support) {
    if (h.dim() != kernel.dim() || eta.dim() != kernel.dim())
        throw std::invalid_argument("convolve_pair: bandwidth dimension mismatch");
    if (samples_per_support < 4)
        throw std::invalid_argument("convolve_pair: need at least 4 samples per support");
    const auto& factor = kernel.factor();
    const double base_radius = factor.base().radius;

    std::vector<ConvKernel::Axis> axes;
    axes.reserve(kernel.dim());
    for (std::size_t i = 0; i < kernel.dim(); ++i) {
        const double spacing =
            std::min(h[i], eta[i]) * base_radius / static_cast<double>(samples_per_support);
        const auto half_a = static_cast<long>(std::ceil(factor.radius() * h[i] / spacing));
        const auto half_b = static_cast<long>(std::ceil(factor.radius() * eta[i] / spacing));
        std::vector<double> a(static_cast<std::size_t>(2 * half_a + 1));
        std::vector<double> b(static_cast<std::size_t>(2 * half_b + 1));
        for (long j = -half_a; j <= half_a; ++j) {
            a[static_cast<std::size_t>(j + half_a)] =
                factor(static_cast<double>(j) * spacing / h[i]) / h[i];
        }
        for (long j = -half_b; j <= half_b; ++j) {
            b[static_cast<std::size_t>(j + half_b)] =
                factor(static_cast<double>(j) * spacing / eta[i]) / eta[i];
        }
        ConvKernel::Axis ax;
        ax.spacing = spacing;
        ax.half = half_a + half_b;
        ax.samples = detail::linear_convolve(a, b, spacing);
        axes.push_back(std::move(ax));
    }
    return ConvKernel(std::move(axes), h, eta);
}

double scaled_eval(const ProductKernel& kernel, const Bandwidth& h, std::span<const double> t) {
    return ScaledKernel(kernel, h).eval(t);
}

} // namespace lskde
