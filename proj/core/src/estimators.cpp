#include "lskde/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fft.hpp"

namespace lskde {

Sample::Sample(std::size_t n, std::size_t d, std::vector<double> row_major)
    : n_(n), d_(d), data_(std::move(row_major)) {
    if (n_ == 0) throw std::invalid_argument("sample: needs at least one observation");
    if (d_ == 0) throw std::invalid_argument("sample: dimension must be >= 1");
    if (data_.size() != n_ * d_)
        throw std::invalid_argument("sample: data size does not match n x d");
    for (double v : data_)
        if (!std::isfinite(v)) throw std::invalid_argument("sample: non-finite entry");
    lex_order_.resize(n_);
    std::iota(lex_order_.begin(), lex_order_.end(), std::size_t{0});
    std::sort(lex_order_.begin(), lex_order_.end(), [this](std::size_t a, std::size_t b) {
        for (std::size_t k = 0; k < d_; ++k) {
            const double x = data_[a * d_ + k], y = data_[b * d_ + k];
            if (x != y) return x < y;
        }
        return false;
    });
    col_min_.assign(d_, std::numeric_limits<double>::infinity());
    col_max_.assign(d_, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t k = 0; k < d_; ++k) {
            col_min_[k] = std::min(col_min_[k], at(i, k));
            col_max_[k] = std::max(col_max_[k], at(i, k));
        }
    }
}

namespace {

struct AxisSpan {
    std::size_t lo = 0;
    std::size_t count = 0;
};

// Node indices whose coordinate falls within [x - r, x + r].
AxisSpan axis_window(const EvaluationGrid& grid, std::size_t axis, double x, double r) {
    const double lo = grid.lo(axis), step = grid.spacing(axis);
    const auto m = static_cast<long>(grid.nodes(axis));
    auto first = static_cast<long>(std::ceil((x - r - lo) / step - 0.5));
    auto last = static_cast<long>(std::floor((x + r - lo) / step - 0.5));
    first = std::max(first, 0L);
    last = std::min(last, m - 1);
    AxisSpan w;
    if (last < first) return w;
    w.lo = static_cast<std::size_t>(first);
    w.count = static_cast<std::size_t>(last - first + 1);
    return w;
}

} // namespace

GridFunction sum_separable_over_sample(const Sample& sample, GridPtr grid,
                                       const std::vector<std::function<double(double)>>& axis_fn,
                                       const std::vector<double>& radius, double scale) {
    const std::size_t d = grid->dim();
    if (sample.dim() != d || axis_fn.size() != d || radius.size() != d)
        throw std::invalid_argument("estimator: dimension mismatch between sample, kernel, grid");

    GridFunction out(grid);
    std::vector<double>& v = out.values();
    std::vector<AxisSpan> win(d);
    std::vector<std::vector<double>> vals(d);

    for (std::size_t row : sample.lex_order()) {
        bool empty = false;
        for (std::size_t k = 0; k < d; ++k) {
            win[k] = axis_window(*grid, k, sample.at(row, k), radius[k]);
            if (win[k].count == 0) {
                empty = true;
                break;
            }
        }
        if (empty) continue;
        for (std::size_t k = 0; k < d; ++k) {
            vals[k].resize(win[k].count);
            const double x = sample.at(row, k);
            for (std::size_t j = 0; j < win[k].count; ++j) {
                vals[k][j] = axis_fn[k](grid->coord(k, win[k].lo + j) - x);
            }
        }
        if (d == 1) {
            double* dst = v.data() + win[0].lo;
            for (std::size_t j = 0; j < win[0].count; ++j) dst[j] += vals[0][j];
        } else if (d == 2) {
            const std::size_t m1 = grid->nodes(1);
            for (std::size_t j0 = 0; j0 < win[0].count; ++j0) {
                const double a = vals[0][j0];
                double* dst = v.data() + (win[0].lo + j0) * m1 + win[1].lo;
                for (std::size_t j1 = 0; j1 < win[1].count; ++j1) dst[j1] += a * vals[1][j1];
            }
        } else {
            std::vector<std::size_t> idx(d, 0);
            for (;;) {
                double prod = 1.0;
                std::size_t flat = 0;
                for (std::size_t k = 0; k < d; ++k) {
                    prod *= vals[k][idx[k]];
                    flat = flat * grid->nodes(k) + (win[k].lo + idx[k]);
                }
                v[flat] += prod;
                std::size_t k = d;
                while (k-- > 0) {
                    if (++idx[k] < win[k].count) break;
                    idx[k] = 0;
                    if (k == 0) goto done;
                }
            }
        done:;
        }
    }
    for (double& x : v) x *= scale;
    return out;
}

std::vector<double> linear_binning(const Sample& sample, const EvaluationGrid& grid) {
    const std::size_t d = grid.dim();
    if (sample.dim() != d) throw std::invalid_argument("binning: dimension mismatch");
    std::vector<double> bins(grid.size(), 0.0);
    std::vector<std::size_t> base(d);
    std::vector<double> frac(d);
    for (std::size_t row : sample.lex_order()) {
        for (std::size_t k = 0; k < d; ++k) {
            const double u =
                (sample.at(row, k) - grid.lo(k)) / grid.spacing(k) - 0.5;
            const auto m = static_cast<double>(grid.nodes(k) - 1);
            if (u <= 0.0) {
                base[k] = 0;
                frac[k] = 0.0;
            } else if (u >= m) {
                base[k] = grid.nodes(k) - 2;
                frac[k] = 1.0;
            } else {
                base[k] = static_cast<std::size_t>(u);
                frac[k] = u - static_cast<double>(base[k]);
            }
        }
        // Distribute over the 2^d surrounding nodes.
        const std::size_t corners = std::size_t{1} << d;
        for (std::size_t c = 0; c < corners; ++c) {
            double w = 1.0;
            std::size_t flat = 0;
            for (std::size_t k = 0; k < d; ++k) {
                const bool hi = (c >> k) & 1u;
                w *= hi ? frac[k] : 1.0 - frac[k];
                flat = flat * grid.nodes(k) + base[k] + (hi ? 1 : 0);
            }
            if (w != 0.0) bins[flat] += w;
        }
    }
    const double inv_n = 1.0 / static_cast<double>(sample.size());
    for (double& b : bins) b *= inv_n;
    return bins;
}

void convolve_axis(std::vector<double>& values, const EvaluationGrid& grid, std::size_t axis,
                   const std::vector<double>& taps) {
    if (taps.size() % 2 == 0) throw std::invalid_argument("convolve_axis: taps must be centered");
    const std::size_t m = grid.nodes(axis);
    const std::size_t offset = taps.size() / 2;

    // The grid is traversed as outer x m x inner blocks around `axis`.
    std::size_t inner = 1, outer = 1;
    for (std::size_t k = axis + 1; k < grid.dim(); ++k) inner *= grid.nodes(k);
    for (std::size_t k = 0; k < axis; ++k) outer *= grid.nodes(k);

    const bool use_fft = m * taps.size() > (std::size_t{1} << 21) && grid.dim() == 1;
    std::vector<double> line(m), conv;
    std::unique_ptr<detail::RealFft> fft;
    std::vector<std::complex<double>> tap_spec, work;
    if (use_fft) {
        const std::size_t L = detail::next_pow2(m + taps.size() - 1);
        fft = std::make_unique<detail::RealFft>(L);
        tap_spec.resize(fft->spectrum_size());
        work.resize(fft->spectrum_size());
        fft->forward(taps, tap_spec.data());
        conv.resize(L);
    }

    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            double* base = values.data() + (o * m) * inner + in;
            for (std::size_t i = 0; i < m; ++i) line[i] = base[i * inner];
            if (use_fft) {
                fft->forward(line, work.data());
                for (std::size_t i = 0; i < work.size(); ++i) work[i] *= tap_spec[i];
                fft->inverse(work, conv.data());
                for (std::size_t i = 0; i < m; ++i) base[i * inner] = conv[i + offset];
            } else {
                for (std::size_t i = 0; i < m; ++i) {
                    double acc = 0.0;
                    const std::size_t j_lo = offset > i ? offset - i : 0;
                    const std::size_t j_hi =
                        std::min(taps.size(), m - i + offset);
                    for (std::size_t j = j_lo; j < j_hi; ++j) {
                        acc += taps[j] * line[i + j - offset];
                    }
                    base[i * inner] = acc;
                }
            }
        }
    }
}

std::vector<double> kernel_axis_taps(const HigherOrderKernel1D& factor, double h, double spacing) {
    const auto half = static_cast<long>(std::ceil(factor.radius() * h / spacing));
    std::vector<double> taps(static_cast<std::size_t>(2 * half + 1));
    double total = 0.0;
    for (long j = -half; j <= half; ++j) {
        const double v = factor(static_cast<double>(j) * spacing / h) / h;
        taps[static_cast<std::size_t>(j + half)] = v;
        total += v;
    }
    // Renormalize the sampled mass to exactly 1/spacing so discrete smoothing
    // conserves total mass even when the kernel is barely resolved.
    if (total * spacing > 0.0) {
        const double scale = 1.0 / (total * spacing);
        for (double& v : taps) v *= scale;
    }
    return taps;
}

namespace {

DensityEstimate finalize(GridFunction values, const Bandwidth& h, const Bandwidth* eta,
                         const ProductKernel& kernel, bool binned) {
    DensityEstimate est{std::move(values),
                        h.components(),
                        eta ? eta->components() : std::vector<double>{},
                        kernel.factor().base().name,
                        kernel.factor().order(),
                        binned,
                        0.0};
    est.mass_defect = std::fabs(est.values.integral() - 1.0);
    return est;
}

} // namespace

DensityEstimate fit_kde(const Sample& sample, const ProductKernel& kernel, const Bandwidth& h,
                        GridPtr grid, const FitOptions& opts) {
    if (sample.dim() != kernel.dim() || h.dim() != kernel.dim() || grid->dim() != kernel.dim())
        throw std::invalid_argument("fit_kde: sample, kernel, bandwidth, grid dimensions differ");
    const auto& factor = kernel.factor();
    if (opts.binned) {
        std::vector<double> v = linear_binning(sample, *grid);
        for (std::size_t k = 0; k < grid->dim(); ++k) {
            convolve_axis(v, *grid, k, kernel_axis_taps(factor, h[k], grid->spacing(k)));
        }
        return finalize(GridFunction(grid, std::move(v)), h, nullptr, kernel, true);
    }
    std::vector<std::function<double(double)>> fns(grid->dim());
    std::vector<double> radius(grid->dim());
    for (std::size_t k = 0; k < grid->dim(); ++k) {
        const double hk = h[k];
        fns[k] = [&factor, hk](double x) { return factor(x / hk); };
        radius[k] = factor.radius() * hk;
    }
    const double scale = 1.0 / (static_cast<double>(sample.size()) * h.volume());
    return finalize(sum_separable_over_sample(sample, grid, fns, radius, scale), h, nullptr,
                    kernel, false);
}

DensityEstimate fit_aux(const Sample& sample, const ProductKernel& kernel, const Bandwidth& h,
                        const Bandwidth& eta, GridPtr grid, const FitOptions& opts,
                        const ConvKernel* prebuilt) {
    if (sample.dim() != kernel.dim() || h.dim() != kernel.dim() || eta.dim() != kernel.dim() ||
        grid->dim() != kernel.dim())
        throw std::invalid_argument("fit_aux: sample, kernel, bandwidth, grid dimensions differ");
    const auto& factor = kernel.factor();
    if (opts.binned) {
        std::vector<double> v = linear_binning(sample, *grid);
        for (std::size_t k = 0; k < grid->dim(); ++k) {
            const double spacing = grid->spacing(k);
            const std::vector<double> taps = detail::linear_convolve(
                kernel_axis_taps(factor, h[k], spacing), kernel_axis_taps(factor, eta[k], spacing), spacing);
            convolve_axis(v, *grid, k, taps);
        }
        return finalize(GridFunction(grid, std::move(v)), h, &eta, kernel, true);
    }
    std::optional<ConvKernel> local;
    const ConvKernel* conv = prebuilt;
    if (!conv) {
        local.emplace(convolve_pair(kernel, h, eta));
        conv = &*local;
    }
    std::vector<std::function<double(double)>> fns(grid->dim());
    std::vector<double> radius(grid->dim());
    for (std::size_t k = 0; k < grid->dim(); ++k) {
        const auto& ax = conv->axis(k);
        fns[k] = [&ax](double x) { return ax.interp(x); };
        radius[k] = ax.radius();
    }
    const double scale = 1.0 / static_cast<double>(sample.size());
    return finalize(sum_separable_over_sample(sample, grid, fns, radius, scale), h, &eta, kernel,
                    false);
}

GridFunction smoothed_truth(const GridFunction& f_true, const ProductKernel& kernel,
                            const Bandwidth& h) {
    const EvaluationGrid& grid = f_true.grid();
    if (h.dim() != grid.dim() || kernel.dim() != grid.dim())
        throw std::invalid_argument("smoothed_truth: dimension mismatch");
    const auto& factor = kernel.factor();
    for (std::size_t k = 0; k < grid.dim(); ++k) {
        if (2.0 * factor.radius() * h[k] >= grid.hi(k) - grid.lo(k))
            throw std::invalid_argument(
                "smoothed_truth: grid box too small for the kernel support on axis " +
                std::to_string(k));
    }
    std::vector<double> v = f_true.values();
    for (std::size_t k = 0; k < grid.dim(); ++k) {
        std::vector<double> taps = kernel_axis_taps(factor, h[k], grid.spacing(k));
        // Quadrature weight: these taps integrate a function sampled on the grid.
        for (double& t : taps) t *= grid.spacing(k);
        convolve_axis(v, grid, k, taps);
    }
    return GridFunction(f_true.grid_ptr(), std::move(v));
}

GridPtr build_eval_grid(const std::vector<std::array<double, 2>>& core_box,
                        const ProductKernel& kernel, const std::vector<double>& h_inflate,
                        double spacing, double margin) {
    if (core_box.size() != kernel.dim() || h_inflate.size() != kernel.dim())
        throw std::invalid_argument("build_eval_grid: dimension mismatch");
    if (!(spacing > 0.0)) throw std::invalid_argument("build_eval_grid: spacing must be > 0");
    std::vector<std::array<double, 2>> bounds(core_box);
    std::vector<std::size_t> nodes(core_box.size());
    for (std::size_t k = 0; k < core_box.size(); ++k) {
        const double r = kernel.radius() * h_inflate[k] * margin;
        bounds[k][0] -= r;
        bounds[k][1] += r;
        nodes[k] = std::max<std::size_t>(
            2, static_cast<std::size_t>(std::ceil((bounds[k][1] - bounds[k][0]) / spacing)));
    }
    return make_grid(std::move(bounds), std::move(nodes));
}

std::vector<std::array<double, 2>> data_box(const Sample& sample) {
    std::vector<std::array<double, 2>> box(sample.dim());
    for (std::size_t k = 0; k < sample.dim(); ++k) box[k] = {sample.col_min(k), sample.col_max(k)};
    return box;
}

} // namespace lskde
