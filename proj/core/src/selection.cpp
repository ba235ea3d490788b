#include "lskde/selection.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>

#include "fft.hpp"
#include "lskde/parallel.hpp"

namespace lskde {

// ---------------------------------------------------------------- bandwidths

BandwidthGrid BandwidthGrid::geometric(std::vector<double> h_min, std::vector<double> h_max,
                                       double ratio, std::size_t cap, bool allow_large) {
    if (h_min.empty() || h_min.size() != h_max.size())
        throw std::invalid_argument("bandwidth grid: h_min/h_max dimension mismatch");
    if (!(ratio > 1.0)) throw std::invalid_argument("bandwidth grid: ratio must be > 1");
    BandwidthGrid g;
    g.h_min_ = std::move(h_min);
    g.h_max_ = std::move(h_max);
    g.axis_nodes_.resize(g.h_min_.size());
    std::size_t total = 1;
    for (std::size_t k = 0; k < g.h_min_.size(); ++k) {
        const double lo = g.h_min_[k], hi = g.h_max_[k];
        if (!(lo > 0.0) || !(lo <= hi) || !(hi <= 1.0))
            throw std::invalid_argument(
                "bandwidth grid: need 0 < h_min <= h_max <= 1 on axis " + std::to_string(k));
        auto& nodes = g.axis_nodes_[k];
        double v = lo;
        nodes.push_back(v);
        while (v * ratio <= hi * (1.0 + 1e-12)) {
            v *= ratio;
            if (v > hi || std::fabs(v - hi) <= 1e-12 * hi) v = hi;
            nodes.push_back(v);
        }
        if (nodes.back() < hi * (1.0 - 1e-12)) nodes.push_back(hi);
        total *= nodes.size();
    }
    if (total > cap && !allow_large)
        throw grid_cap_error("bandwidth grid has " + std::to_string(total) +
                             " points, exceeding the cap of " + std::to_string(cap) +
                             "; enable the large-grid override to proceed");
    // Tensor combinations, axis 0 slowest; enumeration order is lexicographic.
    std::vector<std::size_t> idx(g.axis_nodes_.size(), 0);
    g.members_.reserve(total);
    for (;;) {
        std::vector<double> h(g.axis_nodes_.size());
        for (std::size_t k = 0; k < h.size(); ++k) h[k] = g.axis_nodes_[k][idx[k]];
        g.members_.emplace_back(std::move(h));
        std::size_t k = g.axis_nodes_.size();
        bool done = true;
        while (k-- > 0) {
            if (++idx[k] < g.axis_nodes_[k].size()) {
                done = false;
                break;
            }
            idx[k] = 0;
        }
        if (done) break;
    }
    return g;
}

BandwidthGrid BandwidthGrid::geometric_count(std::vector<double> h_min, std::vector<double> h_max,
                                             std::size_t count, std::size_t cap,
                                             bool allow_large) {
    if (count == 0) throw std::invalid_argument("bandwidth grid: node count must be >= 1");
    if (count == 1) {
        BandwidthGrid g;
        g.h_min_ = h_min;
        g.h_max_ = std::move(h_max);
        g.axis_nodes_.resize(g.h_min_.size());
        for (std::size_t k = 0; k < g.h_min_.size(); ++k) g.axis_nodes_[k] = {g.h_min_[k]};
        g.members_.emplace_back(std::move(h_min));
        return g;
    }
    double ratio = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < h_min.size(); ++k) {
        if (h_max[k] > h_min[k]) {
            ratio = std::min(
                ratio, std::pow(h_max[k] / h_min[k], 1.0 / static_cast<double>(count - 1)));
        }
    }
    if (!std::isfinite(ratio)) ratio = 2.0; // all axes degenerate
    return geometric(std::move(h_min), std::move(h_max), ratio, cap, allow_large);
}

double BandwidthGrid::v_min() const {
    double v = 1.0;
    for (double h : h_min_) v *= h;
    return v;
}

double BandwidthGrid::v_max() const {
    double v = 1.0;
    for (double h : h_max_) v *= h;
    return v;
}

double BandwidthGrid::a_diag() const {
    double a = 1.0;
    for (std::size_t k = 0; k < h_min_.size(); ++k) {
        a *= std::max(1.0, std::log(h_max_[k] / h_min_[k]));
    }
    return a;
}

double BandwidthGrid::b_diag() const { return std::max(1.0, std::log2(v_max() / v_min())); }

// ------------------------------------------------------------------ majorant

MajorantConfig MajorantConfig::make(double s, std::size_t n, double q) {
    if (!(s >= 1.0) || !std::isfinite(s))
        throw std::invalid_argument("majorant config: s must be a finite real >= 1");
    if (!(q >= 1.0)) throw std::invalid_argument("majorant config: q must be >= 1");
    if (n == 0) throw std::invalid_argument("majorant config: sample size must be >= 1");
    return MajorantConfig{s, q, n};
}

double MajorantConfig::rosenthal() const {
    if (!(s > 2.0)) throw std::logic_error("rosenthal constant is used only for s > 2");
    return 15.0 * s / std::log(s);
}

double rho_det(double norm_s, double norm_2, const MajorantConfig& cfg) {
    if (norm_s < 0.0 || norm_2 < 0.0) throw std::invalid_argument("rho: negative norm");
    switch (cfg.branch()) {
        case MajorantConfig::Branch::sub_two:
            return 4.0 * std::pow(static_cast<double>(cfg.n), 1.0 / cfg.s - 1.0) * norm_s;
        case MajorantConfig::Branch::two:
            return norm_2 / std::sqrt(static_cast<double>(cfg.n));
        case MajorantConfig::Branch::super_two:
            throw std::invalid_argument("rho_det covers s in [1,2] only; use rho_hat for s > 2");
    }
    return 0.0;
}

namespace {

void check_grid_covers(const EvaluationGrid& grid, const Sample& sample,
                       const WeightFunction& u) {
    for (std::size_t k = 0; k < grid.dim(); ++k) {
        const double r = u.support_radius(k);
        if (sample.col_min(k) - r < grid.lo(k) || sample.col_max(k) + r > grid.hi(k))
            throw std::invalid_argument(
                "rho_hat: evaluation grid does not cover the data range inflated by the "
                "weight-function support on axis " +
                std::to_string(k));
    }
}

// n^-1 sum_i U^2(t - X_i) on the grid; separable fast paths for the two
// concrete kernel shapes, full evaluation for anything else.
GridFunction squared_weight_sum(const WeightFunction& u, const Sample& sample, GridPtr grid) {
    const std::size_t d = grid->dim();
    const double inv_n = 1.0 / static_cast<double>(sample.size());
    if (const auto* sk = dynamic_cast<const ScaledKernel*>(&u)) {
        const auto& factor = sk->kernel().factor();
        std::vector<std::function<double(double)>> fns(d);
        std::vector<double> radius(d);
        for (std::size_t k = 0; k < d; ++k) {
            const double hk = sk->bandwidth()[k];
            fns[k] = [&factor, hk](double x) {
                const double v = factor(x / hk);
                return v * v;
            };
            radius[k] = factor.radius() * hk;
        }
        const double vol = sk->bandwidth().volume();
        return sum_separable_over_sample(sample, grid, fns, radius, inv_n / (vol * vol));
    }
    if (const auto* ck = dynamic_cast<const ConvKernel*>(&u)) {
        std::vector<std::function<double(double)>> fns(d);
        std::vector<double> radius(d);
        for (std::size_t k = 0; k < d; ++k) {
            const auto& ax = ck->axis(k);
            fns[k] = [&ax](double x) {
                const double v = ax.interp(x);
                return v * v;
            };
            radius[k] = ax.radius();
        }
        return sum_separable_over_sample(sample, grid, fns, radius, inv_n);
    }
    GridFunction out(grid);
    std::vector<double> t(d), diff(d);
    for (std::size_t j = 0; j < grid->size(); ++j) {
        grid->node(j, t);
        double acc = 0.0;
        for (std::size_t i = 0; i < sample.size(); ++i) {
            for (std::size_t k = 0; k < d; ++k) diff[k] = t[k] - sample.at(i, k);
            const double v = u.eval(diff);
            acc += v * v;
        }
        out[j] = acc * inv_n;
    }
    return out;
}

// g_s from norms alone, valid in the deterministic branches s <= 2.
double g_from_norms(double norm_s, double norm_2, const MajorantConfig& cfg) {
    switch (cfg.branch()) {
        case MajorantConfig::Branch::sub_two:
            return 32.0 * rho_det(norm_s, norm_2, cfg);
        case MajorantConfig::Branch::two:
            return 25.0 / 3.0 * rho_det(norm_s, norm_2, cfg);
        case MajorantConfig::Branch::super_two:
            throw std::logic_error("g_from_norms called with s > 2");
    }
    return 0.0;
}

} // namespace

double rho_hat(const WeightFunction& u, const Sample& sample, const EvaluationGrid& grid,
               const MajorantConfig& cfg) {
    if (cfg.branch() != MajorantConfig::Branch::super_two)
        throw std::invalid_argument("rho_hat requires s > 2; use rho_det otherwise");
    check_grid_covers(grid, sample, u);
    GridPtr alias(std::shared_ptr<const EvaluationGrid>{}, &grid);
    const GridFunction s2 = squared_weight_sum(u, sample, alias);
    double inner = 0.0;
    const double half_s = cfg.s / 2.0;
    for (double v : s2.values()) inner += std::pow(v, half_s);
    inner *= grid.cell_volume();
    const double n = static_cast<double>(cfg.n);
    return cfg.rosenthal() * (std::pow(inner, 1.0 / cfg.s) / std::sqrt(n) +
                              2.0 * std::pow(n, 1.0 / cfg.s - 1.0) * u.norm(cfg.s));
}

double r_hat(const WeightFunction& u, const Sample& sample, const EvaluationGrid& grid,
             const MajorantConfig& cfg) {
    return std::max(rho_hat(u, sample, grid, cfg),
                    u.norm(2.0) / std::sqrt(static_cast<double>(cfg.n)));
}

double majorant_g(const WeightFunction& u, const MajorantConfig& cfg, const Sample* sample,
                  const EvaluationGrid* grid) {
    if (cfg.branch() == MajorantConfig::Branch::super_two) {
        if (!sample || !grid)
            throw std::invalid_argument("g_s needs the sample and evaluation grid when s > 2");
        return 32.0 * r_hat(u, *sample, *grid, cfg);
    }
    return g_from_norms(u.norm(cfg.s), u.norm(2.0), cfg);
}

MajorantTable::MajorantTable(std::vector<double> g_single, std::vector<double> g_conv_upper)
    : g_single_(std::move(g_single)), g_conv_upper_(std::move(g_conv_upper)) {
    const std::size_t k = g_single_.size();
    if (g_conv_upper_.size() != k * (k + 1) / 2)
        throw std::invalid_argument("majorant table: packed pair count mismatch");
    for (double v : g_single_)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("majorant table: entries must be finite nonnegative");
    for (double v : g_conv_upper_)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("majorant table: entries must be finite nonnegative");
    m_star_.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        double sup = 0.0;
        for (std::size_t j = 0; j < k; ++j) sup = std::max(sup, g_conv(j, i));
        m_star_[i] = g_single_[i] + sup;
    }
}

std::size_t MajorantTable::upper_index(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    const std::size_t k = g_single_.size();
    return i * k - i * (i - 1) / 2 + (j - i);
}

// --------------------------------------------------------------- the engine

namespace {

std::vector<std::pair<std::size_t, std::size_t>> unordered_pairs(std::size_t k) {
    std::vector<std::pair<std::size_t, std::size_t>> p;
    p.reserve(k * (k + 1) / 2);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i; j < k; ++j) p.emplace_back(i, j);
    return p;
}

bool bandwidth_less(const Bandwidth& a, const Bandwidth& b) {
    if (a.volume() != b.volume()) return a.volume() < b.volume();
    return a.components() < b.components();
}

struct CriterionTrace {
    std::vector<double> criterion;
    std::vector<double> sup_positive;
    std::size_t selected = 0;
};

// R_hat per h from the pairwise norm matrix, then the deterministic argmin
// (criterion, then smallest V_h, then lexicographic).
CriterionTrace assemble_criterion(const MajorantTable& table, const std::vector<double>& diffs,
                                  const BandwidthGrid& bandwidths) {
    const std::size_t k = table.size();
    CriterionTrace tr;
    tr.criterion.resize(k);
    tr.sup_positive.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        double sup = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            sup = std::max(sup, positive_part(diffs[i * k + j] - table.m(i, j)));
        }
        tr.sup_positive[i] = sup;
        tr.criterion[i] = sup + table.m_star(i);
    }
    for (std::size_t i = 1; i < k; ++i) {
        const double ri = tr.criterion[i], rs = tr.criterion[tr.selected];
        if (ri < rs || (ri == rs && bandwidth_less(bandwidths[i], bandwidths[tr.selected]))) {
            tr.selected = i;
        }
    }
    return tr;
}

} // namespace

struct SelectionEngine::Impl {
    enum class Mode { direct, binned_generic, spectral };

    ProductKernel kernel;
    BandwidthGrid bandwidths;
    GridPtr grid;
    MajorantConfig cfg;
    SelectionOptions opts;
    Mode mode = Mode::direct;

    std::vector<ScaledKernel> scaled;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::optional<ConvKernel>> convs; // direct / binned_generic modes
    std::optional<MajorantTable> table;           // data-free when s <= 2

    // Spectral state (binned, d = 1): signed zero-phase real spectra of the
    // per-bandwidth kernel taps and the derived quadratic profile used by the
    // pairwise Parseval sums.
    std::size_t m = 0, L = 0, spec = 0;
    double dx = 0.0;
    std::unique_ptr<detail::RealFft> fft;
    std::vector<std::vector<double>> f_spec; // per h: F_h(t), real
    std::vector<std::vector<double>> d_prof; // per h: (dx F)^2 - 2 dx F

    Impl(ProductKernel k, BandwidthGrid bw, GridPtr g, MajorantConfig c, SelectionOptions o)
        : kernel(std::move(k)), bandwidths(std::move(bw)), grid(std::move(g)), cfg(c), opts(o) {
        if (bandwidths.size() == 0) throw std::invalid_argument("selection: empty bandwidth set");
        if (kernel.dim() != bandwidths.dim() || kernel.dim() != grid->dim())
            throw std::invalid_argument("selection: kernel, bandwidths, grid dimensions differ");
        if (opts.binned && cfg.branch() == MajorantConfig::Branch::super_two)
            throw std::invalid_argument("selection: binned evaluation supports s <= 2 only");
        pairs = unordered_pairs(bandwidths.size());
        scaled.reserve(bandwidths.size());
        for (const auto& h : bandwidths.members()) scaled.emplace_back(kernel, h);
        if (!opts.binned) {
            mode = Mode::direct;
            init_convolutions();
        } else if (grid->dim() == 1) {
            mode = Mode::spectral;
            init_spectral();
        } else {
            mode = Mode::binned_generic;
            init_convolutions();
        }
        if (cfg.branch() != MajorantConfig::Branch::super_two) build_static_table();
    }

    void init_convolutions() {
        convs.resize(pairs.size());
        parallel_for(pairs.size(), opts.threads, [&](std::size_t p) {
            const auto [i, j] = pairs[p];
            convs[p].emplace(
                convolve_pair(kernel, bandwidths[i], bandwidths[j], opts.conv_samples));
        });
    }

    std::vector<double> taps_for(std::size_t i) const {
        return kernel_axis_taps(kernel.factor(), bandwidths[i][0], dx);
    }

    void init_spectral() {
        m = grid->nodes(0);
        dx = grid->spacing(0);
        std::size_t max_half = 0;
        for (std::size_t i = 0; i < bandwidths.size(); ++i) {
            const auto half = static_cast<std::size_t>(
                std::ceil(kernel.radius() * bandwidths[i][0] / dx));
            max_half = std::max(max_half, half);
        }
        L = detail::next_pow2(m + 4 * max_half + 8);
        fft = std::make_unique<detail::RealFft>(L);
        spec = fft->spectrum_size();
        f_spec.resize(bandwidths.size());
        d_prof.resize(bandwidths.size());
        std::vector<double> wrapped(L);
        std::vector<std::complex<double>> out(spec);
        for (std::size_t i = 0; i < bandwidths.size(); ++i) {
            std::fill(wrapped.begin(), wrapped.end(), 0.0);
            const std::vector<double> taps = taps_for(i);
            const long half = static_cast<long>(taps.size() / 2);
            for (long j = -half; j <= half; ++j) {
                const auto pos = static_cast<std::size_t>((j + static_cast<long>(L)) %
                                                          static_cast<long>(L));
                wrapped[pos] = taps[static_cast<std::size_t>(j + half)];
            }
            fft->forward(wrapped, out.data());
            f_spec[i].resize(spec);
            d_prof[i].resize(spec);
            for (std::size_t t = 0; t < spec; ++t) {
                const double f = out[t].real(); // symmetric taps: zero imaginary part
                const double g = dx * f;
                f_spec[i][t] = f;
                d_prof[i][t] = g * g - 2.0 * g;
            }
        }
    }

    // Data-free majorant table (s <= 2). Spectral mode measures the pair
    // kernels exactly as the binned fits apply them (taps convolved at grid
    // spacing); the other modes use the materialized convolutions.
    void build_static_table() {
        std::vector<double> g_single(bandwidths.size());
        for (std::size_t i = 0; i < bandwidths.size(); ++i) {
            g_single[i] = g_from_norms(scaled[i].norm(cfg.s), scaled[i].norm(2.0), cfg);
        }
        std::vector<double> g_conv(pairs.size());
        if (mode == Mode::spectral) {
            std::vector<std::vector<double>> taps(bandwidths.size());
            for (std::size_t i = 0; i < bandwidths.size(); ++i) taps[i] = taps_for(i);
            parallel_for(pairs.size(), opts.threads, [&](std::size_t p) {
                const auto [i, j] = pairs[p];
                const std::vector<double> pt = detail::linear_convolve(taps[i], taps[j], dx);
                double acc_s = 0.0, acc_2 = 0.0;
                for (double v : pt) {
                    acc_s += std::pow(std::fabs(v), cfg.s);
                    acc_2 += v * v;
                }
                g_conv[p] =
                    g_from_norms(std::pow(acc_s * dx, 1.0 / cfg.s), std::sqrt(acc_2 * dx), cfg);
            });
        } else {
            parallel_for(pairs.size(), opts.threads, [&](std::size_t p) {
                g_conv[p] = g_from_norms(convs[p]->norm(cfg.s), convs[p]->norm(2.0), cfg);
            });
        }
        table.emplace(std::move(g_single), std::move(g_conv));
    }

    MajorantTable build_sample_table(const Sample& sample) const {
        std::vector<double> g_single(bandwidths.size());
        parallel_for(bandwidths.size(), opts.threads, [&](std::size_t i) {
            g_single[i] = majorant_g(scaled[i], cfg, &sample, grid.get());
        });
        std::vector<double> g_conv(pairs.size());
        parallel_for(pairs.size(), opts.threads, [&](std::size_t p) {
            g_conv[p] = majorant_g(*convs[p], cfg, &sample, grid.get());
        });
        return MajorantTable(std::move(g_single), std::move(g_conv));
    }

    SelectionResult finish(const MajorantTable& tab, DensityEstimate estimate,
                           const CriterionTrace& tr) const {
        SelectionResult res;
        res.selected = tr.selected;
        res.h_selected = bandwidths[tr.selected].components();
        res.criterion = tr.criterion;
        res.sup_positive = tr.sup_positive;
        res.m_star.resize(bandwidths.size());
        res.g_single.resize(bandwidths.size());
        for (std::size_t i = 0; i < bandwidths.size(); ++i) {
            res.m_star[i] = tab.m_star(i);
            res.g_single[i] = tab.g_single(i);
        }
        res.estimate = std::move(estimate);
        res.a_diag = bandwidths.a_diag();
        res.b_diag = bandwidths.b_diag();
        res.grid_nodes = grid->size();
        res.binned = opts.binned;
        return res;
    }

    SelectionResult run_fits(const Sample& sample, const GridFunction* truth,
                             std::vector<double>* fixed_errors, double* selected_error) const {
        const std::size_t k = bandwidths.size();
        const MajorantTable tab = table ? *table : build_sample_table(sample);
        const FitOptions fit_opts{mode == Mode::binned_generic};
        std::vector<DensityEstimate> fits(k,
                                          DensityEstimate{GridFunction(grid), {}, {}, "", 1,
                                                          false, 0.0});
        parallel_for(k, opts.threads, [&](std::size_t i) {
            fits[i] = fit_kde(sample, kernel, bandwidths[i], grid, fit_opts);
        });

        std::vector<double> diffs(k * k, 0.0);
        parallel_for(pairs.size(), opts.threads, [&](std::size_t p) {
            const auto [i, j] = pairs[p];
            const ConvKernel* pre = convs.empty() ? nullptr : &*convs[p];
            const DensityEstimate aux =
                fit_aux(sample, kernel, bandwidths[i], bandwidths[j], grid, fit_opts, pre);
            diffs[i * k + j] = lp_norm(aux.values - fits[j].values, cfg.s);
            diffs[j * k + i] = lp_norm(aux.values - fits[i].values, cfg.s);
        });

        const CriterionTrace tr = assemble_criterion(tab, diffs, bandwidths);
        if (truth) {
            std::vector<double> errs(k);
            for (std::size_t i = 0; i < k; ++i) errs[i] = lp_norm(fits[i].values - *truth, cfg.s);
            if (selected_error) *selected_error = errs[tr.selected];
            if (fixed_errors) *fixed_errors = std::move(errs);
        }
        return finish(tab, std::move(fits[tr.selected]), tr);
    }

    SelectionResult run_spectral(const Sample& sample, const GridFunction* truth,
                                 std::vector<double>* fixed_errors,
                                 double* selected_error) const {
        const std::size_t k = bandwidths.size();
        const MajorantTable& tab = *table;
        const std::vector<double> bins = linear_binning(sample, *grid);
        std::vector<std::complex<double>> bc(spec);
        fft->forward(bins, bc.data());
        // Parseval weights: interior half-spectrum bins count twice.
        std::vector<double> bb(spec);
        for (std::size_t t = 0; t < spec; ++t) {
            const double w = (t == 0 || t + 1 == spec) ? 1.0 : 2.0;
            bb[t] = w * std::norm(bc[t]);
        }
        std::vector<double> n2(k);
        parallel_for(k, opts.threads, [&](std::size_t j) {
            double acc = 0.0;
            const double* f = f_spec[j].data();
            for (std::size_t t = 0; t < spec; ++t) acc += bb[t] * f[t] * f[t];
            n2[j] = acc;
        });
        const double scale = dx / static_cast<double>(L);
        std::vector<double> diffs(k * k, 0.0);
        if (cfg.s == 2.0) {
            // || f_{h,eta} - f_eta ||_2^2 via Parseval: the difference spectrum
            // is B F_eta (dx F_h - 1), so the sum splits into the profile term
            // and the plain energy of B F_eta.
            parallel_for(pairs.size(), opts.threads, [&](std::size_t p) {
                const auto [i, j] = pairs[p];
                double acc_ij = 0.0, acc_ji = 0.0;
                const double* fi = f_spec[i].data();
                const double* fj = f_spec[j].data();
                const double* di = d_prof[i].data();
                const double* dj = d_prof[j].data();
                for (std::size_t t = 0; t < spec; ++t) {
                    const double b = bb[t];
                    acc_ij += b * (fj[t] * fj[t]) * di[t];
                    acc_ji += b * (fi[t] * fi[t]) * dj[t];
                }
                diffs[i * k + j] = std::sqrt(std::max(0.0, scale * (acc_ij + n2[j])));
                diffs[j * k + i] = std::sqrt(std::max(0.0, scale * (acc_ji + n2[i])));
            });
        } else {
            // s in [1,2): materialize each pair difference and integrate its
            // |.|^s over the padded line (the content is support-limited).
            parallel_for(pairs.size(), opts.threads, [&](std::size_t p) {
                const auto [i, j] = pairs[p];
                std::vector<std::complex<double>> y(spec);
                std::vector<double> buf(L);
                for (int dir = 0; dir < 2; ++dir) {
                    const std::size_t a = dir == 0 ? i : j;
                    const std::size_t b = dir == 0 ? j : i;
                    if (dir == 1 && i == j) break;
                    for (std::size_t t = 0; t < spec; ++t) {
                        y[t] = bc[t] * f_spec[b][t] * (dx * f_spec[a][t] - 1.0);
                    }
                    fft->inverse(y, buf.data());
                    double acc = 0.0;
                    for (double v : buf) acc += std::pow(std::fabs(v), cfg.s);
                    diffs[a * k + b] = std::pow(acc * dx, 1.0 / cfg.s);
                }
                if (i == j) diffs[j * k + i] = diffs[i * k + j];
            });
        }
        const CriterionTrace tr = assemble_criterion(tab, diffs, bandwidths);

        // Values of the selected estimate; zero-phase filtering keeps node i
        // at buffer index i.
        std::vector<std::complex<double>> sel(spec);
        for (std::size_t t = 0; t < spec; ++t) sel[t] = bc[t] * f_spec[tr.selected][t];
        std::vector<double> buf(L);
        fft->inverse(sel, buf.data());
        std::vector<double> values(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(m));
        DensityEstimate est{GridFunction(grid, std::move(values)),
                            bandwidths[tr.selected].components(),
                            {},
                            kernel.factor().base().name,
                            kernel.factor().order(),
                            true,
                            0.0};
        est.mass_defect = std::fabs(est.values.integral() - 1.0);

        if (truth) {
            std::vector<std::complex<double>> tf(spec);
            fft->forward(truth->values(), tf.data());
            std::vector<double> errs(k);
            if (cfg.s == 2.0) {
                std::vector<double> cross(spec), tnorm(spec);
                for (std::size_t t = 0; t < spec; ++t) {
                    const double w = (t == 0 || t + 1 == spec) ? 1.0 : 2.0;
                    cross[t] = w * (bc[t].real() * tf[t].real() + bc[t].imag() * tf[t].imag());
                    tnorm[t] = w * std::norm(tf[t]);
                }
                for (std::size_t i = 0; i < k; ++i) {
                    const double* f = f_spec[i].data();
                    double acc = 0.0;
                    for (std::size_t t = 0; t < spec; ++t) {
                        acc += bb[t] * f[t] * f[t] - 2.0 * f[t] * cross[t] + tnorm[t];
                    }
                    errs[i] = std::sqrt(std::max(0.0, scale * acc));
                }
            } else {
                std::vector<std::complex<double>> y(spec);
                std::vector<double> tbuf(L);
                for (std::size_t i = 0; i < k; ++i) {
                    for (std::size_t t = 0; t < spec; ++t) y[t] = bc[t] * f_spec[i][t] - tf[t];
                    fft->inverse(y, tbuf.data());
                    double acc = 0.0;
                    for (double v : tbuf) acc += std::pow(std::fabs(v), cfg.s);
                    errs[i] = std::pow(acc * dx, 1.0 / cfg.s);
                }
            }
            if (selected_error) *selected_error = errs[tr.selected];
            if (fixed_errors) *fixed_errors = std::move(errs);
        }
        return finish(tab, std::move(est), tr);
    }

    SelectionResult run(const Sample& sample, const GridFunction* truth,
                        std::vector<double>* fixed_errors, double* selected_error) const {
        if (sample.dim() != kernel.dim())
            throw std::invalid_argument("selection: sample dimension mismatch");
        if (sample.size() != cfg.n)
            throw std::invalid_argument("selection: sample size differs from configured n");
        if (truth && truth->grid_ptr() != grid)
            throw std::invalid_argument("selection: truth values live on a different grid");
        if (mode == Mode::spectral)
            return run_spectral(sample, truth, fixed_errors, selected_error);
        return run_fits(sample, truth, fixed_errors, selected_error);
    }
};

SelectionEngine::SelectionEngine(ProductKernel kernel, BandwidthGrid bandwidths, GridPtr grid,
                                 MajorantConfig cfg, SelectionOptions opts)
    : impl_(std::make_unique<Impl>(std::move(kernel), std::move(bandwidths), std::move(grid), cfg,
                                   opts)) {}

SelectionEngine::~SelectionEngine() = default;

SelectionResult SelectionEngine::run(const Sample& sample, const GridFunction* truth,
                                     std::vector<double>* fixed_errors,
                                     double* selected_error) const {
    return impl_->run(sample, truth, fixed_errors, selected_error);
}

const BandwidthGrid& SelectionEngine::bandwidths() const { return impl_->bandwidths; }
const GridPtr& SelectionEngine::grid() const { return impl_->grid; }
const MajorantConfig& SelectionEngine::config() const { return impl_->cfg; }
const MajorantTable* SelectionEngine::prebuilt_table() const {
    return impl_->table ? &*impl_->table : nullptr;
}

MajorantTable build_majorants(const Sample& sample, const ProductKernel& kernel,
                              const BandwidthGrid& bandwidths, const EvaluationGrid& grid,
                              const MajorantConfig& cfg, const SelectionOptions& opts) {
    if (kernel.dim() != bandwidths.dim() || kernel.dim() != grid.dim() ||
        sample.dim() != kernel.dim())
        throw std::invalid_argument("build_majorants: dimension mismatch");
    const std::size_t k = bandwidths.size();
    std::vector<double> g_single(k);
    for (std::size_t i = 0; i < k; ++i) {
        const ScaledKernel u(kernel, bandwidths[i]);
        g_single[i] = majorant_g(u, cfg, &sample, &grid);
    }
    const auto pairs = unordered_pairs(k);
    std::vector<double> g_conv(pairs.size());
    parallel_for(pairs.size(), opts.threads, [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        const ConvKernel u =
            convolve_pair(kernel, bandwidths[i], bandwidths[j], opts.conv_samples);
        g_conv[p] = majorant_g(u, cfg, &sample, &grid);
    });
    return MajorantTable(std::move(g_single), std::move(g_conv));
}

double criterion(std::size_t h_index, const Sample& sample, const ProductKernel& kernel,
                 const BandwidthGrid& bandwidths, GridPtr grid, const MajorantConfig& cfg,
                 const MajorantTable& table, const std::vector<DensityEstimate>& fitted,
                 const SelectionOptions& opts) {
    const std::size_t k = bandwidths.size();
    if (h_index >= k) throw std::invalid_argument("criterion: bandwidth index out of range");
    if (table.size() != k) throw std::invalid_argument("criterion: table size mismatch");
    if (fitted.size() != k)
        throw std::invalid_argument("criterion: fitted cache must hold one estimate per h");
    for (std::size_t j = 0; j < k; ++j) {
        if (fitted[j].values.grid_ptr() != grid)
            throw std::invalid_argument("criterion: cached estimate lives on a different grid");
        if (fitted[j].is_aux() || fitted[j].h != bandwidths[j].components())
            throw std::invalid_argument("criterion: fitted cache out of order");
    }
    double sup = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const ConvKernel conv =
            convolve_pair(kernel, bandwidths[h_index], bandwidths[j], opts.conv_samples);
        const DensityEstimate aux = fit_aux(sample, kernel, bandwidths[h_index], bandwidths[j],
                                            grid, FitOptions{}, &conv);
        const double diff = lp_norm(aux.values - fitted[j].values, cfg.s);
        sup = std::max(sup, positive_part(diff - table.m(h_index, j)));
    }
    return sup + table.m_star(h_index);
}

SelectionResult select(const Sample& sample, const ProductKernel& kernel,
                       const BandwidthGrid& bandwidths, GridPtr grid, const MajorantConfig& cfg,
                       const SelectionOptions& opts) {
    SelectionEngine engine(kernel, bandwidths, std::move(grid), cfg, opts);
    return engine.run(sample);
}

} // namespace lskde
