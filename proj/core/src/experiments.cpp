#include "lskde/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lskde/parallel.hpp"

namespace lskde {
namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double norm_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
}

// Bisection to a 1e-10 bracket; cdf must be nondecreasing on [lo, hi].
double invert_cdf(const std::function<double(double)>& cdf, double lo, double hi, double u) {
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (cdf(mid) < u) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

// Midpoint quadrature of the density over its box with one Richardson step.
double box_integral(const TestDensity& density) {
    const std::size_t base = density.dim == 1 ? 8192 : 1024;
    auto midpoint = [&](std::size_t nodes) {
        std::vector<std::size_t> counts(density.dim, nodes);
        const EvaluationGrid grid(density.box, counts);
        std::vector<double> t(density.dim);
        double acc = 0.0;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            grid.node(j, t);
            acc += density.pdf(t);
        }
        return acc * grid.cell_volume();
    };
    const double coarse = midpoint(base);
    const double fine = midpoint(2 * base);
    return (4.0 * fine - coarse) / 3.0;
}

void validate_density(const TestDensity& density) {
    if (density.box.size() != density.dim || density.alpha_declared.size() != density.dim)
        throw std::logic_error("density " + density.name + ": inconsistent dimensions");
    const double mass = box_integral(density);
    if (std::fabs(mass - 1.0) > 1e-6)
        throw std::logic_error("density " + density.name +
                               ": integral over its box differs from 1 beyond 1e-6");
}

TestDensity make_gauss1d() {
    TestDensity f;
    f.name = "gauss1d";
    f.dim = 1;
    f.alpha_declared = {std::numeric_limits<double>::infinity()};
    f.box = {{-5.0, 5.0}};
    const double z = norm_cdf(5.0) - norm_cdf(-5.0);
    f.pdf = [z](std::span<const double> t) {
        if (std::fabs(t[0]) > 5.0) return 0.0;
        return norm_pdf(t[0], 0.0, 1.0) / z;
    };
    auto cdf = [z](double x) { return (norm_cdf(x) - norm_cdf(-5.0)) / z; };
    f.draw = [cdf](Philox4x64& rng, std::span<double> out) {
        out[0] = invert_cdf(cdf, -5.0, 5.0, rng.next_double());
    };
    return f;
}

TestDensity make_mixture1d() {
    TestDensity f;
    f.name = "mixture1d";
    f.dim = 1;
    f.alpha_declared = {std::numeric_limits<double>::infinity()};
    f.box = {{-3.5, 3.5}};
    auto mix_cdf_raw = [](double x) {
        return 0.5 * norm_cdf((x + 1.0) / 0.5) + 0.5 * norm_cdf((x - 1.0) / 0.5);
    };
    const double z = mix_cdf_raw(3.5) - mix_cdf_raw(-3.5);
    f.pdf = [z](std::span<const double> t) {
        if (std::fabs(t[0]) > 3.5) return 0.0;
        return (0.5 * norm_pdf(t[0], -1.0, 0.5) + 0.5 * norm_pdf(t[0], 1.0, 0.5)) / z;
    };
    auto cdf = [mix_cdf_raw, z](double x) { return (mix_cdf_raw(x) - mix_cdf_raw(-3.5)) / z; };
    f.draw = [cdf](Philox4x64& rng, std::span<double> out) {
        out[0] = invert_cdf(cdf, -3.5, 3.5, rng.next_double());
    };
    return f;
}

TestDensity make_bump1d() {
    TestDensity f;
    f.name = "bump1d";
    f.dim = 1;
    f.alpha_declared = {2.0}; // second derivative jumps at the support edges
    f.box = {{-1.0, 1.0}};
    f.pdf = [](std::span<const double> t) {
        const double x = t[0];
        if (std::fabs(x) > 1.0) return 0.0;
        const double w = 1.0 - x * x;
        return 15.0 / 16.0 * w * w;
    };
    auto cdf = [](double x) {
        return 15.0 / 16.0 * (x - 2.0 * x * x * x / 3.0 + std::pow(x, 5) / 5.0) + 0.5;
    };
    f.draw = [cdf](Philox4x64& rng, std::span<double> out) {
        out[0] = invert_cdf(cdf, -1.0, 1.0, rng.next_double());
    };
    return f;
}

// Anisotropic 2-d product: truncated Gaussian along axis 0, the two-bump
// mixture along axis 1.
TestDensity make_product2d() {
    TestDensity f;
    f.name = "product2d";
    f.dim = 2;
    f.alpha_declared = {std::numeric_limits<double>::infinity(),
                        std::numeric_limits<double>::infinity()};
    f.box = {{-5.0, 5.0}, {-3.5, 3.5}};
    const TestDensity gx = make_gauss1d();
    const TestDensity my = make_mixture1d();
    f.pdf = [gx, my](std::span<const double> t) {
        const double a = t[0], b = t[1];
        return gx.pdf(std::span<const double>(&a, 1)) * my.pdf(std::span<const double>(&b, 1));
    };
    f.draw = [gx, my](Philox4x64& rng, std::span<double> out) {
        gx.draw(rng, out.subspan(0, 1));
        my.draw(rng, out.subspan(1, 1));
    };
    return f;
}

std::vector<TestDensity> build_catalog() {
    std::vector<TestDensity> all{make_gauss1d(), make_mixture1d(), make_product2d(),
                                 make_bump1d()};
    for (const auto& f : all) validate_density(f);
    return all;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
    const std::size_t r = sorted.size();
    const auto idx = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(r) - 1.0,
                         std::max(0.0, std::ceil(p * static_cast<double>(r)) - 1.0)));
    return sorted[idx];
}

double median_sorted(const std::vector<double>& sorted) {
    const std::size_t r = sorted.size();
    return r % 2 == 1 ? sorted[r / 2] : 0.5 * (sorted[r / 2 - 1] + sorted[r / 2]);
}

struct RiskAggregate {
    double risk = 0.0;
    double se = 0.0;
};

RiskAggregate aggregate_risk(const std::vector<double>& errors, double q) {
    const double r = static_cast<double>(errors.size());
    double mean_q = 0.0;
    for (double e : errors) mean_q += std::pow(e, q);
    mean_q /= r;
    RiskAggregate out;
    out.risk = std::pow(mean_q, 1.0 / q);
    if (errors.size() > 1 && mean_q > 0.0) {
        double var = 0.0;
        for (double e : errors) {
            const double d = std::pow(e, q) - mean_q;
            var += d * d;
        }
        var /= r - 1.0;
        const double se_mean = std::sqrt(var / r);
        out.se = se_mean * std::pow(mean_q, 1.0 / q - 1.0) / q;
    }
    return out;
}

GridFunction truth_on_grid(const TestDensity& density, GridPtr grid) {
    GridFunction f(grid);
    std::vector<double> t(grid->dim());
    for (std::size_t j = 0; j < grid->size(); ++j) {
        grid->node(j, t);
        f[j] = density.pdf(t);
    }
    return f;
}

void check_mass(double defect, double tol) {
    if (defect > tol)
        throw mass_leakage_error(
            "estimate leaks " + std::to_string(defect) +
            " of its mass outside the evaluation box (tolerance " + std::to_string(tol) +
            "); enlarge the evaluation box or reduce h_max");
}

} // namespace

const std::vector<TestDensity>& density_catalog() {
    static const std::vector<TestDensity> catalog = build_catalog();
    return catalog;
}

const TestDensity& density_by_name(const std::string& name) {
    for (const auto& f : density_catalog()) {
        if (f.name == name) return f;
    }
    throw std::invalid_argument("unknown density '" + name +
                                "' (catalog: gauss1d, mixture1d, product2d, bump1d)");
}

double gamma_rate(double s) {
    if (!(s > 1.0)) throw std::invalid_argument("gamma_rate: s must exceed 1");
    return s <= 2.0 ? 1.0 - 1.0 / s : 0.5;
}

double minimax_rate(std::size_t n, double s, double alpha_bar, double L) {
    if (!(alpha_bar > 0.0) || !(L > 0.0) || n == 0)
        throw std::invalid_argument("minimax_rate: need alpha > 0, L > 0, n >= 1");
    const double g = gamma_rate(s);
    const double denom = alpha_bar + g;
    return std::pow(L, -g / denom) * std::pow(static_cast<double>(n), -g * alpha_bar / denom);
}

std::pair<double, double> grid_diagnostics(const BandwidthGrid& bandwidths) {
    return {bandwidths.a_diag(), bandwidths.b_diag()};
}

double effective_alpha_bar(const TestDensity& density, int kernel_order) {
    double inv = 0.0;
    for (double a : density.alpha_declared) {
        inv += 1.0 / std::min(a, static_cast<double>(kernel_order));
    }
    return 1.0 / inv;
}

GridPtr study_grid(const TestDensity& density, const ProductKernel& kernel,
                   const std::vector<double>& h_min, const std::vector<double>& h_max,
                   const StudyOptions& opts) {
    double spacing = opts.grid_spacing;
    if (spacing <= 0.0) {
        spacing = *std::min_element(h_min.begin(), h_min.end()) / 4.0;
    }
    // The auxiliary estimators carry the convolved kernel, whose support is
    // twice the single-kernel one; inflate accordingly.
    std::vector<double> inflate(h_max.size());
    for (std::size_t k = 0; k < h_max.size(); ++k) inflate[k] = 2.0 * h_max[k];
    return build_eval_grid(density.box, kernel, inflate, spacing);
}

Sample draw_sample(const TestDensity& density, std::size_t n, std::uint64_t seed,
                   std::uint64_t rep) {
    Philox4x64 rng(seed, rep);
    std::vector<double> data(n * density.dim);
    for (std::size_t i = 0; i < n; ++i) {
        density.draw(rng, std::span<double>(data.data() + i * density.dim, density.dim));
    }
    return Sample(n, density.dim, std::move(data));
}

GridFunction stochastic_error(const Sample& sample, const ProductKernel& kernel,
                              const Bandwidth& h, const GridFunction& truth,
                              const Bandwidth* eta) {
    GridFunction smoothed = smoothed_truth(truth, kernel, h);
    if (eta) smoothed = smoothed_truth(smoothed, kernel, *eta);
    const DensityEstimate est =
        eta ? fit_aux(sample, kernel, h, *eta, truth.grid_ptr())
            : fit_kde(sample, kernel, h, truth.grid_ptr());
    return est.values - smoothed;
}

McRiskResult mc_risk(const TestDensity& density, const EstimatorSpec& spec,
                     const ProductKernel& kernel, const BandwidthGrid& bandwidths, double s,
                     double q, std::size_t n, std::size_t reps, std::uint64_t seed,
                     const StudyOptions& opts) {
    if (reps == 0) throw std::invalid_argument("mc_risk: need at least one replication");
    if (density.dim != kernel.dim()) throw std::invalid_argument("mc_risk: dimension mismatch");
    if (spec.kind == EstimatorSpec::Kind::fixed_h && spec.h.size() != density.dim)
        throw std::invalid_argument("mc_risk: fixed bandwidth has wrong dimension");

    const std::vector<double>& h_min = spec.kind == EstimatorSpec::Kind::fixed_h
                                           ? spec.h
                                           : bandwidths.h_min();
    const std::vector<double>& h_max = spec.kind == EstimatorSpec::Kind::fixed_h
                                           ? spec.h
                                           : bandwidths.h_max();
    GridPtr grid = study_grid(density, kernel, h_min, h_max, opts);
    const GridFunction truth = truth_on_grid(density, grid);

    std::optional<SelectionEngine> engine;
    if (spec.kind == EstimatorSpec::Kind::select) {
        engine.emplace(kernel, bandwidths, grid, MajorantConfig::make(s, n, q),
                       SelectionOptions{opts.binned, 1, opts.conv_samples});
    }

    McRiskResult out;
    out.errors.assign(reps, 0.0);
    std::vector<double> defects(reps, 0.0);
    parallel_for(reps, opts.threads, [&](std::size_t r) {
        if (spec.kind == EstimatorSpec::Kind::truth_oracle) {
            out.errors[r] = 0.0;
            return;
        }
        const Sample sample = draw_sample(density, n, seed, r);
        if (spec.kind == EstimatorSpec::Kind::fixed_h) {
            const DensityEstimate est =
                fit_kde(sample, kernel, Bandwidth(spec.h), grid, FitOptions{opts.binned});
            out.errors[r] = lp_norm(est.values - truth, s);
            defects[r] = est.mass_defect;
        } else {
            double err = 0.0;
            const SelectionResult res = engine->run(sample, &truth, nullptr, &err);
            out.errors[r] = err;
            defects[r] = res.estimate.mass_defect;
        }
    });
    out.mass_defect_max = *std::max_element(defects.begin(), defects.end());
    check_mass(out.mass_defect_max, opts.mass_tol);
    const RiskAggregate agg = aggregate_risk(out.errors, q);
    out.risk = agg.risk;
    out.std_error = agg.se;
    return out;
}

OracleRatioReport oracle_ratio_study(const TestDensity& density, const ProductKernel& kernel,
                                     const BandwidthGrid& bandwidths, double s, double q,
                                     std::size_t n, std::size_t reps, std::uint64_t seed,
                                     const StudyOptions& opts) {
    if (reps == 0) throw std::invalid_argument("oracle_ratio_study: need reps >= 1");
    GridPtr grid = study_grid(density, kernel, bandwidths.h_min(), bandwidths.h_max(), opts);
    const GridFunction truth = truth_on_grid(density, grid);
    const SelectionEngine engine(kernel, bandwidths, grid, MajorantConfig::make(s, n, q),
                                 SelectionOptions{opts.binned, 1, opts.conv_samples});

    const std::size_t k = bandwidths.size();
    OracleRatioReport rep;
    rep.selected_errors.assign(reps, 0.0);
    rep.fixed_errors.assign(reps, std::vector<double>(k, 0.0));
    rep.ratios.assign(reps, 0.0);
    std::vector<double> defects(reps, 0.0);

    parallel_for(reps, opts.threads, [&](std::size_t r) {
        const Sample sample = draw_sample(density, n, seed, r);
        double err = 0.0;
        std::vector<double> fixed;
        const SelectionResult res = engine.run(sample, &truth, &fixed, &err);
        const double best = *std::min_element(fixed.begin(), fixed.end());
        if (!(best > 0.0))
            throw std::runtime_error("oracle_ratio_study: degenerate zero oracle error");
        rep.selected_errors[r] = err;
        rep.ratios[r] = err / best;
        rep.fixed_errors[r] = std::move(fixed);
        defects[r] = res.estimate.mass_defect;
    });

    rep.mass_defect_max = *std::max_element(defects.begin(), defects.end());
    check_mass(rep.mass_defect_max, opts.mass_tol);

    rep.fixed_risk.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<double> errs(reps);
        for (std::size_t r = 0; r < reps; ++r) errs[r] = rep.fixed_errors[r][j];
        rep.fixed_risk[j] = aggregate_risk(errs, q).risk;
    }
    const RiskAggregate sel = aggregate_risk(rep.selected_errors, q);
    rep.selected_risk = sel.risk;
    rep.selected_se = sel.se;
    rep.best_fixed_risk = *std::min_element(rep.fixed_risk.begin(), rep.fixed_risk.end());
    std::vector<double> sorted = rep.ratios;
    std::sort(sorted.begin(), sorted.end());
    rep.median_ratio = median_sorted(sorted);
    rep.p90_ratio = quantile_sorted(sorted, 0.9);
    rep.reference_constant = 1.0 + 3.0 * kernel.norm(1.0);
    rep.a_diag = bandwidths.a_diag();
    rep.b_diag = bandwidths.b_diag();
    rep.oracle_sanity = rep.selected_risk >= rep.best_fixed_risk - 2.0 * rep.selected_se;
    return rep;
}

std::vector<VarianceIdentityReport> variance_identity_check(
    const TestDensity& density, const ProductKernel& kernel, const std::vector<double>& h_values,
    std::size_t n, std::size_t reps, std::uint64_t seed, const StudyOptions& opts) {
    if (density.dim != 1 || kernel.dim() != 1)
        throw std::invalid_argument("variance_identity_check: one-dimensional only");
    if (h_values.empty() || reps == 0)
        throw std::invalid_argument("variance_identity_check: need bandwidths and reps >= 1");

    StudyOptions gopts = opts;
    if (gopts.grid_spacing <= 0.0) {
        gopts.grid_spacing = *std::min_element(h_values.begin(), h_values.end()) / 8.0;
    }
    const double h_lo = *std::min_element(h_values.begin(), h_values.end());
    const double h_hi = *std::max_element(h_values.begin(), h_values.end());
    GridPtr grid = study_grid(density, kernel, {h_lo}, {h_hi}, gopts);
    const GridFunction truth = truth_on_grid(density, grid);

    std::vector<GridFunction> smoothed;
    smoothed.reserve(h_values.size());
    for (double h : h_values) smoothed.push_back(smoothed_truth(truth, kernel, Bandwidth({h})));

    std::vector<std::vector<double>> sq(h_values.size(), std::vector<double>(reps, 0.0));
    std::vector<std::vector<double>> nm(h_values.size(), std::vector<double>(reps, 0.0));
    parallel_for(reps, opts.threads, [&](std::size_t r) {
        const Sample sample = draw_sample(density, n, seed, r);
        for (std::size_t a = 0; a < h_values.size(); ++a) {
            const DensityEstimate est = fit_kde(sample, kernel, Bandwidth({h_values[a]}), grid);
            const double norm = lp_norm(est.values - smoothed[a], 2.0);
            nm[a][r] = norm;
            sq[a][r] = norm * norm;
        }
    });

    std::vector<VarianceIdentityReport> out(h_values.size());
    for (std::size_t a = 0; a < h_values.size(); ++a) {
        VarianceIdentityReport& rep = out[a];
        rep.h = h_values[a];
        for (std::size_t r = 0; r < reps; ++r) {
            rep.mc_mean_sq += sq[a][r];
            rep.mc_mean_norm += nm[a][r];
        }
        rep.mc_mean_sq /= static_cast<double>(reps);
        rep.mc_mean_norm /= static_cast<double>(reps);
        const double k2 = kernel.norm(2.0);
        const double smooth2 = lp_norm(smoothed[a], 2.0);
        rep.predicted = (k2 * k2 / h_values[a] - smooth2 * smooth2) / static_cast<double>(n);
        rep.rel_gap = std::fabs(rep.mc_mean_sq - rep.predicted) / rep.predicted;
        rep.lower_bound = 0.5 * k2 / std::sqrt(static_cast<double>(n) * h_values[a]);
    }
    return out;
}

RateStudyReport rate_study(const TestDensity& density, const ProductKernel& kernel, double s,
                           double q, const std::vector<std::size_t>& n_values, std::size_t reps,
                           std::uint64_t seed, double kappa1, double kappa2,
                           const StudyOptions& opts) {
    if (n_values.size() < 4)
        throw std::invalid_argument("rate study: need >= 4 sample sizes");
    for (std::size_t i = 1; i < n_values.size(); ++i) {
        if (n_values[i] <= n_values[i - 1])
            throw std::invalid_argument("rate study: sample sizes must be increasing");
    }
    if (!(kappa1 > 0.0) || !(kappa2 > 0.0))
        throw std::invalid_argument("rate study: kappa constants must be positive");

    const std::size_t d = kernel.dim();
    RateStudyReport out;
    out.n_values = n_values;
    out.kappa1 = kappa1;
    out.kappa2 = kappa2;
    out.alpha_eff = effective_alpha_bar(density, kernel.factor().order());
    const double g = gamma_rate(s);
    out.theory_exponent = -g * out.alpha_eff / (out.alpha_eff + g);

    for (std::size_t n : n_values) {
        double h_max = 1.0;
        if (s >= 2.0) {
            h_max = std::min(
                1.0, std::pow(kappa2 * std::log(static_cast<double>(n)),
                              -s / (2.0 * static_cast<double>(d))));
        }
        const double h_min = std::min(kappa1 / static_cast<double>(n), h_max);
        const BandwidthGrid bw =
            BandwidthGrid::geometric(std::vector<double>(d, h_min), std::vector<double>(d, h_max),
                                     std::sqrt(2.0), BandwidthGrid::kDefaultCap,
                                     opts.allow_large_grid);
        const McRiskResult risk =
            mc_risk(density, EstimatorSpec::selector(), kernel, bw, s, q, n, reps, seed, opts);
        out.risks.push_back(risk.risk);
        out.std_errors.push_back(risk.std_error);
        out.h_min_used.push_back(h_min);
        out.h_max_used.push_back(h_max);
        out.mass_defect_max = std::max(out.mass_defect_max, risk.mass_defect_max);
    }

    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < n_values.size(); ++i) {
        pts.emplace_back(static_cast<double>(n_values[i]), out.risks[i]);
    }
    out.slope = loglog_slope(pts);
    return out;
}

} // namespace lskde
