#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lskde/estimators.hpp"
#include "lskde/grid.hpp"
#include "lskde/kernels.hpp"
#include "lskde/rng.hpp"
#include "lskde/selection.hpp"

namespace lskde {

// Raised when a study's estimate leaks more mass outside the evaluation box
// than the configured tolerance allows; the CLI maps it to its
// numerical-quality exit code.
class mass_leakage_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Seeded test density: evaluation rule, inverse-CDF (or composed) sampler,
// support box, and per-axis declared smoothness. Smoothness is documentation
// grade: it feeds the rate study's reference exponent, nothing else.
struct TestDensity {
    std::string name;
    std::size_t dim = 1;
    std::vector<double> alpha_declared; // per axis; may be infinite
    std::vector<std::array<double, 2>> box;
    std::function<double(std::span<const double>)> pdf;
    std::function<void(Philox4x64&, std::span<double>)> draw;
};

const std::vector<TestDensity>& density_catalog();
const TestDensity& density_by_name(const std::string& name);

// gamma_s = 1 - 1/s on (1,2], 1/2 beyond 2.
double gamma_rate(double s);
// phi_{n,s}(alpha_bar) = L^(-gamma/(alpha+gamma)) n^(-gamma alpha/(alpha+gamma)).
double minimax_rate(std::size_t n, double s, double alpha_bar, double L);

// (A_H, B_H) of a bandwidth grid.
std::pair<double, double> grid_diagnostics(const BandwidthGrid& bandwidths);

// Effective aggregate smoothness: per-axis alpha capped at the kernel order,
// combined through 1/alpha_bar = sum_i 1/alpha_i.
double effective_alpha_bar(const TestDensity& density, int kernel_order);

struct StudyOptions {
    int threads = 1;
    bool binned = false;
    double grid_spacing = 0.0; // 0: spacing = min_i h_i_min / 4
    double mass_tol = 1e-2;    // per-estimate |integral - 1| abort threshold
    int conv_samples = 32;
    bool allow_large_grid = false;
};

struct EstimatorSpec {
    enum class Kind { fixed_h, select, truth_oracle };
    Kind kind = Kind::select;
    std::vector<double> h; // fixed_h only

    static EstimatorSpec fixed(std::vector<double> h) {
        return {Kind::fixed_h, std::move(h)};
    }
    static EstimatorSpec selector() { return {Kind::select, {}}; }
    static EstimatorSpec oracle_stub() { return {Kind::truth_oracle, {}}; }
};

struct McRiskResult {
    std::vector<double> errors; // per replication, in replication order
    double risk = 0.0;          // (mean of q-th powers)^(1/q)
    double std_error = 0.0;
    double mass_defect_max = 0.0;
};

// L_s-risk of one estimator spec over seeded replications. The bandwidth grid
// is used only by the selector spec.
McRiskResult mc_risk(const TestDensity& density, const EstimatorSpec& spec,
                     const ProductKernel& kernel, const BandwidthGrid& bandwidths, double s,
                     double q, std::size_t n, std::size_t reps, std::uint64_t seed,
                     const StudyOptions& opts = {});

struct OracleRatioReport {
    std::vector<double> selected_errors;
    std::vector<std::vector<double>> fixed_errors; // [rep][h]
    std::vector<double> ratios;                    // selected / best fixed, per rep
    std::vector<double> fixed_risk;                // per h
    double selected_risk = 0.0;
    double selected_se = 0.0;
    double best_fixed_risk = 0.0;
    double median_ratio = 0.0;
    double p90_ratio = 0.0;
    double reference_constant = 0.0; // 1 + 3 ||K||_1
    double a_diag = 0.0, b_diag = 0.0;
    double mass_defect_max = 0.0;
    bool oracle_sanity = true; // selected risk >= best fixed risk - 2 SE
};

OracleRatioReport oracle_ratio_study(const TestDensity& density, const ProductKernel& kernel,
                                     const BandwidthGrid& bandwidths, double s, double q,
                                     std::size_t n, std::size_t reps, std::uint64_t seed,
                                     const StudyOptions& opts = {});

struct VarianceIdentityReport {
    double h = 0.0;
    double mc_mean_sq = 0.0;   // Monte Carlo mean of ||xi_h||_2^2
    double predicted = 0.0;    // n^-1 [V_h^-1 ||K||_2^2 - ||K_h * f||_2^2]
    double rel_gap = 0.0;
    double mc_mean_norm = 0.0; // Monte Carlo mean of ||xi_h||_2
    double lower_bound = 0.0;  // 0.5 ||K||_2 (n V_h)^(-1/2)
};

std::vector<VarianceIdentityReport> variance_identity_check(
    const TestDensity& density, const ProductKernel& kernel, const std::vector<double>& h_values,
    std::size_t n, std::size_t reps, std::uint64_t seed, const StudyOptions& opts = {});

struct RateStudyReport {
    std::vector<std::size_t> n_values;
    std::vector<double> risks;
    std::vector<double> std_errors;
    std::vector<double> h_min_used, h_max_used; // first axis, per n
    double slope = 0.0;
    double theory_exponent = 0.0;
    double alpha_eff = 0.0;
    double kappa1 = 1.0, kappa2 = 1.0;
    double mass_defect_max = 0.0;
};

// Selected-estimator risk across sample sizes with the theorem's bandwidth-set
// policy: h_min = kappa1 / n; h_max = 1 for s < 2, else
// min(1, [kappa2 ln n]^(-s/(2d))).
RateStudyReport rate_study(const TestDensity& density, const ProductKernel& kernel, double s,
                           double q, const std::vector<std::size_t>& n_values, std::size_t reps,
                           std::uint64_t seed, double kappa1 = 1.0, double kappa2 = 1.0,
                           const StudyOptions& opts = {});

// xi_h = f_h - K_h * f (or the auxiliary variant) on the grid of `truth`.
GridFunction stochastic_error(const Sample& sample, const ProductKernel& kernel,
                              const Bandwidth& h, const GridFunction& truth,
                              const Bandwidth* eta = nullptr);

// Study evaluation grid: density box inflated by the pair-kernel support at
// h_max, spacing from the options (or min h_min / 4).
GridPtr study_grid(const TestDensity& density, const ProductKernel& kernel,
                   const std::vector<double>& h_min, const std::vector<double>& h_max,
                   const StudyOptions& opts);

// Draws one sample of size n from the density (substream = rep index).
Sample draw_sample(const TestDensity& density, std::size_t n, std::uint64_t seed,
                   std::uint64_t rep);

} // namespace lskde
