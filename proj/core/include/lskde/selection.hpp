#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <vector>

#include "lskde/estimators.hpp"
#include "lskde/grid.hpp"
#include "lskde/kernels.hpp"

namespace lskde {

// Thrown when a bandwidth grid would exceed its size cap without an explicit
// override; the CLI maps this to its resource-cap exit code.
class grid_cap_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Finite geometric search set inside the bandwidth box
// [h_min_1, h_max_1] x ... x [h_min_d, h_max_d], 0 < h_min <= h_max <= 1.
class BandwidthGrid {
public:
    static constexpr std::size_t kDefaultCap = 256;

    static BandwidthGrid geometric(std::vector<double> h_min, std::vector<double> h_max,
                                   double ratio, std::size_t cap = kDefaultCap,
                                   bool allow_large = false);
    // Convenience: ratio chosen so each axis has exactly `count` nodes.
    static BandwidthGrid geometric_count(std::vector<double> h_min, std::vector<double> h_max,
                                         std::size_t count, std::size_t cap = kDefaultCap,
                                         bool allow_large = false);

    std::size_t dim() const { return axis_nodes_.size(); }
    std::size_t size() const { return members_.size(); }
    const std::vector<Bandwidth>& members() const { return members_; }
    const Bandwidth& operator[](std::size_t i) const { return members_[i]; }
    const std::vector<std::vector<double>>& axis_nodes() const { return axis_nodes_; }
    const std::vector<double>& h_min() const { return h_min_; }
    const std::vector<double>& h_max() const { return h_max_; }

    double v_min() const;
    double v_max() const;
    // A_H = prod_i [1 v ln(h_i^max / h_i^min)].
    double a_diag() const;
    // B_H = [1 v log2(V_max / V_min)].
    double b_diag() const;

private:
    BandwidthGrid() = default;
    std::vector<double> h_min_, h_max_;
    std::vector<std::vector<double>> axis_nodes_;
    std::vector<Bandwidth> members_;
};

// Loss index s, risk exponent q, sample size n, and the s-branch bookkeeping
// for the majorant formulas.
struct MajorantConfig {
    double s = 2.0;
    double q = 1.0;
    std::size_t n = 0;

    enum class Branch { sub_two, two, super_two };

    static MajorantConfig make(double s, std::size_t n, double q = 1.0);
    Branch branch() const {
        return s < 2.0 ? Branch::sub_two : (s == 2.0 ? Branch::two : Branch::super_two);
    }
    // Rosenthal constant 15 s / ln s, defined for s > 2 only.
    double rosenthal() const;
};

// rho_s(U) from the deterministic branches: 4 n^(1/s-1) ||U||_s for
// s in [1,2), n^(-1/2) ||U||_2 for s = 2. Rejects s > 2.
double rho_det(double norm_s, double norm_2, const MajorantConfig& cfg);

// Empirical counterpart for s > 2:
// c_s { n^(-1/2) ( int [n^-1 sum_i U^2(t-X_i)]^(s/2) dt )^(1/s) + 2 n^(1/s-1) ||U||_s }.
double rho_hat(const WeightFunction& u, const Sample& sample, const EvaluationGrid& grid,
               const MajorantConfig& cfg);

// max(rho_hat, n^(-1/2) ||U||_2), s > 2.
double r_hat(const WeightFunction& u, const Sample& sample, const EvaluationGrid& grid,
             const MajorantConfig& cfg);

// g_s(U): 32 rho_s (s in [1,2)), (25/3) rho_2 (s = 2), 32 r_hat (s > 2, needs
// the sample and grid).
double majorant_g(const WeightFunction& u, const MajorantConfig& cfg,
                  const Sample* sample = nullptr, const EvaluationGrid* grid = nullptr);

// Tables of g_s over H and H x H, the pairwise majorant and its sup.
// m_s(h, eta) = g_s(K_eta) + g_s(K_h * K_eta); the displayed form in the
// source material carries a subscript slip that its own proof corrects.
// m*_s(h) = sup_eta m_s(eta, h) = g_s(K_h) + sup_eta g_s(K_eta * K_h).
class MajorantTable {
public:
    MajorantTable(std::vector<double> g_single, std::vector<double> g_conv_upper);

    std::size_t size() const { return g_single_.size(); }
    double g_single(std::size_t i) const { return g_single_[i]; }
    double g_conv(std::size_t i, std::size_t j) const {
        return g_conv_upper_[upper_index(i, j)];
    }
    double m(std::size_t i, std::size_t j) const { return g_single_[j] + g_conv(i, j); }
    double m_star(std::size_t i) const { return m_star_[i]; }

private:
    std::size_t upper_index(std::size_t i, std::size_t j) const;
    std::vector<double> g_single_;
    std::vector<double> g_conv_upper_; // symmetric, packed i <= j
    std::vector<double> m_star_;
};

struct SelectionOptions {
    bool binned = false;   // linear binning + spectral pair norms (d = 1, s <= 2)
    int threads = 1;
    int conv_samples = 32; // sampling density of materialized convolutions
};

MajorantTable build_majorants(const Sample& sample, const ProductKernel& kernel,
                              const BandwidthGrid& bandwidths, const EvaluationGrid& grid,
                              const MajorantConfig& cfg, const SelectionOptions& opts = {});

struct SelectionResult {
    std::size_t selected = 0;
    std::vector<double> h_selected;
    std::vector<double> criterion;    // R_hat per member of H
    std::vector<double> sup_positive; // the positive-part supremum term per member
    std::vector<double> m_star;
    std::vector<double> g_single;
    DensityEstimate estimate;
    double a_diag = 0.0;
    double b_diag = 0.0;
    std::size_t grid_nodes = 0;
    bool binned = false;
};

// Precomputes everything that does not depend on the observations (scaled
// kernels, pairwise convolutions, and for s <= 2 the full majorant table), so
// Monte Carlo replications can share one instance.
class SelectionEngine {
public:
    SelectionEngine(ProductKernel kernel, BandwidthGrid bandwidths, GridPtr grid,
                    MajorantConfig cfg, SelectionOptions opts = {});
    ~SelectionEngine();
    SelectionEngine(const SelectionEngine&) = delete;
    SelectionEngine& operator=(const SelectionEngine&) = delete;

    // Runs the selection rule. When `truth` is given, fixed_errors (if
    // non-null) receives ||f_h - truth||_s for every h in H, and
    // selected_error (if non-null) the same for the selected estimator.
    SelectionResult run(const Sample& sample, const GridFunction* truth = nullptr,
                        std::vector<double>* fixed_errors = nullptr,
                        double* selected_error = nullptr) const;

    const BandwidthGrid& bandwidths() const;
    const GridPtr& grid() const;
    const MajorantConfig& config() const;
    const MajorantTable* prebuilt_table() const; // null when s > 2

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Criterion value R_hat for one h, assembled from a prebuilt table and the
// cached single-bandwidth fits (in H order, on the same grid).
double criterion(std::size_t h_index, const Sample& sample, const ProductKernel& kernel,
                 const BandwidthGrid& bandwidths, GridPtr grid, const MajorantConfig& cfg,
                 const MajorantTable& table, const std::vector<DensityEstimate>& fitted,
                 const SelectionOptions& opts = {});

// One-shot convenience around SelectionEngine.
SelectionResult select(const Sample& sample, const ProductKernel& kernel,
                       const BandwidthGrid& bandwidths, GridPtr grid, const MajorantConfig& cfg,
                       const SelectionOptions& opts = {});

} // namespace lskde
