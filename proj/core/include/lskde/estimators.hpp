#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lskde/grid.hpp"
#include "lskde/kernels.hpp"

namespace lskde {

// Immutable n x d observation matrix.
class Sample {
public:
    Sample(std::size_t n, std::size_t d, std::vector<double> row_major);

    std::size_t size() const { return n_; }
    std::size_t dim() const { return d_; }
    double at(std::size_t row, std::size_t axis) const { return data_[row * d_ + axis]; }
    const std::vector<double>& data() const { return data_; }
    // Row indices in lexicographic row order; evaluation sums in this order
    // so results do not depend on how the rows were stored.
    const std::vector<std::size_t>& lex_order() const { return lex_order_; }

    double col_min(std::size_t axis) const { return col_min_[axis]; }
    double col_max(std::size_t axis) const { return col_max_[axis]; }

private:
    std::size_t n_, d_;
    std::vector<double> data_;
    std::vector<std::size_t> lex_order_;
    std::vector<double> col_min_, col_max_;
};

struct FitOptions {
    bool binned = false;
};

struct DensityEstimate {
    GridFunction values;
    std::vector<double> h;
    std::vector<double> eta; // non-empty only for the auxiliary estimator
    std::string kernel_name;
    int order = 1;
    bool binned = false;
    double mass_defect = 0.0; // |integral of the estimate - 1|

    bool is_aux() const { return !eta.empty(); }
};

// f_h(t) = n^-1 sum_i K_h(t - X_i) at every grid node.
DensityEstimate fit_kde(const Sample& sample, const ProductKernel& kernel, const Bandwidth& h,
                        GridPtr grid, const FitOptions& opts = {});

// f_{h,eta}(t) = n^-1 sum_i (K_h * K_eta)(t - X_i).
DensityEstimate fit_aux(const Sample& sample, const ProductKernel& kernel, const Bandwidth& h,
                        const Bandwidth& eta, GridPtr grid, const FitOptions& opts = {},
                        const ConvKernel* prebuilt = nullptr);

// Grid convolution K_h * f for a function given on a grid; subtracting the
// input yields the bias B_h(f, .).
GridFunction smoothed_truth(const GridFunction& f_true, const ProductKernel& kernel,
                            const Bandwidth& h);

// Generic windowed accumulation sum_i prod_k phi_k(t_k - X_{i,k}) * scale over
// all grid nodes t. Also serves the empirical majorant, which needs squared
// kernels.
GridFunction sum_separable_over_sample(const Sample& sample, GridPtr grid,
                                       const std::vector<std::function<double(double)>>& axis_fn,
                                       const std::vector<double>& radius, double scale);

// Multilinear assignment of unit masses to neighboring nodes; entries sum to
// one when every observation lies inside the grid box.
std::vector<double> linear_binning(const Sample& sample, const EvaluationGrid& grid);

// In-place separable convolution of grid values with centered taps along one
// axis (direct or FFT by size).
void convolve_axis(std::vector<double>& values, const EvaluationGrid& grid, std::size_t axis,
                   const std::vector<double>& taps);

// Kernel factor sampled at offsets j * spacing for bandwidth h:
// taps[j + J] = u_l(j spacing / h) / h with J = ceil(radius(u_l) h / spacing).
std::vector<double> kernel_axis_taps(const HigherOrderKernel1D& factor, double h, double spacing);

// Evaluation box: per-axis core interval inflated by the kernel support at
// bandwidth `h_inflate`, with node counts chosen from `spacing`.
GridPtr build_eval_grid(const std::vector<std::array<double, 2>>& core_box,
                        const ProductKernel& kernel, const std::vector<double>& h_inflate,
                        double spacing, double margin = 1.05);

std::vector<std::array<double, 2>> data_box(const Sample& sample);

} // namespace lskde
