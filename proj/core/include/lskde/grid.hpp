#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace lskde {

// Rectangular evaluation grid with midpoint nodes and uniform per-dimension
// spacing. Node (i_1,...,i_d) sits at lo_k + (i_k + 1/2) * spacing_k and
// carries the quadrature weight prod_k spacing_k, so summing values times
// cell_volume() integrates over the box.
class EvaluationGrid {
public:
    EvaluationGrid(std::vector<std::array<double, 2>> bounds,
                   std::vector<std::size_t> nodes_per_dim);

    std::size_t dim() const { return bounds_.size(); }
    std::size_t size() const { return total_; }
    std::size_t nodes(std::size_t axis) const { return nodes_[axis]; }
    double lo(std::size_t axis) const { return bounds_[axis][0]; }
    double hi(std::size_t axis) const { return bounds_[axis][1]; }
    double spacing(std::size_t axis) const { return spacing_[axis]; }
    double cell_volume() const { return cell_volume_; }
    double box_volume() const;

    double coord(std::size_t axis, std::size_t index) const {
        return bounds_[axis][0] + (static_cast<double>(index) + 0.5) * spacing_[axis];
    }

    // Multi-index <-> flat index, last axis fastest.
    std::size_t flatten(std::span<const std::size_t> idx) const;
    void unflatten(std::size_t flat, std::span<std::size_t> idx) const;
    void node(std::size_t flat, std::span<double> out) const;

    bool contains_box(std::span<const double> lo, std::span<const double> hi) const;

private:
    std::vector<std::array<double, 2>> bounds_;
    std::vector<std::size_t> nodes_;
    std::vector<double> spacing_;
    double cell_volume_;
    std::size_t total_;
};

using GridPtr = std::shared_ptr<const EvaluationGrid>;

GridPtr make_grid(std::vector<std::array<double, 2>> bounds,
                  std::vector<std::size_t> nodes_per_dim);

// Values attached to every node of an EvaluationGrid.
class GridFunction {
public:
    GridFunction() = default; // empty; assign a real one before use
    GridFunction(GridPtr grid, std::vector<double> values);
    explicit GridFunction(GridPtr grid);

    const EvaluationGrid& grid() const { return *grid_; }
    const GridPtr& grid_ptr() const { return grid_; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }
    std::size_t size() const { return values_.size(); }

    // Quadrature of the represented function over the grid box.
    double integral() const;
    bool all_finite() const;

    GridFunction& operator+=(const GridFunction& other);
    GridFunction& operator-=(const GridFunction& other);
    GridFunction& operator*=(double c);
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }

private:
    GridPtr grid_;
    std::vector<double> values_;
};

// (sum_j w_j |g_j|^p)^(1/p) for finite p >= 1; max_j |g_j| for p = infinity.
double lp_norm(const GridFunction& g, double p);

inline double positive_part(double x) { return x > 0.0 ? x : 0.0; }

// Least-squares slope of log y against log x. Needs >= 2 points with
// strictly positive coordinates.
double loglog_slope(std::span<const std::pair<double, double>> points);

} // namespace lskde
