#include "lskde/grid.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lskde {

EvaluationGrid::EvaluationGrid(std::vector<std::array<double, 2>> bounds,
                               std::vector<std::size_t> nodes_per_dim)
    : bounds_(std::move(bounds)), nodes_(std::move(nodes_per_dim)) {
    if (bounds_.empty()) throw std::invalid_argument("grid: dimension must be >= 1");
    if (bounds_.size() != nodes_.size())
        throw std::invalid_argument("grid: bounds and node counts disagree on dimension");
    spacing_.resize(bounds_.size());
    cell_volume_ = 1.0;
    total_ = 1;
    for (std::size_t k = 0; k < bounds_.size(); ++k) {
        const auto [lo, hi] = bounds_[k];
        if (!(lo < hi))
            throw std::invalid_argument("grid: bounds for axis " + std::to_string(k) +
                                        " must satisfy lo < hi");
        if (nodes_[k] < 2)
            throw std::invalid_argument("grid: axis " + std::to_string(k) +
                                        " needs at least 2 nodes");
        spacing_[k] = (hi - lo) / static_cast<double>(nodes_[k]);
        cell_volume_ *= spacing_[k];
        if (total_ > std::numeric_limits<std::size_t>::max() / nodes_[k])
            throw std::invalid_argument("grid: node count overflows");
        total_ *= nodes_[k];
    }
}

double EvaluationGrid::box_volume() const {
    double v = 1.0;
    for (const auto& b : bounds_) v *= b[1] - b[0];
    return v;
}

std::size_t EvaluationGrid::flatten(std::span<const std::size_t> idx) const {
    std::size_t flat = 0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) flat = flat * nodes_[k] + idx[k];
    return flat;
}

void EvaluationGrid::unflatten(std::size_t flat, std::span<std::size_t> idx) const {
    for (std::size_t k = nodes_.size(); k-- > 0;) {
        idx[k] = flat % nodes_[k];
        flat /= nodes_[k];
    }
}

void EvaluationGrid::node(std::size_t flat, std::span<double> out) const {
    for (std::size_t k = nodes_.size(); k-- > 0;) {
        out[k] = coord(k, flat % nodes_[k]);
        flat /= nodes_[k];
    }
}

bool EvaluationGrid::contains_box(std::span<const double> lo, std::span<const double> hi) const {
    for (std::size_t k = 0; k < bounds_.size(); ++k) {
        if (lo[k] < bounds_[k][0] || hi[k] > bounds_[k][1]) return false;
    }
    return true;
}

GridPtr make_grid(std::vector<std::array<double, 2>> bounds,
                  std::vector<std::size_t> nodes_per_dim) {
    return std::make_shared<const EvaluationGrid>(std::move(bounds), std::move(nodes_per_dim));
}

GridFunction::GridFunction(GridPtr grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    if (!grid_) throw std::invalid_argument("grid function: null grid");
    if (values_.size() != grid_->size())
        throw std::invalid_argument("grid function: value count does not match node count");
}

GridFunction::GridFunction(GridPtr grid)
    : grid_(std::move(grid)) {
    if (!grid_) throw std::invalid_argument("grid function: null grid");
    values_.assign(grid_->size(), 0.0);
}

double GridFunction::integral() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s * grid_->cell_volume();
}

bool GridFunction::all_finite() const {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    return true;
}

GridFunction& GridFunction::operator+=(const GridFunction& other) {
    if (other.size() != size()) throw std::invalid_argument("grid function: size mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& other) {
    if (other.size() != size()) throw std::invalid_argument("grid function: size mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

GridFunction& GridFunction::operator*=(double c) {
    for (double& v : values_) v *= c;
    return *this;
}

double lp_norm(const GridFunction& g, double p) {
    if (std::isinf(p)) {
        double m = 0.0;
        for (double v : g.values()) m = std::max(m, std::fabs(v));
        return m;
    }
    if (!(p >= 1.0)) throw std::invalid_argument("lp_norm: p must be >= 1 or infinity");
    double acc = 0.0;
    if (p == 2.0) {
        for (double v : g.values()) acc += v * v;
    } else if (p == 1.0) {
        for (double v : g.values()) acc += std::fabs(v);
    } else {
        for (double v : g.values()) acc += std::pow(std::fabs(v), p);
    }
    return std::pow(acc * g.grid().cell_volume(), 1.0 / p);
}

double loglog_slope(std::span<const std::pair<double, double>> points) {
    if (points.size() < 2) throw std::invalid_argument("loglog_slope: need at least 2 points");
    double sx = 0.0, sy = 0.0;
    for (const auto& [x, y] : points) {
        if (!(x > 0.0) || !(y > 0.0))
            throw std::invalid_argument("loglog_slope: coordinates must be positive");
        sx += std::log(x);
        sy += std::log(y);
    }
    const double n = static_cast<double>(points.size());
    const double mx = sx / n, my = sy / n;
    double cov = 0.0, var = 0.0;
    for (const auto& [x, y] : points) {
        const double dx = std::log(x) - mx;
        cov += dx * (std::log(y) - my);
        var += dx * dx;
    }
    if (var == 0.0) throw std::invalid_argument("loglog_slope: abscissae are all equal");
    return cov / var;
}

} // namespace lskde
