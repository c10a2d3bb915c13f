#pragma once

#include <span>
#include <vector>

#include "mvk/grid.hpp"

namespace mvk {

/// Density of a subprobability measure on the x grid. Cell masses are
/// values[i] * dx.
struct SubProb1D {
    XGrid grid;
    std::vector<double> values;

    SubProb1D() = default;
    explicit SubProb1D(const XGrid& g) : grid(g), values(static_cast<std::size_t>(g.n), 0.0) {}
    SubProb1D(const XGrid& g, std::vector<double> v) : grid(g), values(std::move(v)) {}

    [[nodiscard]] double mass() const;
    /// Unnormalized moment  sum_i x_i^p * nu_i * dx.
    [[nodiscard]] double moment(int p) const;
    /// Largest negative excursion (0 when nonnegative).
    [[nodiscard]] double min_value() const;
};

/// Joint density of (X, Lambda) on the (x, y) grid, stored y-slice major:
/// values[j * nx + i].
struct Density2D {
    XGrid xg;
    YGrid yg;
    std::vector<double> values;

    Density2D() = default;
    Density2D(const XGrid& x, const YGrid& y)
        : xg(x), yg(y), values(static_cast<std::size_t>(x.n) * static_cast<std::size_t>(y.n), 0.0) {}

    [[nodiscard]] double& at(int i, int j) { return values[static_cast<std::size_t>(j) * xg.n + i]; }
    [[nodiscard]] double at(int i, int j) const { return values[static_cast<std::size_t>(j) * xg.n + i]; }
    [[nodiscard]] std::span<double> slice(int j) {
        return {values.data() + static_cast<std::size_t>(j) * xg.n, static_cast<std::size_t>(xg.n)};
    }
    [[nodiscard]] std::span<const double> slice(int j) const {
        return {values.data() + static_cast<std::size_t>(j) * xg.n, static_cast<std::size_t>(xg.n)};
    }
    [[nodiscard]] double mass() const;
    /// Mass carried by nodes with y < 0.
    [[nodiscard]] double mass_below_zero() const;
    [[nodiscard]] double mean_y() const;
};

/// Feedback control g(t_n, x_i[, y_j]) with values in R^{d_G}. `ny == 1`
/// for controls that do not see the intensity. One level per time node.
struct FeedbackControl {
    int levels = 0;
    int nx = 0;
    int ny = 1;
    int dim = 1;
    std::vector<double> data;

    FeedbackControl() = default;
    FeedbackControl(int levels_, int nx_, int ny_, int dim_, double fill = 0.0)
        : levels(levels_), nx(nx_), ny(ny_), dim(dim_),
          data(static_cast<std::size_t>(levels_) * nx_ * ny_ * dim_, fill) {}

    [[nodiscard]] std::size_t index(int n, int i, int j = 0, int k = 0) const {
        return ((static_cast<std::size_t>(n) * ny + j) * nx + i) * dim + k;
    }
    [[nodiscard]] double& at(int n, int i, int j = 0, int k = 0) { return data[index(n, i, j, k)]; }
    [[nodiscard]] double at(int n, int i, int j = 0, int k = 0) const { return data[index(n, i, j, k)]; }
    /// Control vector at a node; `j` is ignored for y-independent controls.
    [[nodiscard]] std::span<const double> node(int n, int i, int j = 0) const {
        return {data.data() + index(n, i, ny == 1 ? 0 : j, 0), static_cast<std::size_t>(dim)};
    }
    [[nodiscard]] std::span<double> node(int n, int i, int j = 0) {
        return {data.data() + index(n, i, ny == 1 ? 0 : j, 0), static_cast<std::size_t>(dim)};
    }
    [[nodiscard]] bool y_independent() const { return ny == 1; }

    /// Copies a y-independent control onto ny slices.
    [[nodiscard]] FeedbackControl lifted(int ny_target) const;
};

/// Read-only handle on a subprobability measure handed to coefficients.
/// Exposes the functionals the model coefficients are allowed to use.
class MeasureView {
public:
    MeasureView() = default;
    explicit MeasureView(const SubProb1D& nu);

    [[nodiscard]] double mass() const { return mass_; }
    [[nodiscard]] double first_moment() const { return m1_; }
    [[nodiscard]] double second_moment() const { return m2_; }
    /// Linear interpolation of the density; zero outside the grid.
    [[nodiscard]] double density(double x) const;
    [[nodiscard]] std::span<const double> values() const { return values_; }
    [[nodiscard]] const XGrid& grid() const { return grid_; }
    /// Quadrature  sum_i nu_i * w_i * dx  against node weights w.
    [[nodiscard]] double pairing(std::span<const double> weights) const;

private:
    XGrid grid_{};
    std::span<const double> values_{};
    double mass_ = 0.0;
    double m1_ = 0.0;
    double m2_ = 0.0;
};

}  // namespace mvk
