#include "mvk/fields.hpp"

#include <algorithm>
#include <cmath>

#include "mvk/error.hpp"

namespace mvk {

double SubProb1D::mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * grid.dx;
}

double SubProb1D::moment(int p) const {
    double s = 0.0;
    for (int i = 0; i < grid.n; ++i) s += std::pow(grid.x(i), p) * values[i];
    return s * grid.dx;
}

double SubProb1D::min_value() const {
    double m = 0.0;
    for (double v : values) m = std::min(m, v);
    return m;
}

double Density2D::mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * xg.dx * yg.dy;
}

double Density2D::mass_below_zero() const {
    double s = 0.0;
    for (int j = 0; j < yg.j_zero(); ++j)
        for (double v : slice(j)) s += v;
    return s * xg.dx * yg.dy;
}

double Density2D::mean_y() const {
    double s = 0.0, m = 0.0;
    for (int j = 0; j < yg.n; ++j) {
        double row = 0.0;
        for (double v : slice(j)) row += v;
        s += row * yg.y(j);
        m += row;
    }
    return m > 0.0 ? s / m : 0.0;
}

FeedbackControl FeedbackControl::lifted(int ny_target) const {
    if (ny != 1) throw Error(ErrorCode::InvalidArgument, "control already depends on y");
    FeedbackControl out(levels, nx, ny_target, dim);
    for (int n = 0; n < levels; ++n)
        for (int j = 0; j < ny_target; ++j)
            for (int i = 0; i < nx; ++i)
                for (int k = 0; k < dim; ++k) out.at(n, i, j, k) = at(n, i, 0, k);
    return out;
}

MeasureView::MeasureView(const SubProb1D& nu) : grid_(nu.grid), values_(nu.values) {
    double m = 0.0, m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < grid_.n; ++i) {
        const double x = grid_.x(i);
        const double v = values_[i];
        m += v;
        m1 += x * v;
        m2 += x * x * v;
    }
    mass_ = m * grid_.dx;
    m1_ = m1 * grid_.dx;
    m2_ = m2 * grid_.dx;
}

double MeasureView::density(double x) const {
    if (grid_.n == 0) return 0.0;
    const double s = (x - grid_.x_min) / grid_.dx;
    if (s < 0.0 || s > grid_.n - 1) return 0.0;
    const int i = std::min(static_cast<int>(s), grid_.n - 2);
    const double w = s - i;
    return (1.0 - w) * values_[i] + w * values_[i + 1];
}

double MeasureView::pairing(std::span<const double> weights) const {
    if (static_cast<int>(weights.size()) != grid_.n)
        throw Error(ErrorCode::GridMismatch, "pairing weights do not match the grid");
    double s = 0.0;
    for (int i = 0; i < grid_.n; ++i) s += values_[i] * weights[i];
    return s * grid_.dx;
}

}  // namespace mvk
