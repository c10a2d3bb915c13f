#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "mvk/grid.hpp"
#include "mvk/mfc.hpp"
#include "mvk/model.hpp"

namespace mvk {

/// Discrete Moreau envelope  min_h phi(h) + n |g - h|^2  over the sample
/// points `g` (increasing), evaluated at the same points. O(M^2).
std::vector<double> inf_convolution(std::span<const double> phi, std::span<const double> g, double n);

/// Convolution with the normalised standard bump of radius eps on a uniform
/// grid of step h. Values beyond the ends are extended linearly, so
/// constants and affine functions are reproduced. Throws EpsBelowGrid when
/// eps < 2h.
std::vector<double> mollify(std::span<const double> f, double h, double eps);

/// Convex, piecewise linear f on a uniform grid of the box plus q |g|^2,
/// all times a weight w. Evaluation and the exact argmin of
/// s h + w (f(h) + q h^2).
class ConvexProfile {
public:
    ConvexProfile() = default;
    ConvexProfile(double lo, double hi, std::vector<double> values, double q);
    [[nodiscard]] double value(double h) const;
    [[nodiscard]] double slope(double h) const;
    /// argmin over [lo, hi] of s h + w (f(h) + q h^2), w > 0; leftmost on ties.
    [[nodiscard]] double argmin(double s, double w) const;
    [[nodiscard]] double step() const { return dg_; }
    [[nodiscard]] const std::vector<double>& values() const { return v_; }

private:
    double lo_ = 0.0, hi_ = 0.0, dg_ = 1.0, q_ = 0.0;
    std::vector<double> v_;
};

struct ApproxOptions {
    int g_points = 2001;  // samples of the box for the envelope
    int k = 0;            // hat level for the measure map; 0 picks one
};

struct ApproxFamily {
    int n = 1;
    ModelSpec spec;
    int k = 0;                 // hat level 2^{-k}
    double eps = 0.0;          // mollification radius in g
    double modulus = 0.0;      // sampled |f1~^eps - f1~| bound
    /// Properties (i)-(iv) of the approximation: bounded coefficients,
    /// convergence on compacts, uniform growth, strict convexity.
    std::array<bool, 4> certified{};
    std::vector<std::string> notes;
};

/// Coefficient approximation of index n: b1 with x clamped to [-n, n],
/// lambda capped at n, f1 replaced by e^{-x^2/n}(mollified envelope +
/// |g|^2/n), f0 and psi composed with truncation and the hat map.
/// Supports d_G = 1.
ApproxFamily build_approx_family(const ModelSpec& spec, int n, const ApproxOptions& opt = {});

struct ValueSweep {
    double V = 0.0;
    std::vector<int> n;
    std::vector<double> Vn;
    std::vector<double> gap;  // |V^n - V|
    std::vector<bool> converged;
};

/// Optimal values of the approximations against the value of the original
/// model, all from solve_mfc on the same grid.
ValueSweep value_sweep(const ModelSpec& spec, const Grid& grid, const std::vector<int>& ns,
                       const MfcOptions& opt = {}, const ApproxOptions& aopt = {});

}  // namespace mvk
