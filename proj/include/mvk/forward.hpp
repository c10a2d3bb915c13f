#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mvk/fields.hpp"
#include "mvk/grid.hpp"
#include "mvk/model.hpp"

namespace mvk {

/// Brownian increments of the common noise on the time grid.
struct CommonNoisePath {
    std::uint64_t seed = 0;
    double dt = 0.0;
    std::vector<double> dW;

    /// Cumulative path W_{t_k}, W_0 = 0.
    [[nodiscard]] std::vector<double> path() const;
    static CommonNoisePath generate(int nt, double dt, std::uint64_t seed);
};

enum class Exec { Serial, Parallel };

struct ForwardOptions {
    Exec exec = Exec::Parallel;
};

struct ForwardTrajectory2D {
    Grid grid;
    std::vector<Density2D> mu;  // nt + 1 slices
    std::vector<SubProb1D> nu;  // S(mu) at each level
    std::vector<double> mass;
    double min_value = 0.0;     // most negative density value seen
    double max_cfl = 0.0;
    double energy_constant = 0.0;
    std::optional<CommonNoisePath> noise;
};

struct ForwardTrajectory1D {
    Grid grid;
    std::vector<SubProb1D> nu;  // nt + 1 slices
    std::vector<double> mass;
    double min_value = 0.0;
    double max_cfl = 0.0;
    double energy_constant = 0.0;
    std::optional<CommonNoisePath> noise;
};

/// IMEX finite-volume march for the joint law of (X, Lambda). Throws
/// GridMismatch, ControlOutOfBox and CFLViolation.
ForwardTrajectory2D solve_forward_2d(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                     const CommonNoisePath* noise = nullptr, const ForwardOptions& opt = {});
/// Same march for the initial density given explicitly.
ForwardTrajectory2D solve_forward_2d(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                     const Density2D& initial, const CommonNoisePath* noise = nullptr,
                                     const ForwardOptions& opt = {});

/// Killed equation for nu with the exact factor e^{-lambda dt} per step.
/// `g` must not depend on y.
ForwardTrajectory1D solve_forward_1d(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                     const CommonNoisePath* noise = nullptr, const ForwardOptions& opt = {});
ForwardTrajectory1D solve_forward_1d(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                     const SubProb1D& initial, const CommonNoisePath* noise = nullptr,
                                     const ForwardOptions& opt = {});

/// Moves mass by `offset` along x: out(x) = in(x - offset) by linear
/// interpolation, zero inflow, outflow lost.
void shift_density(std::span<const double> in, std::span<double> out, const XGrid& g, double offset);
SubProb1D shift_density(const SubProb1D& v, double offset);
Density2D shift_density(const Density2D& v, double offset);

/// Reads a field at x + offset (the backward counterpart of the shift);
/// values outside the grid are held constant.
void shift_field(std::span<const double> in, std::span<double> out, const XGrid& g, double offset);

/// Diffusion coefficient used by the solvers: sigma^2/2 on a noise path,
/// (sigma^2 + sigma0^2)/2 otherwise.
double diffusion_coef(const ModelSpec& spec, double t, double x, bool pathwise);

/// Zero control for the grid (value = box centre clamped to contain 0).
FeedbackControl zero_control(const ModelSpec& spec, const Grid& grid, bool y_dependent = false);

}  // namespace mvk
