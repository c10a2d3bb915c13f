#pragma once

#include <span>
#include <vector>

#include "mvk/fields.hpp"
#include "mvk/forward.hpp"
#include "mvk/grid.hpp"
#include "mvk/model.hpp"

namespace mvk {

struct FixedPointOptions {
    double theta = 0.5;   // damping
    double tol = 1e-10;   // on the e^{eta t}-weighted L2 increment
    int max_iter = 50;
    double eta = 1.0;
    int diverge_after = 5;  // consecutive residual increases
};

struct BackwardOptions {
    FixedPointOptions fp;
    Exec exec = Exec::Parallel;
    /// Keep the nonlocal terms F (mean-field control). Off gives the
    /// mean-field-game system.
    bool nonlocal = true;
    /// Store every k-th time level (plus the terminal one).
    int store_every = 1;
};

struct EnergyReport {
    double sup_u2 = 0.0;     // sup_n |u^n|^2
    double grad_sum = 0.0;   // sum_n |D u^n|^2 dt
    double q_sum = 0.0;      // sum_n |q^n|^2 dt
    double psi_norm2 = 0.0;  // |terminal|^2
    double constant = 0.0;   // smallest C with lhs <= C (1 + |psi|^2)
};

struct BSPDESolution {
    Grid grid;
    bool two_d = false;
    int store_every = 1;
    /// u[s] is the field at time level s * store_every (last one at nt).
    std::vector<std::vector<double>> u;
    std::vector<int> level;
    /// Common-noise integrand sigma0 d_x u; empty without a noise path.
    std::vector<std::vector<double>> q;
    /// Exact-adjoint mode: one-sided gradients of M^{-T} u^{n+1} used in
    /// step n, n = 0..nt-1.
    std::vector<std::vector<double>> d_plus, d_minus;
    /// Minimising control produced by the semilinear solves.
    FeedbackControl control;
    std::vector<int> fp_iterations;  // per time step (max over rows in 2D)
    double max_contraction = 0.0;
    double max_residual = 0.0;
    int fp_capped = 0;  // steps that hit max_iter

    [[nodiscard]] bool has_level(int n) const;
    [[nodiscard]] std::span<const double> at(int n) const;
    [[nodiscard]] std::span<double> at(int n);
    [[nodiscard]] int nx() const { return grid.nx(); }
};

/// Semilinear killed backward equation on the x grid, marched with the
/// implicit diffusion, the exact factor e^{-lambda dt}, the monotone
/// Hamiltonian inside a damped fixed point and the explicit nonlocal term.
/// `terminal` holds D psi(nu_T) at the nodes. Throws FixedPointDiverged and
/// GridMismatch.
BSPDESolution solve_backward_1d(const ModelSpec& spec, const Grid& grid, const ForwardTrajectory1D& nu_traj,
                                std::span<const double> terminal, const BackwardOptions& opt = {});
/// Same with the measure flow given directly.
BSPDESolution solve_backward_1d(const ModelSpec& spec, const Grid& grid, const std::vector<SubProb1D>& nu,
                                std::span<const double> terminal, const BackwardOptions& opt = {},
                                const CommonNoisePath* noise = nullptr);

/// Backward equation on the (extended) half-plane. With `g` it is the exact
/// discrete adjoint of solve_forward_2d for that control; with `u_1d` it is
/// the semilinear equation whose Hamiltonian falls back to the 1D control
/// where mu vanishes. `terminal` has nx * ny entries. Throws
/// ArgumentConflict unless exactly one of g, u_1d is given.
BSPDESolution solve_backward_2d(const ModelSpec& spec, const Grid& grid, const ForwardTrajectory2D& mu_traj,
                                const FeedbackControl* g, const BSPDESolution* u_1d,
                                std::span<const double> terminal, const BackwardOptions& opt = {});

/// D psi(nu) at the x nodes.
std::vector<double> terminal_1d(const ModelSpec& spec, const SubProb1D& nu_T);
/// e^{-y} D psi(nu)(x) on the (x, y) grid.
std::vector<double> terminal_2d(const ModelSpec& spec, const Grid& grid, const SubProb1D& nu_T);

EnergyReport energy_report(const BSPDESolution& sol, std::span<const double> terminal);

/// Cosine-Galerkin solution at t = 0 of  d_t u + a u'' - lambda u = 0 on the
/// x range with zero-flux ends, constant a and lambda, `modes` modes.
std::vector<double> galerkin_heat_backward(const Grid& grid, double a, double lambda,
                                           std::span<const double> terminal, int modes);

/// Exact transpose of shift_density (zero outside the grid).
void shift_field_adjoint(std::span<const double> in, std::span<double> out, const XGrid& g, double offset);

}  // namespace mvk
