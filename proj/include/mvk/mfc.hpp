#pragma once

#include <span>
#include <string>
#include <vector>

#include "mvk/backward.hpp"
#include "mvk/fields.hpp"
#include "mvk/forward.hpp"
#include "mvk/grid.hpp"
#include "mvk/model.hpp"

namespace mvk {

struct CostReport {
    double running = 0.0;   // time integral of the running cost
    double terminal = 0.0;  // psi(nu_T)
    double total = 0.0;
    std::string form;       // "nu/f" or "mu/f~"
    /// Set when both forms could be evaluated (2D trajectory with a
    /// y-independent control).
    bool both_forms = false;
    double total_other = 0.0;
    double form_gap = 0.0;
};

/// Cost of `g` along a 1D trajectory (nu/f form). Weights 1/2 at both ends
/// of the time grid. Throws GridMismatch.
CostReport evaluate_cost(const ModelSpec& spec, const FeedbackControl& g, const ForwardTrajectory1D& traj);
/// Cost along a 2D trajectory (mu/f~ form), plus the nu/f form when g does
/// not depend on y.
CostReport evaluate_cost(const ModelSpec& spec, const FeedbackControl& g, const ForwardTrajectory2D& traj);

struct MfcOptions {
    double theta = 0.5;
    double tol = 1e-6;  // sup |g_new - g|
    int max_iter = 200;
    int stall_window = 30;  // iterations without a new best residual
    BackwardOptions backward;
    ForwardOptions forward;
    /// Starting control; zero control when empty.
    FeedbackControl initial;
    const CommonNoisePath* noise = nullptr;
};

struct MfcResult {
    FeedbackControl g;
    BSPDESolution u;
    ForwardTrajectory1D forward;
    double J = 0.0;
    std::vector<double> cost_trace;
    std::vector<double> residual_trace;
    int iterations = 0;
    bool converged = false;
    bool stalled = false;
};

/// Damped Picard loop: forward 1D, backward 1D, minimising feedback,
/// relaxation. On a plateau the best iterate is returned with `stalled`
/// set (throws PicardStalled instead when `throw_on_stall`).
MfcResult solve_mfc(const ModelSpec& spec, const Grid& grid, const MfcOptions& opt = {},
                    bool throw_on_stall = false);

struct Mfc2DResult {
    FeedbackControl g;  // depends on (t, x, y)
    BSPDESolution adjoint;
    ForwardTrajectory2D forward;
    double J = 0.0;
    std::vector<double> cost_trace;
    std::vector<double> residual_trace;
    int iterations = 0;
    bool converged = false;
    bool stalled = false;
};

/// Loop on the joint law: forward 2D, exact discrete adjoint for the
/// current control, pointwise minimisation of the upwind K~ Hamiltonian,
/// relaxation.
Mfc2DResult solve_mfc_2d(const ModelSpec& spec, const Grid& grid, const MfcOptions& opt = {});

/// Directional derivative of the discrete cost at g along h, assembled from
/// the forward trajectory and the exact adjoint (solve_backward_2d with
/// g). Throws DirectionLeavesBox when g + eps h leaves the box for every
/// small eps > 0.
double gateaux_derivative(const ModelSpec& spec, const FeedbackControl& g, const FeedbackControl& h,
                          const ForwardTrajectory2D& mu_traj, const BSPDESolution& adjoint);

/// sup over cells with mu > kMuFloor of K~(g) - inf_h K~(h), with the
/// upwind form of K~ built from the adjoint gradients.
double smp_residual(const ModelSpec& spec, const FeedbackControl& g, const ForwardTrajectory2D& mu_traj,
                    const BSPDESolution& adjoint);

/// max over (t, x) of the spread of g along y (max over components).
double intensity_independence_diag(const FeedbackControl& g);
/// Same restricted to the rows j in [j_lo, j_hi).
double intensity_independence_diag(const FeedbackControl& g, int j_lo, int j_hi);

struct SeparabilityReport {
    double gap = 0.0;    // sup |u~ - e^{-y} u| over y >= 0 and stored levels
    double scale = 0.0;  // sup |e^{-y} u| over the same nodes
    double relative = 0.0;
    int fp_capped = 0;
};

/// Forward 2D with the y-independent control g, then the 1D solve against
/// S(mu) and the semilinear 2D solve with the 1D control as fallback.
SeparabilityReport separability_check(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                      const BackwardOptions& opt = {});

}  // namespace mvk
