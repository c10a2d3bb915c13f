#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvk/fields.hpp"
#include "mvk/grid.hpp"
#include "mvk/rng.hpp"

namespace mvk {

using MeasureFn = std::function<double(double t, double x, const MeasureView& nu)>;
/// Linear functional derivative  D F(t, x, nu)(x').
using MeasureDerivFn = std::function<double(double t, double x, const MeasureView& nu, double xp)>;
using ControlFn = std::function<double(double t, double x, std::span<const double> g)>;
using ControlGradFn =
    std::function<void(double t, double x, std::span<const double> g, std::span<double> grad)>;

/// Coefficients of the controlled killed McKean-Vlasov system. Empty
/// optional callables are read as identically zero.
struct ModelSpec {
    std::string name = "custom";
    int dim_g = 1;

    MeasureFn b0;
    /// Optional general form of b1(t, x, g). When set, validation checks that
    /// it is linear in g and derives `b1_factor` from it.
    ControlFn b1;
    /// Component k of the row vector beta(t, x) with b1(t, x, g) = beta . g.
    std::function<double(double t, double x, int k)> b1_factor;
    std::function<double(double t, double x)> sigma;
    std::function<double(double t)> sigma0;
    std::function<double(double t, double x)> lambda;

    MeasureFn f0;
    ControlFn f1;
    ControlGradFn grad_f1;
    /// Set when f1 = c/2 |g|^2 exactly; enables the closed-form minimiser.
    std::optional<double> f1_quadratic;
    /// True when f1 does not depend on (t, x).
    bool f1_autonomous = false;
    /// Optional exact argmin over the box of s . h + f1(t, x, h); replaces
    /// the generic search when set.
    std::function<void(double t, double x, std::span<const double> s, std::span<double> out)> f1_linear_argmin;

    std::function<double(const MeasureView&)> psi;
    std::function<double(const MeasureView&, double x)> Dpsi;
    MeasureDerivFn Db0;
    MeasureDerivFn Df0;

    std::vector<double> g_min{-1.0};
    std::vector<double> g_max{1.0};
    double T = 1.0;

    std::function<double(double x, double y)> initial_density;
    /// Optional exact sampler of the initial law of (X_0, Lambda_0).
    std::function<std::pair<double, double>(CounterRng&)> initial_sampler;

    /// Lower bound c in sigma^2 >= c.
    double nondegeneracy_c = 1e-6;
    /// Sampling window used by validation.
    double x_lo = -5.0;
    double x_hi = 5.0;

    // Null-safe evaluators.
    [[nodiscard]] double eval_b0(double t, double x, const MeasureView& nu) const { return b0 ? b0(t, x, nu) : 0.0; }
    [[nodiscard]] double eval_f0(double t, double x, const MeasureView& nu) const { return f0 ? f0(t, x, nu) : 0.0; }
    [[nodiscard]] double eval_sigma0(double t) const { return sigma0 ? sigma0(t) : 0.0; }
    [[nodiscard]] double eval_lambda(double t, double x) const { return lambda ? lambda(t, x) : 0.0; }
    [[nodiscard]] double eval_f1(double t, double x, std::span<const double> g) const { return f1 ? f1(t, x, g) : 0.0; }
    [[nodiscard]] double eval_psi(const MeasureView& nu) const { return psi ? psi(nu) : 0.0; }
    [[nodiscard]] double eval_Dpsi(const MeasureView& nu, double x) const { return Dpsi ? Dpsi(nu, x) : 0.0; }
    [[nodiscard]] double beta(double t, double x, int k) const { return b1_factor ? b1_factor(t, x, k) : 0.0; }
    /// beta(t, x) . g
    [[nodiscard]] double eval_b1(double t, double x, std::span<const double> g) const;
    /// Gradient of f1 in g; finite differences when no gradient is supplied.
    void eval_grad_f1(double t, double x, std::span<const double> g, std::span<double> out) const;
    [[nodiscard]] bool in_box(std::span<const double> g, double tol = 1e-12) const;
    /// sup over the box of |beta(t, x) . g|.
    [[nodiscard]] double max_b1(double t, double x) const;
};

struct ValidationReport {
    std::vector<std::string> warnings;
};

/// Checks the standing assumptions on sampled points and returns the
/// validated spec. Throws Error with NondegeneracyViolation,
/// NegativeIntensity, NonconvexControlCost or NonlinearDrift; soft findings
/// go to `report`.
ModelSpec validate_model(const ModelSpec& spec, ValidationReport* report = nullptr,
                         unsigned long long seed = 12345);

/// Parameters of the built-in linear-quadratic model with killing below 0.
struct LQParams {
    double kappa = 1.0;      // lambda = kappa on x < 0
    bool kill_everywhere = false;  // lambda = kappa on all of R
    double c = 1.0;          // f1 = c/2 g^2
    double q = 1.0;          // f0 = q/2 x^2 (+ mean-field term)
    double gamma = 0.0;      // f0 += gamma/2 (x - M1(nu))^2
    double alpha = 0.0;      // b0 = alpha (M1(nu) - x)
    double q_T = 1.0;        // psi = <nu, q_T/2 x^2>
    double x_T = 0.0;        // ... centred at x_T
    double sigma = 1.0;
    double sigma0 = 0.0;
    double box = 1.0;        // G = [-box, box]
    double T = 1.0;
    double m0 = 0.5;         // X_0 ~ N(m0, s0^2)
    double s0 = 0.5;
    double zeta = 0.5;       // Lambda_0 ~ Exp(mean zeta); 0 puts it at 0
};

ModelSpec make_lq_killing(const LQParams& p = {});

/// LQ model with constant intensity kappa on all of R.
ModelSpec make_constant_lambda(double kappa, const LQParams& p = {});

/// Cell averages of the initial density in y (point values in x), rescaled
/// to unit discrete mass. The top row also carries the mass above the grid;
/// rows below y = 0 are left empty.
Density2D discretize_initial(const ModelSpec& spec, const Grid& grid);

/// int e^{-y} rho(x, y) dy by a fine rule in y (independent of the y grid),
/// normalised so the discrete x-marginal has unit mass.
SubProb1D initial_subprob(const ModelSpec& spec, const Grid& grid);

}  // namespace mvk
