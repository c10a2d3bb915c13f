#pragma once

#include <span>
#include <vector>

#include "mvk/fields.hpp"
#include "mvk/model.hpp"

namespace mvk {

inline constexpr double kMuFloor = 1e-12;

/// g_- = argmin over the box of h -> beta(t, x) . h p + f1(t, x, h).
/// Closed form for quadratic f1, golden section when d_G = 1, projected
/// gradient with Armijo backtracking otherwise. Ties resolve to the
/// lexicographically smallest minimiser. Throws NonfiniteInput.
std::vector<double> minimize_hamiltonian(double t, double x, double p, const ModelSpec& spec);
void minimize_hamiltonian(double t, double x, double p, const ModelSpec& spec, std::span<double> out);

/// H^nu(t, x, r, p) = inf_h [b(t, x, nu, h) p + f(t, x, nu, h)] - lambda r.
double h_nu(double t, double x, double r, double p, const MeasureView& nu, const ModelSpec& spec);

/// F^nu(x) = <nu, Db0(t, ., nu)(x) p(.)> + <nu, Df0(t, ., nu)(x)> with p
/// the gradient field on the grid of nu.
double f_nu(double t, double x, const MeasureView& nu, std::span<const double> dxu,
            const ModelSpec& spec);
/// All grid points at once.
void f_nu_field(double t, const MeasureView& nu, std::span<const double> dxu, const ModelSpec& spec,
                std::span<double> out);

/// K~(t, x, y, p, h) = b(t, x, nu, h) p + e^{-y} f(t, x, nu, h).
double k_tilde(double t, double x, double y, double p, std::span<const double> h, const MeasureView& nu,
               const ModelSpec& spec);

/// F~^mu(x, y) = e^{-y} [ <mu, Db0(t, ., nu)(x) p> + <nu, Df0(t, ., nu)(x)> ]
/// with p = dxu_2d on the (x, y) grid and nu = S(mu).
double f_tilde_mu(double t, double x, double y, const Density2D& mu, std::span<const double> dxu_2d,
                  const ModelSpec& spec);

/// H~^mu: inf over the box of K~ when mu_value > kMuFloor, otherwise K~ at
/// the fallback control.
double h_tilde_mu(double t, double x, double y, double p, double mu_value,
                  std::span<const double> fallback_g, const MeasureView& nu, const ModelSpec& spec);

/// Monotone (upwind) Hamiltonian used by the solvers:
///   min_h  b(h)^+ p_plus - b(h)^- p_minus + w f1(h)
/// with b(h) = b0 + beta . h. `beta` has d_G entries. Returns the minimum
/// and writes the minimiser to `g`.
struct UpwindQuery {
    double t = 0.0;
    double x = 0.0;
    double b0 = 0.0;
    double p_plus = 0.0;
    double p_minus = 0.0;
    double weight = 1.0;
};
double upwind_minimize(const UpwindQuery& q, const ModelSpec& spec, std::span<const double> beta,
                       std::span<double> g);
/// Value of the upwind expression at a given control.
double upwind_value(const UpwindQuery& q, const ModelSpec& spec, std::span<const double> beta,
                    std::span<const double> g);

}  // namespace mvk
