#include "mvk/mfc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mvk/error.hpp"
#include "mvk/hamiltonian.hpp"

namespace mvk {

namespace {

double time_weight(int n, int nt) { return (n == 0 || n == nt) ? 0.5 : 1.0; }

void check_levels(const FeedbackControl& g, const Grid& grid) {
    if (g.levels != grid.nt + 1 || g.nx != grid.nx())
        throw Error(ErrorCode::GridMismatch, "control does not match the trajectory grid");
}

// dt sum_n w_n sum_i dx nu_i (f0 + f1(g_i)) with g taken at row j = 0
double running_nu(const ModelSpec& spec, const FeedbackControl& g, const Grid& grid,
                  const std::vector<SubProb1D>& nu) {
    const int nt = grid.nt, nx = grid.nx();
    double s = 0.0;
    for (int n = 0; n <= nt; ++n) {
        const double t = grid.t(n);
        const MeasureView view(nu[n]);
        double r = 0.0;
        for (int i = 0; i < nx; ++i) {
            const double v = nu[n].values[i];
            if (v == 0.0) continue;
            const double x = grid.x(i);
            r += v * (spec.eval_f0(t, x, view) + spec.eval_f1(t, x, g.node(n, i)));
        }
        s += time_weight(n, nt) * r * grid.dx();
    }
    return s * grid.dt();
}

}  // namespace

CostReport evaluate_cost(const ModelSpec& spec, const FeedbackControl& g, const ForwardTrajectory1D& traj) {
    const Grid& grid = traj.grid;
    check_levels(g, grid);
    if (static_cast<int>(traj.nu.size()) != grid.nt + 1) throw Error(ErrorCode::GridMismatch, "trajectory length");
    CostReport r;
    r.form = "nu/f";
    r.running = running_nu(spec, g, grid, traj.nu);
    r.terminal = spec.eval_psi(MeasureView(traj.nu.back()));
    r.total = r.running + r.terminal;
    return r;
}

CostReport evaluate_cost(const ModelSpec& spec, const FeedbackControl& g, const ForwardTrajectory2D& traj) {
    const Grid& grid = traj.grid;
    check_levels(g, grid);
    if (g.ny != 1 && g.ny != grid.ny()) throw Error(ErrorCode::GridMismatch, "control rows");
    if (static_cast<int>(traj.mu.size()) != grid.nt + 1) throw Error(ErrorCode::GridMismatch, "trajectory length");
    const int nt = grid.nt, nx = grid.nx(), ny = grid.ny();
    const double vol = grid.dx() * grid.dy();
    std::vector<double> ey(ny);
    for (int j = 0; j < ny; ++j) ey[j] = std::exp(-grid.y(j));

    CostReport r;
    r.form = "mu/f~";
    double s = 0.0;
    std::vector<double> f0(nx);
    for (int n = 0; n <= nt; ++n) {
        const double t = grid.t(n);
        const MeasureView view(traj.nu[n]);
        for (int i = 0; i < nx; ++i) f0[i] = spec.eval_f0(t, grid.x(i), view);
        const Density2D& mu = traj.mu[n];
        double rn = 0.0;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double m = mu.at(i, j);
                if (m == 0.0) continue;
                rn += m * ey[j] * (f0[i] + spec.eval_f1(t, grid.x(i), g.node(n, i, j)));
            }
        s += time_weight(n, nt) * rn * vol;
    }
    r.running = s * grid.dt();
    r.terminal = spec.eval_psi(MeasureView(traj.nu.back()));
    r.total = r.running + r.terminal;
    if (g.y_independent()) {
        r.both_forms = true;
        r.total_other = running_nu(spec, g, grid, traj.nu) + r.terminal;
        r.form_gap = std::abs(r.total - r.total_other);
    }
    return r;
}

MfcResult solve_mfc(const ModelSpec& spec, const Grid& grid, const MfcOptions& opt, bool throw_on_stall) {
    FeedbackControl g = opt.initial.data.empty() ? zero_control(spec, grid, false) : opt.initial;
    if (!g.y_independent()) throw Error(ErrorCode::GridMismatch, "1D loop needs a y-independent control");

    MfcResult best;
    double best_res = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<double> costs, residuals;
    for (int it = 1; it <= opt.max_iter; ++it) {
        ForwardTrajectory1D fw = solve_forward_1d(spec, grid, g, opt.noise, opt.forward);
        const double J = evaluate_cost(spec, g, fw).total;
        costs.push_back(J);
        const auto term = terminal_1d(spec, fw.nu.back());
        BSPDESolution u = solve_backward_1d(spec, grid, fw.nu, term, opt.backward, opt.noise);
        const FeedbackControl g_new = u.control;
        double res = 0.0;
        for (std::size_t k = 0; k < g.data.size(); ++k) res = std::max(res, std::abs(g_new.data[k] - g.data[k]));
        residuals.push_back(res);

        const bool improved = res < best_res;
        if (improved) {
            best_res = res;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (improved || res <= opt.tol) {
            best.g = g;
            best.u = std::move(u);
            best.forward = std::move(fw);
            best.J = J;
        }
        best.iterations = it;
        if (res <= opt.tol) {
            best.converged = true;
            break;
        }
        if (since_best >= opt.stall_window) {
            best.stalled = true;
            break;
        }
        for (std::size_t k = 0; k < g.data.size(); ++k)
            g.data[k] = (1.0 - opt.theta) * g.data[k] + opt.theta * g_new.data[k];
    }
    best.cost_trace = std::move(costs);
    best.residual_trace = std::move(residuals);
    if (!best.converged && !best.stalled) best.stalled = true;
    if (best.stalled && throw_on_stall) {
        std::ostringstream os;
        os << "Picard loop stopped after " << best.iterations << " iterations with residual " << best_res;
        throw Error(ErrorCode::PicardStalled, os.str());
    }
    return best;
}

namespace {

// Upwind K~ query at cell (n, i, j) built from the adjoint gradients.
UpwindQuery cell_query(const ModelSpec& spec, const Grid& grid, const BSPDESolution& adj, const MeasureView& nu,
                       int n, int i, int j) {
    UpwindQuery q;
    q.t = grid.t(n);
    q.x = grid.x(i);
    q.b0 = spec.eval_b0(q.t, q.x, nu);
    if (n < grid.nt) {
        const std::size_t k = static_cast<std::size_t>(j) * grid.nx() + i;
        q.p_plus = adj.d_plus[n][k];
        q.p_minus = adj.d_minus[n][k];
    }
    q.weight = time_weight(n, grid.nt) * std::exp(-grid.y(j));
    return q;
}

void betas(const ModelSpec& spec, double t, double x, std::vector<double>& beta) {
    beta.resize(spec.dim_g);
    for (int k = 0; k < spec.dim_g; ++k) beta[k] = spec.beta(t, x, k);
}

FeedbackControl minimise_pointwise(const ModelSpec& spec, const Grid& grid, const ForwardTrajectory2D& fw,
                                   const BSPDESolution& adj) {
    const int nt = grid.nt, nx = grid.nx(), ny = grid.ny();
    FeedbackControl out(nt + 1, nx, ny, spec.dim_g);
    for (int n = 0; n <= nt; ++n) {
        const MeasureView view(fw.nu[n]);
#pragma omp parallel for schedule(static)
        for (int j = 0; j < ny; ++j) {
            std::vector<double> beta;
            for (int i = 0; i < nx; ++i) {
                const UpwindQuery q = cell_query(spec, grid, adj, view, n, i, j);
                betas(spec, q.t, q.x, beta);
                upwind_minimize(q, spec, beta, out.node(n, i, j));
            }
        }
    }
    return out;
}

}  // namespace

Mfc2DResult solve_mfc_2d(const ModelSpec& spec, const Grid& grid, const MfcOptions& opt) {
    FeedbackControl g = zero_control(spec, grid, true);
    if (!opt.initial.data.empty()) {
        g = opt.initial.y_independent() ? opt.initial.lifted(grid.ny()) : opt.initial;
    }
    Mfc2DResult res;
    FeedbackControl best_g = g;
    double best_res = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int it = 1; it <= opt.max_iter; ++it) {
        ForwardTrajectory2D fw = solve_forward_2d(spec, grid, g, opt.noise, opt.forward);
        res.cost_trace.push_back(evaluate_cost(spec, g, fw).total);
        const auto term = terminal_2d(spec, grid, fw.nu.back());
        const BSPDESolution adj = solve_backward_2d(spec, grid, fw, &g, nullptr, term, opt.backward);
        const FeedbackControl g_new = minimise_pointwise(spec, grid, fw, adj);
        double r = 0.0;
        for (std::size_t k = 0; k < g.data.size(); ++k) r = std::max(r, std::abs(g_new.data[k] - g.data[k]));
        res.residual_trace.push_back(r);
        res.iterations = it;
        if (r < best_res) {
            best_res = r;
            best_g = g;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (r <= opt.tol) {
            // the minimiser itself, so active box constraints hold exactly
            res.converged = true;
            best_g = g_new;
            break;
        }
        if (since_best >= opt.stall_window) break;
        for (std::size_t k = 0; k < g.data.size(); ++k)
            g.data[k] = (1.0 - opt.theta) * g.data[k] + opt.theta * g_new.data[k];
    }
    res.stalled = !res.converged;
    res.g = std::move(best_g);
    res.forward = solve_forward_2d(spec, grid, res.g, opt.noise, opt.forward);
    res.J = evaluate_cost(spec, res.g, res.forward).total;
    res.adjoint = solve_backward_2d(spec, grid, res.forward, &res.g, nullptr,
                                    terminal_2d(spec, grid, res.forward.nu.back()), opt.backward);
    return res;
}

double gateaux_derivative(const ModelSpec& spec, const FeedbackControl& g, const FeedbackControl& h,
                          const ForwardTrajectory2D& mu_traj, const BSPDESolution& adjoint) {
    const Grid& grid = mu_traj.grid;
    const int nt = grid.nt, nx = grid.nx(), ny = grid.ny(), d = spec.dim_g;
    check_levels(g, grid);
    check_levels(h, grid);
    if (h.dim != d || g.dim != d) throw Error(ErrorCode::GridMismatch, "control dimension");
    if (adjoint.d_plus.size() != static_cast<std::size_t>(nt))
        throw Error(ErrorCode::InvalidArgument, "adjoint was not solved for a given control");
    for (int n = 0; n <= nt; ++n)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const auto gv = g.node(n, i, j);
                const auto hv = h.node(n, i, j);
                for (int k = 0; k < d; ++k) {
                    if (!std::isfinite(hv[k])) throw Error(ErrorCode::NonfiniteInput, "direction not finite");
                    if ((hv[k] > 0.0 && gv[k] >= spec.g_max[k] - 1e-12) ||
                        (hv[k] < 0.0 && gv[k] <= spec.g_min[k] + 1e-12)) {
                        std::ostringstream os;
                        os << "direction leaves the box at level " << n << ", node (" << i << ", " << j << ")";
                        throw Error(ErrorCode::DirectionLeavesBox, os.str());
                    }
                }
            }
    const double vol = grid.dx() * grid.dy();
    std::vector<double> beta(d), grad(d);
    double total = 0.0;
    for (int n = 0; n <= nt; ++n) {
        const double t = grid.t(n);
        const double w = time_weight(n, nt);
        const MeasureView view(mu_traj.nu[n]);
        const Density2D& mu = mu_traj.mu[n];
        double s = 0.0;
        for (int i = 0; i < nx; ++i) {
            const double x = grid.x(i);
            const double b0 = spec.eval_b0(t, x, view);
            betas(spec, t, x, beta);
            for (int j = 0; j < ny; ++j) {
                const double m = mu.at(i, j);
                if (m == 0.0) continue;
                const auto gv = g.node(n, i, j);
                const auto hv = h.node(n, i, j);
                double bh = 0.0, b = b0;
                for (int k = 0; k < d; ++k) {
                    bh += beta[k] * hv[k];
                    b += beta[k] * gv[k];
                }
                double term = 0.0;
                if (n < nt) {
                    const std::size_t c = static_cast<std::size_t>(j) * nx + i;
                    const double dp = adjoint.d_plus[n][c], dm = adjoint.d_minus[n][c];
                    const double P = b > 0.0 ? dp : (b < 0.0 ? dm : (bh > 0.0 ? dp : dm));
                    term += bh * P;
                }
                spec.eval_grad_f1(t, x, gv, grad);
                double gh = 0.0;
                for (int k = 0; k < d; ++k) gh += grad[k] * hv[k];
                term += w * std::exp(-grid.y(j)) * gh;
                s += m * term;
            }
        }
        total += s * vol;
    }
    return total * grid.dt();
}

double smp_residual(const ModelSpec& spec, const FeedbackControl& g, const ForwardTrajectory2D& mu_traj,
                    const BSPDESolution& adjoint) {
    const Grid& grid = mu_traj.grid;
    const int nt = grid.nt, nx = grid.nx(), ny = grid.ny(), d = spec.dim_g;
    check_levels(g, grid);
    if (adjoint.d_plus.size() != static_cast<std::size_t>(nt))
        throw Error(ErrorCode::InvalidArgument, "adjoint was not solved for a given control");
    double worst = 0.0;
    std::vector<double> beta(d), hmin(d);
    for (int n = 0; n <= nt; ++n) {
        const MeasureView view(mu_traj.nu[n]);
        const Density2D& mu = mu_traj.mu[n];
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                if (mu.at(i, j) <= kMuFloor) continue;
                const UpwindQuery q = cell_query(spec, grid, adjoint, view, n, i, j);
                betas(spec, q.t, q.x, beta);
                const double best = upwind_minimize(q, spec, beta, hmin);
                const double at_g = upwind_value(q, spec, beta, g.node(n, i, j));
                worst = std::max(worst, at_g - best);
            }
    }
    return std::max(worst, 0.0);
}

double intensity_independence_diag(const FeedbackControl& g) { return intensity_independence_diag(g, 0, g.ny); }

double intensity_independence_diag(const FeedbackControl& g, int j_lo, int j_hi) {
    j_lo = std::max(j_lo, 0);
    j_hi = std::min(j_hi, g.ny);
    double out = 0.0;
    for (int n = 0; n < g.levels; ++n)
        for (int i = 0; i < g.nx; ++i)
            for (int k = 0; k < g.dim; ++k) {
                double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                for (int j = j_lo; j < j_hi; ++j) {
                    const double v = g.at(n, i, j, k);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                if (j_hi > j_lo) out = std::max(out, hi - lo);
            }
    return out;
}

SeparabilityReport separability_check(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                      const BackwardOptions& opt) {
    if (!g.y_independent()) throw Error(ErrorCode::InvalidArgument, "separability needs a y-independent control");
    const auto fw = solve_forward_2d(spec, grid, g, nullptr, opt.exec == Exec::Serial ? ForwardOptions{Exec::Serial}
                                                                                      : ForwardOptions{});
    const auto one = solve_backward_1d(spec, grid, fw.nu, terminal_1d(spec, fw.nu.back()), opt);
    const auto two = solve_backward_2d(spec, grid, fw, nullptr, &one, terminal_2d(spec, grid, fw.nu.back()), opt);
    SeparabilityReport r;
    const int nx = grid.nx();
    for (int n = 0; n <= grid.nt; ++n) {
        if (!one.has_level(n) || !two.has_level(n)) continue;
        const auto U = one.at(n);
        const auto V = two.at(n);
        for (int j = grid.yg.j_zero(); j < grid.ny(); ++j) {
            const double ey = std::exp(-grid.y(j));
            for (int i = 0; i < nx; ++i) {
                const double ref = ey * U[i];
                r.gap = std::max(r.gap, std::abs(V[static_cast<std::size_t>(j) * nx + i] - ref));
                r.scale = std::max(r.scale, std::abs(ref));
            }
        }
    }
    r.relative = r.scale > 0.0 ? r.gap / r.scale : r.gap;
    r.fp_capped = one.fp_capped + two.fp_capped;
    return r;
}

}  // namespace mvk
