#include "mvk/backward.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mvk/error.hpp"
#include "mvk/hamiltonian.hpp"
#include "mvk/kernels.hpp"
#include "mvk/measures.hpp"

namespace mvk {

bool BSPDESolution::has_level(int n) const {
    return n == grid.nt || (n >= 0 && n < grid.nt && n % store_every == 0);
}

std::span<const double> BSPDESolution::at(int n) const {
    if (!has_level(n)) throw Error(ErrorCode::InvalidArgument, "time level not stored");
    const std::size_t s = n == grid.nt ? u.size() - 1 : static_cast<std::size_t>(n / store_every);
    return u[s];
}

std::span<double> BSPDESolution::at(int n) {
    if (!has_level(n)) throw Error(ErrorCode::InvalidArgument, "time level not stored");
    const std::size_t s = n == grid.nt ? u.size() - 1 : static_cast<std::size_t>(n / store_every);
    return u[s];
}

void shift_field_adjoint(std::span<const double> in, std::span<double> out, const XGrid& g, double offset) {
    const int n = g.n;
    const double s = offset / g.dx;
    const double fl = std::floor(s);
    const int k = static_cast<int>(fl);
    const double w = s - fl;
    for (int a = 0; a < n; ++a) {
        const int i0 = a + k, i1 = a + k + 1;
        double v = 0.0;
        if (i0 >= 0 && i0 < n) v += (1.0 - w) * in[i0];
        if (i1 >= 0 && i1 < n) v += w * in[i1];
        out[a] = v;
    }
}

std::vector<double> terminal_1d(const ModelSpec& spec, const SubProb1D& nu_T) {
    const MeasureView view(nu_T);
    std::vector<double> out(nu_T.grid.n);
    for (int i = 0; i < nu_T.grid.n; ++i) out[i] = spec.eval_Dpsi(view, nu_T.grid.x(i));
    return out;
}

std::vector<double> terminal_2d(const ModelSpec& spec, const Grid& grid, const SubProb1D& nu_T) {
    const auto t1 = terminal_1d(spec, nu_T);
    std::vector<double> out(static_cast<std::size_t>(grid.nx()) * grid.ny());
    for (int j = 0; j < grid.ny(); ++j) {
        const double e = std::exp(-grid.y(j));
        for (int i = 0; i < grid.nx(); ++i) out[static_cast<std::size_t>(j) * grid.nx() + i] = e * t1[i];
    }
    return out;
}

namespace {

struct Coeffs {
    std::vector<double> b0, beta, lam, f0, a;
};

void step_coeffs(const ModelSpec& spec, const Grid& grid, int n, const MeasureView& nu, bool pathwise,
                 Coeffs& c) {
    const int nx = grid.nx(), d = spec.dim_g;
    const double t = grid.t(n);
    c.b0.resize(nx);
    c.beta.resize(static_cast<std::size_t>(nx) * d);
    c.lam.resize(nx);
    c.f0.resize(nx);
    c.a.resize(nx);
    for (int i = 0; i < nx; ++i) {
        const double x = grid.x(i);
        c.b0[i] = spec.eval_b0(t, x, nu);
        for (int k = 0; k < d; ++k) c.beta[i * d + k] = spec.beta(t, x, k);
        c.lam[i] = spec.eval_lambda(t, x);
        c.f0[i] = spec.eval_f0(t, x, nu);
        c.a[i] = n < grid.nt ? diffusion_coef(spec, grid.t(n + 1), x, pathwise) : 0.0;
    }
}

kernels::ThomasFactor adjoint_factor(const Coeffs& c, const Grid& grid) {
    kernels::Tridiag M;
    kernels::diffusion_matrix(c.a, grid.dt() / (grid.dx() * grid.dx()), true, M);
    return kernels::ThomasFactor(M);
}

void centred_gradient(std::span<const double> u, double dx, std::span<double> out) {
    const std::size_t n = u.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (i == 0)
            out[i] = (u[1] - u[0]) / dx;
        else if (i + 1 == n)
            out[i] = (u[n - 1] - u[n - 2]) / dx;
        else
            out[i] = (u[i + 1] - u[i - 1]) / (2.0 * dx);
    }
}

struct RowStats {
    int iterations = 0;
    double contraction = 0.0;
    double residual = 0.0;
    bool capped = false;
};

struct RowProblem {
    const ModelSpec* spec;
    double t;
    XGrid xg;
    double dt;
    const Coeffs* c;
    double weight;
    const double* mu_row;    // null: always the inf branch
    const double* fallback;  // nx * d, used where mu_row <= floor
    const kernels::ThomasFactor* MT;
};

// Monotone Hamiltonian (including the weighted f0) along a row.
void row_hamiltonian(const RowProblem& P, std::span<const double> w, std::span<double> H, double* g) {
    const ModelSpec& spec = *P.spec;
    const int nx = P.xg.n, d = spec.dim_g;
    const double dx = P.xg.dx;
    for (int i = 0; i < nx; ++i) {
        UpwindQuery q;
        q.t = P.t;
        q.x = P.xg.x(i);
        q.b0 = P.c->b0[i];
        q.p_plus = i + 1 < nx ? (w[i + 1] - w[i]) / dx : 0.0;
        q.p_minus = i > 0 ? (w[i] - w[i - 1]) / dx : 0.0;
        q.weight = P.weight;
        std::span<const double> beta(P.c->beta.data() + static_cast<std::size_t>(i) * d, d);
        std::span<double> gi(g + static_cast<std::size_t>(i) * d, d);
        double v;
        if (!P.mu_row || P.mu_row[i] > kMuFloor) {
            v = upwind_minimize(q, spec, beta, gi);
        } else {
            std::copy(P.fallback + static_cast<std::size_t>(i) * d, P.fallback + static_cast<std::size_t>(i + 1) * d,
                      gi.begin());
            v = upwind_value(q, spec, beta, gi);
        }
        H[i] = v + P.weight * P.c->f0[i];
    }
}

RowStats solve_row(const RowProblem& P, std::span<const double> rhs, std::span<double> w, double* g,
                   const FixedPointOptions& fp) {
    const int nx = P.xg.n;
    std::vector<double> H(nx), z(nx);
    RowStats st;
    const double scale = std::exp(fp.eta * P.t) * std::sqrt(P.xg.dx);
    double first = -1.0, prev = -1.0;
    int rising = 0;
    for (int it = 1; it <= fp.max_iter; ++it) {
        row_hamiltonian(P, w, H, g);
        for (int i = 0; i < nx; ++i) z[i] = rhs[i] + P.dt * H[i];
        P.MT->solve(z);
        double s = 0.0;
        for (int i = 0; i < nx; ++i) {
            const double d = fp.theta * (z[i] - w[i]);
            w[i] += d;
            s += d * d;
        }
        const double res = scale * std::sqrt(s);
        if (!std::isfinite(res)) throw Error(ErrorCode::FixedPointDiverged, "non-finite fixed-point residual");
        st.iterations = it;
        st.residual = res;
        if (first < 0.0) first = res;
        if (prev >= 0.0 && res > prev) {
            if (++rising >= fp.diverge_after) {
                std::ostringstream os;
                os << "residual grew " << rising << " times in a row at t = " << P.t << " (last " << res << ")";
                throw Error(ErrorCode::FixedPointDiverged, os.str());
            }
        } else {
            rising = 0;
        }
        prev = res;
        if (res <= fp.tol) break;
        if (it == fp.max_iter) st.capped = true;
    }
    if (st.iterations >= 2 && first > 0.0 && st.residual > 0.0)
        st.contraction = std::pow(st.residual / first, 1.0 / (st.iterations - 1));
    row_hamiltonian(P, w, H, g);
    return st;
}

void check_terminal(std::span<const double> terminal, std::size_t n) {
    if (terminal.size() != n) throw Error(ErrorCode::GridMismatch, "terminal data size differs from the grid");
    for (double v : terminal)
        if (!std::isfinite(v)) throw Error(ErrorCode::NonfiniteInput, "terminal data not finite");
}

void init_storage(BSPDESolution& sol, const Grid& grid, int store_every, std::size_t field) {
    sol.grid = grid;
    sol.store_every = std::max(1, store_every);
    const int nt = grid.nt;
    for (int n = 0; n < nt; n += sol.store_every) sol.level.push_back(n);
    sol.level.push_back(nt);
    sol.u.assign(sol.level.size(), std::vector<double>(field, 0.0));
}

void merge_stats(BSPDESolution& sol, const RowStats& st) {
    sol.max_contraction = std::max(sol.max_contraction, st.contraction);
    sol.max_residual = std::max(sol.max_residual, st.residual);
}

}  // namespace

BSPDESolution solve_backward_1d(const ModelSpec& spec, const Grid& grid, const ForwardTrajectory1D& nu_traj,
                                std::span<const double> terminal, const BackwardOptions& opt) {
    return solve_backward_1d(spec, grid, nu_traj.nu, terminal, opt,
                             nu_traj.noise ? &*nu_traj.noise : nullptr);
}

BSPDESolution solve_backward_1d(const ModelSpec& spec, const Grid& grid, const std::vector<SubProb1D>& nu,
                                std::span<const double> terminal, const BackwardOptions& opt,
                                const CommonNoisePath* noise) {
    const int nx = grid.nx(), nt = grid.nt, d = spec.dim_g;
    if (static_cast<int>(nu.size()) != nt + 1) throw Error(ErrorCode::GridMismatch, "measure flow length");
    for (const auto& v : nu)
        if (!(v.grid == grid.xg)) throw Error(ErrorCode::GridMismatch, "measure flow grid");
    check_terminal(terminal, nx);
    const double dt = grid.dt(), dx = grid.dx();

    BSPDESolution sol;
    init_storage(sol, grid, opt.store_every, nx);
    sol.two_d = false;
    sol.control = FeedbackControl(nt + 1, nx, 1, d);
    sol.fp_iterations.assign(nt, 0);
    if (noise) sol.q.assign(sol.level.size(), std::vector<double>(nx, 0.0));

    std::vector<double> next(terminal.begin(), terminal.end()), next2, cur(nx), rhs(nx), shifted(nx), grad(nx),
        F(nx);
    std::copy(next.begin(), next.end(), sol.at(nt).begin());
    Coeffs c;
    {
        // control at the terminal level
        const MeasureView view(nu[nt]);
        step_coeffs(spec, grid, nt, view, noise != nullptr, c);
        RowProblem P{&spec, grid.t(nt), grid.xg, dt, &c, 1.0, nullptr, nullptr, nullptr};
        std::vector<double> H(nx);
        row_hamiltonian(P, next, H, &sol.control.at(nt, 0));
    }
    const bool nonlocal = opt.nonlocal && (spec.Db0 || spec.Df0);
    for (int n = nt - 1; n >= 0; --n) {
        const double t = grid.t(n);
        const MeasureView view(nu[n]);
        step_coeffs(spec, grid, n, view, noise != nullptr, c);
        const auto MT = adjoint_factor(c, grid);
        const double off = noise ? spec.eval_sigma0(t) * noise->dW[n] : 0.0;
        if (off != 0.0)
            shift_field(next, shifted, grid.xg, off);
        else
            shifted = next;
        if (noise && sol.has_level(n)) {
            centred_gradient(shifted, dx, grad);
            auto& qn = sol.q[n / sol.store_every];
            for (int i = 0; i < nx; ++i) qn[i] = spec.eval_sigma0(t) * grad[i];
        }
        std::fill(F.begin(), F.end(), 0.0);
        if (nonlocal) {
            centred_gradient(shifted, dx, grad);
            f_nu_field(t, view, grad, spec, F);
        }
        for (int i = 0; i < nx; ++i) rhs[i] = std::exp(-c.lam[i] * dt) * shifted[i] + dt * F[i];
        if (next2.empty())
            cur = next;
        else
            for (int i = 0; i < nx; ++i) cur[i] = 2.0 * next[i] - next2[i];
        RowProblem P{&spec, t, grid.xg, dt, &c, 1.0, nullptr, nullptr, &MT};
        const RowStats st = solve_row(P, rhs, cur, &sol.control.at(n, 0), opt.fp);
        merge_stats(sol, st);
        sol.fp_iterations[n] = st.iterations;
        sol.fp_capped += st.capped;
        if (sol.has_level(n)) std::copy(cur.begin(), cur.end(), sol.at(n).begin());
        next2 = next;
        next = cur;
    }
    return sol;
}

BSPDESolution solve_backward_2d(const ModelSpec& spec, const Grid& grid, const ForwardTrajectory2D& mu_traj,
                                const FeedbackControl* g, const BSPDESolution* u_1d,
                                std::span<const double> terminal, const BackwardOptions& opt) {
    if ((g == nullptr) == (u_1d == nullptr))
        throw Error(ErrorCode::ArgumentConflict, "supply exactly one of a control and a 1D solution");
    const int nx = grid.nx(), ny = grid.ny(), nt = grid.nt, d = spec.dim_g;
    const std::size_t N = static_cast<std::size_t>(nx) * ny;
    if (!(mu_traj.grid == grid) || static_cast<int>(mu_traj.mu.size()) != nt + 1)
        throw Error(ErrorCode::GridMismatch, "forward trajectory does not match the grid");
    check_terminal(terminal, N);
    const double dt = grid.dt(), dx = grid.dx(), dy = grid.dy(), vol = dx * dy;
    const CommonNoisePath* noise = mu_traj.noise ? &*mu_traj.noise : nullptr;
    const bool parallel = opt.exec == Exec::Parallel;
    const bool nonlocal = opt.nonlocal && (spec.Db0 || spec.Df0);
    const double decay = std::exp(-dy);

    BSPDESolution sol;
    init_storage(sol, grid, opt.store_every, N);
    sol.two_d = true;
    sol.fp_iterations.assign(nt, 0);
    if (noise) sol.q.assign(sol.level.size(), std::vector<double>(N, 0.0));
    std::vector<double> ey(ny);
    for (int j = 0; j < ny; ++j) ey[j] = std::exp(-grid.y(j));

    std::vector<double> next(terminal.begin(), terminal.end()), cur(N), shifted(N), grad(N);
    std::copy(next.begin(), next.end(), sol.at(nt).begin());
    Coeffs c;
    std::vector<double> Fb(nx), Fd(nx), colsum(nx);

    // nonlocal sums: Fb_i = sum_k V col_k Db0(x_k)(x_i), Fd_i = <nu, Df0(.)(x_i)>
    auto nonlocal_terms = [&](int n, const MeasureView& view, const std::vector<double>* P) {
        std::fill(Fb.begin(), Fb.end(), 0.0);
        std::fill(Fd.begin(), Fd.end(), 0.0);
        if (!nonlocal) return;
        const double t = grid.t(n);
        const Density2D& mu = mu_traj.mu[n];
        const auto& nuv = mu_traj.nu[n].values;
        if (spec.Db0 && P) {
            std::fill(colsum.begin(), colsum.end(), 0.0);
            for (int l = 0; l < ny; ++l)
                for (int k = 0; k < nx; ++k) colsum[k] += mu.at(k, l) * (*P)[static_cast<std::size_t>(l) * nx + k];
            for (int i = 0; i < nx; ++i) {
                double s = 0.0;
                for (int k = 0; k < nx; ++k)
                    if (colsum[k] != 0.0) s += colsum[k] * spec.Db0(t, grid.x(k), view, grid.x(i));
                Fb[i] = vol * s;
            }
        }
        if (spec.Df0) {
            for (int i = 0; i < nx; ++i) {
                double s = 0.0;
                for (int k = 0; k < nx; ++k)
                    if (nuv[k] != 0.0) s += nuv[k] * spec.Df0(t, grid.x(k), view, grid.x(i));
                Fd[i] = dx * s;
            }
        }
    };

    if (g) {
        // exact discrete adjoint of the forward scheme for this control
        if (g->levels != nt + 1 || g->nx != nx || g->dim != d || (g->ny != 1 && g->ny != ny))
            throw Error(ErrorCode::GridMismatch, "control does not match the grid");
        sol.d_plus.assign(nt, std::vector<double>(N));
        sol.d_minus.assign(nt, std::vector<double>(N));
        std::vector<double> v(N), b(N);
        kernels::Layout L{nx, ny, dt, dx, dy};
        // running-cost gradient e^{-y}[f + <nu, Df0(.)(x)>] at level n
        auto add_cost_gradient = [&](int n, double w, std::vector<double>& U) {
            const double t = grid.t(n);
            const MeasureView view(mu_traj.nu[n]);
            step_coeffs(spec, grid, n, view, noise != nullptr, c);
            nonlocal_terms(n, view, nullptr);
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const std::size_t k = static_cast<std::size_t>(j) * nx + i;
                    const double f = c.f0[i] + spec.eval_f1(t, grid.x(i), g->node(n, i, j)) + (nonlocal ? Fd[i] : 0.0);
                    U[k] += dt * w * ey[j] * f;
                }
        };
        std::vector<double> U = next;
        add_cost_gradient(nt, 0.5, U);
        for (int n = nt - 1; n >= 0; --n) {
            const double t = grid.t(n);
            const MeasureView view(mu_traj.nu[n]);
            step_coeffs(spec, grid, n, view, noise != nullptr, c);
            const auto MT = adjoint_factor(c, grid);
            const double off = noise ? spec.eval_sigma0(t) * noise->dW[n] : 0.0;
            if (off != 0.0) {
                for (int j = 0; j < ny; ++j)
                    shift_field_adjoint(std::span<const double>(U.data() + static_cast<std::size_t>(j) * nx, nx),
                                        std::span<double>(shifted.data() + static_cast<std::size_t>(j) * nx, nx),
                                        grid.xg, off);
                U = shifted;
            }
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    double bij = c.b0[i];
                    const auto gv = g->node(n, i, j);
                    for (int k = 0; k < d; ++k) bij += c.beta[i * d + k] * gv[k];
                    b[static_cast<std::size_t>(j) * nx + i] = bij;
                }
            if (parallel)
                kernels::parallel::adjoint_step(U.data(), v.data(), cur.data(), b.data(), c.lam.data(), decay, L, MT);
            else
                kernels::serial::adjoint_step(U.data(), v.data(), cur.data(), b.data(), c.lam.data(), decay, L, MT);
            auto& dp = sol.d_plus[n];
            auto& dm = sol.d_minus[n];
            std::vector<double> P(N);
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const std::size_t k = static_cast<std::size_t>(j) * nx + i;
                    dp[k] = i + 1 < nx ? (v[k + 1] - v[k]) / dx : 0.0;
                    dm[k] = i > 0 ? (v[k] - v[k - 1]) / dx : 0.0;
                    P[k] = b[k] > 0.0 ? dp[k] : (b[k] < 0.0 ? dm[k] : 0.5 * (dp[k] + dm[k]));
                }
            nonlocal_terms(n, view, &P);
            const double w = n == 0 ? 0.5 : 1.0;
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const std::size_t k = static_cast<std::size_t>(j) * nx + i;
                    const double f = c.f0[i] + spec.eval_f1(t, grid.x(i), g->node(n, i, j)) + Fd[i];
                    cur[k] += dt * ey[j] * (Fb[i] + w * f);
                }
            if (noise && sol.has_level(n)) {
                auto& qn = sol.q[n / sol.store_every];
                for (int j = 0; j < ny; ++j)
                    centred_gradient(std::span<const double>(cur.data() + static_cast<std::size_t>(j) * nx, nx), dx,
                                     std::span<double>(qn.data() + static_cast<std::size_t>(j) * nx, nx));
                for (double& x : qn) x *= spec.eval_sigma0(t);
            }
            if (sol.has_level(n)) std::copy(cur.begin(), cur.end(), sol.at(n).begin());
            U = cur;
        }
        sol.control = *g;
        return sol;
    }

    // semilinear mode with the 1D fallback control
    const BSPDESolution& one = *u_1d;
    if (!(one.grid.xg == grid.xg) || one.grid.nt != nt || one.control.levels != nt + 1)
        throw Error(ErrorCode::GridMismatch, "1D solution does not match the grid");
    sol.control = FeedbackControl(nt + 1, nx, ny, d);
    std::vector<double> prev2;  // u^{n+2} for the extrapolated guess
    {
        const MeasureView view(mu_traj.nu[nt]);
        step_coeffs(spec, grid, nt, view, noise != nullptr, c);
        for (int j = 0; j < ny; ++j) {
            RowProblem P{&spec, grid.t(nt), grid.xg, dt, &c, ey[j], mu_traj.mu[nt].slice(j).data(),
                         one.control.data.data() + one.control.index(nt, 0), nullptr};
            std::vector<double> H(nx);
            row_hamiltonian(P, std::span<const double>(next.data() + static_cast<std::size_t>(j) * nx, nx), H,
                            &sol.control.at(nt, 0, j));
        }
    }
    std::vector<RowStats> stats(ny);
    for (int n = nt - 1; n >= 0; --n) {
        const double t = grid.t(n);
        const MeasureView view(mu_traj.nu[n]);
        step_coeffs(spec, grid, n, view, noise != nullptr, c);
        const auto MT = adjoint_factor(c, grid);
        const double off = noise ? spec.eval_sigma0(t) * noise->dW[n] : 0.0;
        for (int j = 0; j < ny; ++j) {
            std::span<const double> src(next.data() + static_cast<std::size_t>(j) * nx, nx);
            std::span<double> dst(shifted.data() + static_cast<std::size_t>(j) * nx, nx);
            if (off != 0.0)
                shift_field(src, dst, grid.xg, off);
            else
                std::copy(src.begin(), src.end(), dst.begin());
        }
        if (nonlocal) {
            for (int j = 0; j < ny; ++j)
                centred_gradient(std::span<const double>(shifted.data() + static_cast<std::size_t>(j) * nx, nx), dx,
                                 std::span<double>(grad.data() + static_cast<std::size_t>(j) * nx, nx));
        }
        nonlocal_terms(n, view, &grad);
        const double r = dt / dy;
        const double* fallback = one.control.data.data() + one.control.index(n, 0);
        const Density2D& mu = mu_traj.mu[n];
        auto do_row = [&](int j) {
            const std::size_t off_j = static_cast<std::size_t>(j) * nx;
            std::vector<double> rhs(nx);
            for (int i = 0; i < nx; ++i) {
                const double uj = shifted[off_j + i];
                const double up = j + 1 < ny ? shifted[off_j + nx + i] : decay * uj;
                rhs[i] = uj + r * c.lam[i] * (up - uj) + dt * ey[j] * (Fb[i] + Fd[i]);
            }
            std::span<double> w(cur.data() + off_j, nx);
            if (prev2.empty())
                std::copy(next.begin() + off_j, next.begin() + off_j + nx, w.begin());
            else
                for (int i = 0; i < nx; ++i) w[i] = 2.0 * next[off_j + i] - prev2[off_j + i];
            RowProblem P{&spec, t, grid.xg, dt, &c, ey[j], mu.slice(j).data(), fallback, &MT};
            stats[j] = solve_row(P, rhs, w, &sol.control.at(n, 0, j), opt.fp);
        };
        if (parallel) {
#pragma omp parallel for schedule(dynamic, 1)
            for (int j = 0; j < ny; ++j) do_row(j);
        } else {
            for (int j = 0; j < ny; ++j) do_row(j);
        }
        int iters = 0;
        for (const auto& st : stats) {
            merge_stats(sol, st);
            iters = std::max(iters, st.iterations);
            sol.fp_capped += st.capped;
        }
        sol.fp_iterations[n] = iters;
        if (noise && sol.has_level(n)) {
            auto& qn = sol.q[n / sol.store_every];
            for (int j = 0; j < ny; ++j)
                centred_gradient(std::span<const double>(shifted.data() + static_cast<std::size_t>(j) * nx, nx), dx,
                                 std::span<double>(qn.data() + static_cast<std::size_t>(j) * nx, nx));
            for (double& x : qn) x *= spec.eval_sigma0(t);
        }
        if (sol.has_level(n)) std::copy(cur.begin(), cur.end(), sol.at(n).begin());
        prev2.swap(next);
        next = cur;
    }
    return sol;
}

EnergyReport energy_report(const BSPDESolution& sol, std::span<const double> terminal) {
    EnergyReport r;
    const Grid& g = sol.grid;
    const int nx = g.nx();
    const double dx = g.dx();
    const double vol = sol.two_d ? dx * g.dy() : dx;
    const double dt_eff = g.dt() * sol.store_every;
    for (std::size_t s = 0; s < sol.u.size(); ++s) {
        const auto& u = sol.u[s];
        double n2 = 0.0, d2 = 0.0;
        const std::size_t rows = u.size() / nx;
        for (std::size_t row = 0; row < rows; ++row)
            for (int i = 0; i < nx; ++i) {
                const double v = u[row * nx + i];
                n2 += v * v;
                if (i + 1 < nx) {
                    const double dd = (u[row * nx + i + 1] - v) / dx;
                    d2 += dd * dd;
                }
            }
        r.sup_u2 = std::max(r.sup_u2, n2 * vol);
        if (static_cast<int>(s) + 1 < static_cast<int>(sol.u.size())) r.grad_sum += d2 * vol * dt_eff;
        if (!sol.q.empty() && s + 1 < sol.u.size()) {
            double q2 = 0.0;
            for (double v : sol.q[s]) q2 += v * v;
            r.q_sum += q2 * vol * dt_eff;
        }
    }
    for (double v : terminal) r.psi_norm2 += v * v;
    r.psi_norm2 *= vol;
    const double lhs = r.sup_u2 + r.grad_sum + r.q_sum;
    r.constant = lhs > 0.0 ? lhs / (1.0 + r.psi_norm2) : 0.0;
    return r;
}

std::vector<double> galerkin_heat_backward(const Grid& grid, double a, double lambda,
                                           std::span<const double> terminal, int modes) {
    const int nx = grid.nx();
    if (static_cast<int>(terminal.size()) != nx) throw Error(ErrorCode::GridMismatch, "terminal size");
    // cell-centred cosine basis on [x_min - dx/2, x_max + dx/2], exact for
    // the zero-flux finite-volume cells
    const double len = nx * grid.dx();
    const double x0 = grid.xg.x_min - 0.5 * grid.dx();
    std::vector<double> out(nx, 0.0);
    for (int k = 0; k < std::min(modes, nx); ++k) {
        const double kk = k * std::numbers::pi / len;
        double ck = 0.0, nrm = 0.0;
        for (int i = 0; i < nx; ++i) {
            const double phi = std::cos(kk * (grid.x(i) - x0));
            ck += terminal[i] * phi;
            nrm += phi * phi;
        }
        ck /= nrm;
        const double damp = std::exp(-(a * kk * kk + lambda) * grid.T);
        for (int i = 0; i < nx; ++i) out[i] += damp * ck * std::cos(kk * (grid.x(i) - x0));
    }
    return out;
}

}  // namespace mvk
