#include "mvk/forward.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mvk/error.hpp"
#include "mvk/kernels.hpp"
#include "mvk/measures.hpp"

namespace mvk {

std::vector<double> CommonNoisePath::path() const {
    std::vector<double> w(dW.size() + 1, 0.0);
    for (std::size_t k = 0; k < dW.size(); ++k) w[k + 1] = w[k] + dW[k];
    return w;
}

CommonNoisePath CommonNoisePath::generate(int nt, double dt, std::uint64_t seed) {
    CommonNoisePath p;
    p.seed = seed;
    p.dt = dt;
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    p.dW.resize(nt);
    const double s = std::sqrt(dt);
    for (double& d : p.dW) d = s * n01(eng);
    return p;
}

double diffusion_coef(const ModelSpec& spec, double t, double x, bool pathwise) {
    const double s = spec.sigma(t, x);
    const double s0 = spec.eval_sigma0(t);
    return pathwise ? 0.5 * s * s : 0.5 * (s * s + s0 * s0);
}

FeedbackControl zero_control(const ModelSpec& spec, const Grid& grid, bool y_dependent) {
    FeedbackControl g(grid.nt + 1, grid.nx(), y_dependent ? grid.ny() : 1, spec.dim_g);
    for (std::size_t k = 0; k < g.data.size(); ++k) {
        const int c = static_cast<int>(k % spec.dim_g);
        g.data[k] = std::clamp(0.0, spec.g_min[c], spec.g_max[c]);
    }
    return g;
}

void shift_density(std::span<const double> in, std::span<double> out, const XGrid& g, double offset) {
    const int n = g.n;
    const double s = offset / g.dx;
    const double fl = std::floor(s);
    const int k = static_cast<int>(fl);
    const double w = s - fl;
    // out_i = (1 - w) in_{i-k} + w in_{i-k-1}
    for (int i = 0; i < n; ++i) {
        const int a = i - k, b = i - k - 1;
        double v = 0.0;
        if (a >= 0 && a < n) v += (1.0 - w) * in[a];
        if (b >= 0 && b < n) v += w * in[b];
        out[i] = v;
    }
}

SubProb1D shift_density(const SubProb1D& v, double offset) {
    SubProb1D out(v.grid);
    shift_density(v.values, out.values, v.grid, offset);
    return out;
}

Density2D shift_density(const Density2D& v, double offset) {
    Density2D out(v.xg, v.yg);
    for (int j = 0; j < v.yg.n; ++j) shift_density(v.slice(j), out.slice(j), v.xg, offset);
    return out;
}

void shift_field(std::span<const double> in, std::span<double> out, const XGrid& g, double offset) {
    const int n = g.n;
    for (int i = 0; i < n; ++i) {
        double s = i + offset / g.dx;
        s = std::clamp(s, 0.0, static_cast<double>(n - 1));
        const int a = std::min(static_cast<int>(s), n - 2);
        const double w = s - a;
        out[i] = (1.0 - w) * in[a] + w * in[a + 1];
    }
}

namespace {

void check_control(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g, bool allow_y) {
    if (g.levels != grid.nt + 1 || g.nx != grid.nx() || g.dim != spec.dim_g ||
        (g.ny != 1 && (!allow_y || g.ny != grid.ny())))
        throw Error(ErrorCode::GridMismatch, "feedback control does not match the grid");
    for (std::size_t k = 0; k < g.data.size(); ++k) {
        const int c = static_cast<int>(k % g.dim);
        const double v = g.data[k];
        if (!std::isfinite(v)) throw Error(ErrorCode::NonfiniteInput, "control value not finite");
        if (v < spec.g_min[c] - 1e-12 || v > spec.g_max[c] + 1e-12) {
            std::ostringstream os;
            os << "control value " << v << " outside [" << spec.g_min[c] << ", " << spec.g_max[c] << "]";
            throw Error(ErrorCode::ControlOutOfBox, os.str());
        }
    }
}

double l2_sq(std::span<const double> v, double vol) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s * vol;
}

double dx_sq(std::span<const double> v, int nx, double dx, double vol) {
    double s = 0.0;
    const std::size_t rows = v.size() / nx;
    for (std::size_t r = 0; r < rows; ++r)
        for (int i = 0; i + 1 < nx; ++i) {
            const double d = (v[r * nx + i + 1] - v[r * nx + i]) / dx;
            s += d * d;
        }
    return s * vol;
}

void check_cfl(double cfl, int n) {
    if (cfl > 1.0 + 1e-12) {
        std::ostringstream os;
        os << "CFL number " << cfl << " > 1 at step " << n;
        throw Error(ErrorCode::CFLViolation, os.str());
    }
}

}  // namespace

ForwardTrajectory2D solve_forward_2d(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                     const CommonNoisePath* noise, const ForwardOptions& opt) {
    return solve_forward_2d(spec, grid, g, discretize_initial(spec, grid), noise, opt);
}

ForwardTrajectory2D solve_forward_2d(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                     const Density2D& initial, const CommonNoisePath* noise,
                                     const ForwardOptions& opt) {
    check_control(spec, grid, g, true);
    if (!(initial.xg == grid.xg) || !(initial.yg == grid.yg))
        throw Error(ErrorCode::GridMismatch, "initial density grid differs");
    if (noise && static_cast<int>(noise->dW.size()) != grid.nt)
        throw Error(ErrorCode::GridMismatch, "noise path length differs from nt");
    const int nx = grid.nx(), ny = grid.ny(), nt = grid.nt;
    const double dt = grid.dt(), dx = grid.dx(), dy = grid.dy();
    const double vol = dx * dy;
    const bool pathwise = noise != nullptr;

    ForwardTrajectory2D tr;
    tr.grid = grid;
    if (noise) tr.noise = *noise;
    tr.mu.reserve(nt + 1);
    tr.mu.push_back(initial);
    tr.nu.reserve(nt + 1);

    kernels::Layout L{nx, ny, dt, dx, dy};
    std::vector<double> b(static_cast<std::size_t>(nx) * ny), lam(nx), a(nx), bmax(nx);
    std::vector<double> beta(static_cast<std::size_t>(nx) * spec.dim_g);
    kernels::Tridiag M;
    const double e0 = l2_sq(initial.values, vol);
    double dissip = 0.0, cmax = 0.0;

    for (int n = 0; n <= nt; ++n) {
        const Density2D& cur = tr.mu.back();
        tr.nu.push_back(s_map(cur));
        tr.mass.push_back(cur.mass());
        for (double v : cur.values) tr.min_value = std::min(tr.min_value, v);
        const double e = l2_sq(cur.values, vol);
        if (e0 > 0.0) cmax = std::max(cmax, (e + dissip) / e0);
        if (n == nt) break;

        const double t = grid.t(n);
        const MeasureView view(tr.nu.back());
        double cfl = 0.0;
        for (int i = 0; i < nx; ++i) {
            const double x = grid.x(i);
            const double b0 = spec.eval_b0(t, x, view);
            lam[i] = spec.eval_lambda(t, x);
            for (int k = 0; k < spec.dim_g; ++k) beta[i * spec.dim_g + k] = spec.beta(t, x, k);
            bmax[i] = std::abs(b0) + spec.max_b1(t, x);
            cfl = std::max(cfl, dt * bmax[i] / dx + dt * lam[i] / dy);
            for (int j = 0; j < ny; ++j) {
                const auto gv = g.node(n, i, j);
                double bij = b0;
                for (int k = 0; k < spec.dim_g; ++k) bij += beta[i * spec.dim_g + k] * gv[k];
                b[static_cast<std::size_t>(j) * nx + i] = bij;
            }
        }
        check_cfl(cfl, n);
        tr.max_cfl = std::max(tr.max_cfl, cfl);
        for (int i = 0; i < nx; ++i) a[i] = diffusion_coef(spec, grid.t(n + 1), grid.x(i), pathwise);
        kernels::diffusion_matrix(a, dt / (dx * dx), false, M);
        const kernels::ThomasFactor F(M);

        Density2D next(grid.xg, grid.yg);
        if (opt.exec == Exec::Serial)
            kernels::serial::forward_step(cur.values.data(), next.values.data(), b.data(), lam.data(), L, F);
        else
            kernels::parallel::forward_step(cur.values.data(), next.values.data(), b.data(), lam.data(), L, F);
        dissip += dt * dx_sq(next.values, nx, dx, vol);
        if (noise) {
            const double off = spec.eval_sigma0(t) * noise->dW[n];
            if (off != 0.0) next = shift_density(next, off);
        }
        tr.mu.push_back(std::move(next));
    }
    tr.energy_constant = cmax;
    return tr;
}

ForwardTrajectory1D solve_forward_1d(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                     const CommonNoisePath* noise, const ForwardOptions& opt) {
    return solve_forward_1d(spec, grid, g, initial_subprob(spec, grid), noise, opt);
}

ForwardTrajectory1D solve_forward_1d(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                     const SubProb1D& initial, const CommonNoisePath* noise,
                                     const ForwardOptions&) {
    check_control(spec, grid, g, false);
    if (!(initial.grid == grid.xg)) throw Error(ErrorCode::GridMismatch, "initial measure grid differs");
    if (noise && static_cast<int>(noise->dW.size()) != grid.nt)
        throw Error(ErrorCode::GridMismatch, "noise path length differs from nt");
    const int nx = grid.nx(), nt = grid.nt;
    const double dt = grid.dt(), dx = grid.dx();
    const bool pathwise = noise != nullptr;

    ForwardTrajectory1D tr;
    tr.grid = grid;
    if (noise) tr.noise = *noise;
    tr.nu.reserve(nt + 1);
    tr.nu.push_back(initial);
    std::vector<double> b(nx), a(nx), decay(nx);
    kernels::Tridiag M;
    const double e0 = l2_sq(initial.values, dx);
    double dissip = 0.0, cmax = 0.0;

    for (int n = 0; n <= nt; ++n) {
        const SubProb1D& cur = tr.nu.back();
        tr.mass.push_back(cur.mass());
        for (double v : cur.values) tr.min_value = std::min(tr.min_value, v);
        if (e0 > 0.0) cmax = std::max(cmax, (l2_sq(cur.values, dx) + dissip) / e0);
        if (n == nt) break;

        const double t = grid.t(n);
        const MeasureView view(cur);
        double cfl = 0.0;
        for (int i = 0; i < nx; ++i) {
            const double x = grid.x(i);
            const double b0 = spec.eval_b0(t, x, view);
            b[i] = b0 + spec.eval_b1(t, x, g.node(n, i));
            cfl = std::max(cfl, dt * (std::abs(b0) + spec.max_b1(t, x)) / dx);
            decay[i] = std::exp(-spec.eval_lambda(t, x) * dt);
            a[i] = diffusion_coef(spec, grid.t(n + 1), x, pathwise);
        }
        check_cfl(cfl, n);
        tr.max_cfl = std::max(tr.max_cfl, cfl);
        kernels::diffusion_matrix(a, dt / (dx * dx), false, M);
        const kernels::ThomasFactor F(M);

        SubProb1D next = cur;
        kernels::add_x_transport(cur.values, b, dt / dx, next.values);
        F.solve(next.values);
        for (int i = 0; i < nx; ++i) next.values[i] *= decay[i];
        dissip += dt * dx_sq(next.values, nx, dx, dx);
        if (noise) {
            const double off = spec.eval_sigma0(t) * noise->dW[n];
            if (off != 0.0) next = shift_density(next, off);
        }
        tr.nu.push_back(std::move(next));
    }
    tr.energy_constant = cmax;
    return tr;
}

}  // namespace mvk
