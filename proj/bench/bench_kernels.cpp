// Serial reference against the OpenMP kernels on a few grid sizes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "mvk/kernels.hpp"
#include "mvk/mfc.hpp"

using namespace mvk;
using clk = std::chrono::steady_clock;

namespace {

template <class F>
double best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = clk::now();
        f();
        best = std::min(best, std::chrono::duration<double>(clk::now() - t0).count());
    }
    return best;
}

void row(const char* what, int nx, int ny, double ts, double tp, double diff) {
    std::printf("%-14s %5d x %-5d  serial %9.3f ms  parallel %9.3f ms  speedup %5.2f  max|diff| %.1e\n", what, nx,
                ny, 1e3 * ts, 1e3 * tp, ts / tp, diff);
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
    return d;
}

}  // namespace

int main() {
    std::printf("threads: %d\n", kernels::max_threads());
    for (int s : {1, 2, 4}) {
        const int nx = 200 * s, ny = 40 * s, reps = 5;
        const std::size_t N = static_cast<std::size_t>(nx) * ny;
        kernels::Layout L{nx, ny, 1.0 / (200 * s), 8.0 / (nx - 1), 2.0 / (ny - 1)};
        std::vector<double> m(N), b(N), lam(nx, 1.0), a(nx, 0.5);
        for (std::size_t k = 0; k < N; ++k) {
            m[k] = std::exp(-0.001 * static_cast<double>(k % nx));
            b[k] = 0.5 * std::sin(0.01 * static_cast<double>(k));
        }
        kernels::Tridiag M, MT;
        kernels::diffusion_matrix(a, L.dt / (L.dx * L.dx), false, M);
        kernels::diffusion_matrix(a, L.dt / (L.dx * L.dx), true, MT);
        const kernels::ThomasFactor F(M), FT(MT);

        std::vector<double> os(N), op(N);
        const double fs = best_of(reps, [&] { kernels::serial::forward_step(m.data(), os.data(), b.data(), lam.data(), L, F); });
        const double fp = best_of(reps, [&] { kernels::parallel::forward_step(m.data(), op.data(), b.data(), lam.data(), L, F); });
        row("forward_step", nx, ny, fs, fp, max_diff(os, op));

        std::vector<double> vs(N), vp(N);
        const double as = best_of(reps, [&] {
            kernels::serial::adjoint_step(m.data(), vs.data(), os.data(), b.data(), lam.data(), std::exp(-L.dy), L, FT);
        });
        const double ap = best_of(reps, [&] {
            kernels::parallel::adjoint_step(m.data(), vp.data(), op.data(), b.data(), lam.data(), std::exp(-L.dy), L, FT);
        });
        row("adjoint_step", nx, ny, as, ap, max_diff(os, op));

        os = m;
        op = m;
        const double ss = best_of(1, [&] { kernels::serial::solve_slices(os.data(), L, F); });
        const double sp = best_of(1, [&] { kernels::parallel::solve_slices(op.data(), L, F); });
        row("solve_slices", nx, ny, ss, sp, max_diff(os, op));
    }

    // semilinear 2D backward: rows run in parallel
    const auto spec = validate_model(make_lq_killing());
    const Grid grid = build_grid(-4.0, 4.0, 200, 2.0, 40, 200, 0.0, 1.0);
    const auto g = zero_control(spec, grid);
    BackwardOptions ser, par;
    ser.exec = Exec::Serial;
    SeparabilityReport rs, rp;
    const double bs = best_of(1, [&] { rs = separability_check(spec, grid, g, ser); });
    const double bp = best_of(1, [&] { rp = separability_check(spec, grid, g, par); });
    row("backward_2d", grid.nx(), grid.ny(), bs, bp, std::abs(rs.gap - rp.gap));
    return 0;
}
