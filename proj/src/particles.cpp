#include "mvk/particles.hpp"

#include <algorithm>
#include <cmath>

#include "mvk/error.hpp"
#include "mvk/rng.hpp"

namespace mvk {

const ParticleSnapshot* ParticleTrajectory::at_level(int n) const {
    for (const auto& s : snapshots)
        if (s.level == n) return &s;
    return nullptr;
}

void smooth3(std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n < 2) return;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double l = i > 0 ? v[i - 1] : v[i];
        const double r = i + 1 < n ? v[i + 1] : v[i];
        out[i] = 0.25 * l + 0.5 * v[i] + 0.25 * r;
    }
    v.swap(out);
}

namespace {

int cell_of(double x, const XGrid& g) {
    const double s = (x - g.x_min) / g.dx + 0.5;
    if (!(s > 0.0)) return 0;
    return std::min(static_cast<int>(s), g.n - 1);
}

// Control at (level n, x, y) by linear interpolation, held constant outside.
void control_at(const FeedbackControl& g, const Grid& grid, int n, double x, double y, std::span<double> out) {
    const int nx = grid.nx();
    double s = std::clamp((x - grid.xg.x_min) / grid.dx(), 0.0, static_cast<double>(nx - 1));
    const int i = std::min(static_cast<int>(s), nx - 2);
    const double wx = s - i;
    if (g.ny == 1) {
        const auto a = g.node(n, i), b = g.node(n, i + 1);
        for (int k = 0; k < g.dim; ++k) out[k] = (1.0 - wx) * a[k] + wx * b[k];
        return;
    }
    const int ny = grid.ny();
    double r = std::clamp((y - grid.yg.y_min) / grid.dy(), 0.0, static_cast<double>(ny - 1));
    const int j = std::min(static_cast<int>(r), ny - 2);
    const double wy = r - j;
    for (int k = 0; k < g.dim; ++k) {
        const double v00 = g.at(n, i, j, k), v10 = g.at(n, i + 1, j, k);
        const double v01 = g.at(n, i, j + 1, k), v11 = g.at(n, i + 1, j + 1, k);
        out[k] = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v10) + wy * ((1.0 - wx) * v01 + wx * v11);
    }
}

SubProb1D soft_histogram(const std::vector<double>& X, const std::vector<double>& L, const XGrid& grid) {
    SubProb1D h(grid);
    const double scale = 1.0 / (static_cast<double>(X.size()) * grid.dx);
    for (std::size_t p = 0; p < X.size(); ++p) h.values[cell_of(X[p], grid)] += std::exp(-L[p]) * scale;
    return h;
}

}  // namespace

ParticleTrajectory simulate_particles(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                      const ParticleOptions& opt) {
    if (!opt.seed) throw Error(ErrorCode::SeedRequired, "particle simulation needs an explicit seed");
    if (g.levels != grid.nt + 1 || g.nx != grid.nx() || (g.ny != 1 && g.ny != grid.ny()))
        throw Error(ErrorCode::GridMismatch, "control does not match the grid");
    if (opt.nu && static_cast<int>(opt.nu->size()) != grid.nt + 1)
        throw Error(ErrorCode::GridMismatch, "measure flow length differs from nt + 1");
    if (opt.noise && static_cast<int>(opt.noise->dW.size()) != grid.nt)
        throw Error(ErrorCode::GridMismatch, "noise path length differs from nt");
    if (!spec.initial_sampler) throw Error(ErrorCode::InvalidArgument, "model has no initial sampler");

    const std::size_t N = opt.N;
    const int nt = grid.nt, d = spec.dim_g;
    const double dt = grid.dt(), sdt = std::sqrt(dt);
    const std::uint64_t seed = *opt.seed;
    const bool empirical = opt.coupling == Coupling::Empirical || opt.nu == nullptr;

    ParticleTrajectory tr;
    tr.grid = grid;
    tr.N = N;
    tr.seed = seed;
    std::vector<double> X(N), L(N);
    tr.theta.resize(N);
    std::vector<CounterRng> rng;
    rng.reserve(N);
    for (std::size_t p = 0; p < N; ++p) {
        rng.emplace_back(seed, p);
        const auto [x, y] = spec.initial_sampler(rng[p]);
        X[p] = x;
        L[p] = std::max(y, 0.0);
        tr.theta[p] = rng[p].exponential();
    }
    tr.running_hard.assign(N, 0.0);
    tr.running_soft.assign(N, 0.0);

    auto snapshot = [&](int n) {
        ParticleSnapshot s;
        s.level = n;
        s.X = X;
        s.Lambda = L;
        s.alive.resize(N);
        for (std::size_t p = 0; p < N; ++p) s.alive[p] = L[p] < tr.theta[p];
        tr.snapshots.push_back(std::move(s));
    };

    for (int n = 0; n <= nt; ++n) {
        const double t = grid.t(n);
        double alive = 0.0, wsum = 0.0;
        for (std::size_t p = 0; p < N; ++p) {
            alive += L[p] < tr.theta[p];
            wsum += std::exp(-L[p]);
        }
        tr.alive_fraction.push_back(alive / static_cast<double>(N));
        tr.mean_weight.push_back(wsum / static_cast<double>(N));
        if (n == 0 || n == nt || (opt.snapshot_every > 0 && n % opt.snapshot_every == 0)) snapshot(n);

        if (empirical) {
            SubProb1D h = soft_histogram(X, L, grid.xg);
            smooth3(h.values);
            tr.coupling_nu.push_back(std::move(h));
        } else {
            tr.coupling_nu.push_back((*opt.nu)[n]);
        }
        const MeasureView view(tr.coupling_nu.back());
        const double wt = (n == 0 || n == nt) ? 0.5 * dt : dt;
        const double common = (n < nt && opt.noise) ? spec.eval_sigma0(t) * opt.noise->dW[n] : 0.0;

#pragma omp parallel
        {
            std::vector<double> gv(d);
#pragma omp for schedule(static)
            for (std::size_t p = 0; p < N; ++p) {
                const double x = X[p];
                control_at(g, grid, n, x, L[p], gv);
                const double f = spec.eval_f0(t, x, view) + spec.eval_f1(t, x, gv);
                tr.running_soft[p] += wt * std::exp(-L[p]) * f;
                if (L[p] < tr.theta[p]) tr.running_hard[p] += wt * f;
                if (n == nt) continue;
                const double b = spec.eval_b0(t, x, view) + spec.eval_b1(t, x, gv);
                X[p] = x + b * dt + spec.sigma(t, x) * sdt * rng[p].normal() + common;
                L[p] += spec.eval_lambda(t, x) * dt;
            }
        }
    }
    return tr;
}

SubProb1D empirical_subprob(const ParticleSnapshot& s, KillMode mode, const XGrid& grid, std::size_t lo,
                            std::size_t hi) {
    hi = std::min(hi, s.X.size());
    SubProb1D h(grid);
    if (hi <= lo) return h;
    const double scale = 1.0 / (static_cast<double>(hi - lo) * grid.dx);
    for (std::size_t p = lo; p < hi; ++p) {
        const double w = mode == KillMode::Hard ? (s.alive[p] ? 1.0 : 0.0) : std::exp(-s.Lambda[p]);
        if (w != 0.0) h.values[cell_of(s.X[p], grid)] += w * scale;
    }
    return h;
}

McEstimate estimate_cost_mc(const ModelSpec& spec, const ParticleTrajectory& traj, KillMode mode, int batches) {
    McEstimate est;
    const std::size_t N = traj.N;
    if (N == 0) return est;
    batches = std::max(1, std::min<int>(batches, static_cast<int>(N)));
    const auto& run = mode == KillMode::Hard ? traj.running_hard : traj.running_soft;
    const ParticleSnapshot& fin = traj.final();
    for (int b = 0; b < batches; ++b) {
        const std::size_t lo = N * b / batches, hi = N * (b + 1) / batches;
        double s = 0.0;
        for (std::size_t p = lo; p < hi; ++p) s += run[p];
        s /= static_cast<double>(hi - lo);
        const SubProb1D nu_T = empirical_subprob(fin, mode, traj.grid.xg, lo, hi);
        est.batches.push_back(s + spec.eval_psi(MeasureView(nu_T)));
    }
    double mean = 0.0;
    for (double v : est.batches) mean += v;
    mean /= batches;
    // the full-ensemble estimate uses psi on the pooled measure
    double run_all = 0.0;
    for (double v : run) run_all += v;
    est.J = run_all / static_cast<double>(N) +
            spec.eval_psi(MeasureView(empirical_subprob(fin, mode, traj.grid.xg)));
    if (batches > 1) {
        double var = 0.0;
        for (double v : est.batches) var += (v - mean) * (v - mean);
        var /= batches - 1;
        // Student t quantile, 0.975
        static constexpr double tq[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262,
                                        2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093};
        const int dof = batches - 1;
        const double q = dof <= 19 ? tq[dof - 1] : 1.96;
        est.half_width = q * std::sqrt(var / batches);
    }
    return est;
}

}  // namespace mvk
