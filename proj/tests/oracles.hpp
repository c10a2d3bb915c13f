#pragma once

// Reference solutions used by the tests.

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

/// Markov-chain lattice dynamic programming for
///   min E[ int (q/2 x^2 + c/2 g^2) dt + qT/2 X_T^2 ],  dX = g dt + sigma dB,
/// g in [-box, box], on nx states of [x_lo, x_hi] with reflecting ends,
/// nt steps and ng control values.
struct LatticeDP {
    int nx = 50, nt = 50, ng = 101;
    double x_lo = -4.0, x_hi = 4.0, T = 1.0;
    double q = 1.0, c = 1.0, qT = 1.0, sigma = 1.0, box = 1.0;
    std::vector<std::vector<double>> V;  // V[n][i], n = 0..nt
    std::vector<std::vector<double>> g;  // g[n][i], n = 0..nt-1

    [[nodiscard]] double dx() const { return (x_hi - x_lo) / (nx - 1); }
    [[nodiscard]] double dt() const { return T / nt; }
    [[nodiscard]] double x(int i) const { return x_lo + i * dx(); }

    void solve() {
        const double h = dx(), k = dt();
        V.assign(nt + 1, std::vector<double>(nx));
        g.assign(nt, std::vector<double>(nx));
        for (int i = 0; i < nx; ++i) V[nt][i] = 0.5 * qT * x(i) * x(i);
        for (int n = nt - 1; n >= 0; --n) {
            for (int i = 0; i < nx; ++i) {
                const int up = std::min(i + 1, nx - 1), dn = std::max(i - 1, 0);
                double best = 1e300, arg = 0.0;
                for (int m = 0; m < ng; ++m) {
                    const double gv = -box + 2.0 * box * m / (ng - 1);
                    const double pd = 0.5 * sigma * sigma * k / (h * h);
                    // central chain when diffusion dominates, upwind otherwise
                    const bool central = sigma * sigma >= h * std::abs(gv);
                    const double pu = central ? pd + 0.5 * k * gv / h : pd + k * std::max(gv, 0.0) / h;
                    const double pl = central ? pd - 0.5 * k * gv / h : pd + k * std::max(-gv, 0.0) / h;
                    const double val = (0.5 * q * x(i) * x(i) + 0.5 * c * gv * gv) * k + pu * V[n + 1][up] +
                                       pl * V[n + 1][dn] + (1.0 - pu - pl) * V[n + 1][i];
                    if (val < best - 1e-15) {
                        best = val;
                        arg = gv;
                    }
                }
                V[n][i] = best;
                g[n][i] = arg;
            }
        }
    }

    /// Linear interpolation of V at time level n.
    [[nodiscard]] double value(int n, double xq) const {
        const double s = std::clamp((xq - x_lo) / dx(), 0.0, static_cast<double>(nx - 1));
        const int i = std::min(static_cast<int>(s), nx - 2);
        const double w = s - i;
        return (1.0 - w) * V[n][i] + w * V[n][i + 1];
    }
};

}  // namespace oracle
