#pragma once

#include <span>
#include <vector>

namespace mvk::kernels {

/// Tridiagonal system with sub-diagonal a (a[0] unused), diagonal b and
/// super-diagonal c (c[n-1] unused).
struct Tridiag {
    std::vector<double> a, b, c;
    void resize(int n) {
        a.assign(n, 0.0);
        b.assign(n, 0.0);
        c.assign(n, 0.0);
    }
};

/// Precomputed Thomas elimination; one factor serves every y-slice.
class ThomasFactor {
public:
    ThomasFactor() = default;
    explicit ThomasFactor(const Tridiag& m);
    void solve(std::span<double> x) const;
    [[nodiscard]] int size() const { return static_cast<int>(inv_.size()); }

private:
    std::vector<double> a_, inv_, cp_;
};

/// M = I - r L with (L m)_i = a_{i+1} m_{i+1} - 2 a_i m_i + a_{i-1} m_{i-1}
/// under zero-flux ends (column sums of L vanish). `transpose` gives M^T,
/// i.e. v - r a (v_{i+1} - 2 v_i + v_{i-1}) with reflecting ends.
void diffusion_matrix(std::span<const double> a_coef, double r, bool transpose, Tridiag& out);

struct Layout {
    int nx = 0;
    int ny = 0;
    double dt = 0.0;
    double dx = 1.0;
    double dy = 1.0;
};

/// Explicit upwind flux divergence of b m in x with zero-flux ends, added
/// to `out` scaled by dt/dx.
void add_x_transport(std::span<const double> m, std::span<const double> b, double dt_dx,
                     std::span<double> out);

/// out_i += s * (b+_i D+v_i - b-_i D-v_i) with D+ = 0 at the right end and
/// D- = 0 at the left end. `s` is dt.
void add_x_adjoint(std::span<const double> v, std::span<const double> b, double dx, double s,
                   std::span<double> out);

// 2D kernels. Fields are y-slice major (index j * nx + i). `b` is the full
// drift field, `lam` the per-x intensity. The serial and OpenMP versions
// run the same per-slice code and return bit-identical results.
namespace serial {
/// out = M^{-1}(m + dt A m): upwind transport in x, upward transport in y
/// with no inflow at the bottom and no outflow at the top, then the
/// implicit diffusion solve.
void forward_step(const double* m, double* out, const double* b, const double* lam,
                  const Layout& L, const ThomasFactor& M);
/// v = M^{-T} u_next per slice, then u = v + dt A^T v with top ghost
/// decay * v_top. `v` receives the intermediate field.
void adjoint_step(const double* u_next, double* v, double* u, const double* b, const double* lam,
                  double ghost_decay, const Layout& L, const ThomasFactor& MT);
/// x = M^{-1} x per slice.
void solve_slices(double* x, const Layout& L, const ThomasFactor& M);
}  // namespace serial

namespace parallel {
void forward_step(const double* m, double* out, const double* b, const double* lam,
                  const Layout& L, const ThomasFactor& M);
void adjoint_step(const double* u_next, double* v, double* u, const double* b, const double* lam,
                  double ghost_decay, const Layout& L, const ThomasFactor& MT);
void solve_slices(double* x, const Layout& L, const ThomasFactor& M);
}  // namespace parallel

/// Number of OpenMP threads available (1 without OpenMP).
int max_threads();

}  // namespace mvk::kernels
