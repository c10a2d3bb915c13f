#include "mvk/kernels.hpp"

#include <algorithm>
#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mvk::kernels {

ThomasFactor::ThomasFactor(const Tridiag& m) {
    const std::size_t n = m.b.size();
    a_ = m.a;
    inv_.resize(n);
    cp_.resize(n);
    double denom = m.b[0];
    inv_[0] = 1.0 / denom;
    cp_[0] = n > 1 ? m.c[0] * inv_[0] : 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        denom = m.b[i] - m.a[i] * cp_[i - 1];
        inv_[i] = 1.0 / denom;
        cp_[i] = i + 1 < n ? m.c[i] * inv_[i] : 0.0;
    }
}

void ThomasFactor::solve(std::span<double> x) const {
    const std::size_t n = inv_.size();
    x[0] *= inv_[0];
    for (std::size_t i = 1; i < n; ++i) x[i] = (x[i] - a_[i] * x[i - 1]) * inv_[i];
    for (std::size_t i = n - 1; i-- > 0;) x[i] -= cp_[i] * x[i + 1];
}

void diffusion_matrix(std::span<const double> a, double r, bool transpose, Tridiag& out) {
    const int n = static_cast<int>(a.size());
    out.resize(n);
    for (int i = 0; i < n; ++i) {
        const int nb = (i > 0) + (i < n - 1);
        out.b[i] = 1.0 + r * nb * a[i];
        if (transpose) {
            if (i > 0) out.a[i] = -r * a[i];
            if (i < n - 1) out.c[i] = -r * a[i];
        } else {
            if (i > 0) out.a[i] = -r * a[i - 1];
            if (i < n - 1) out.c[i] = -r * a[i + 1];
        }
    }
}

void add_x_transport(std::span<const double> m, std::span<const double> b, double dt_dx,
                     std::span<double> out) {
    const std::size_t n = m.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double bl = b[i], br = b[i + 1];
        const double flux = (bl > 0.0 ? bl * m[i] : 0.0) + (br < 0.0 ? br * m[i + 1] : 0.0);
        out[i] -= dt_dx * flux;
        out[i + 1] += dt_dx * flux;
    }
}

void add_x_adjoint(std::span<const double> v, std::span<const double> b, double dx, double s,
                   std::span<double> out) {
    const std::size_t n = v.size();
    const double inv = s / dx;
    for (std::size_t i = 0; i < n; ++i) {
        const double bi = b[i];
        if (bi > 0.0 && i + 1 < n)
            out[i] += inv * bi * (v[i + 1] - v[i]);
        else if (bi < 0.0 && i > 0)
            out[i] += inv * bi * (v[i] - v[i - 1]);
    }
}

namespace {

inline void forward_slice(int j, const double* m, double* out, const double* b, const double* lam,
                          const Layout& L, const ThomasFactor& M) {
    const int nx = L.nx;
    const std::size_t off = static_cast<std::size_t>(j) * nx;
    std::span<const double> mj(m + off, nx);
    std::span<double> oj(out + off, nx);
    std::copy(mj.begin(), mj.end(), oj.begin());
    add_x_transport(mj, std::span<const double>(b + off, nx), L.dt / L.dx, oj);
    const double r = L.dt / L.dy;
    if (j < L.ny - 1)
        for (int i = 0; i < nx; ++i) oj[i] -= r * lam[i] * mj[i];
    if (j > 0) {
        const double* below = m + off - nx;
        for (int i = 0; i < nx; ++i) oj[i] += r * lam[i] * below[i];
    }
    M.solve(oj);
}

inline void adjoint_slice(int j, const double* v, double* u, const double* b, const double* lam,
                          double decay, const Layout& L) {
    const int nx = L.nx;
    const std::size_t off = static_cast<std::size_t>(j) * nx;
    std::span<const double> vj(v + off, nx);
    std::span<double> uj(u + off, nx);
    std::copy(vj.begin(), vj.end(), uj.begin());
    add_x_adjoint(vj, std::span<const double>(b + off, nx), L.dx, L.dt, uj);
    const double r = L.dt / L.dy;
    if (j < L.ny - 1) {
        const double* above = v + off + nx;
        for (int i = 0; i < nx; ++i) uj[i] += r * lam[i] * (above[i] - vj[i]);
    } else {
        for (int i = 0; i < nx; ++i) uj[i] += r * lam[i] * (decay - 1.0) * vj[i];
    }
}

}  // namespace

namespace serial {

void forward_step(const double* m, double* out, const double* b, const double* lam, const Layout& L,
                  const ThomasFactor& M) {
    for (int j = 0; j < L.ny; ++j) forward_slice(j, m, out, b, lam, L, M);
}

void solve_slices(double* x, const Layout& L, const ThomasFactor& M) {
    for (int j = 0; j < L.ny; ++j) M.solve({x + static_cast<std::size_t>(j) * L.nx, static_cast<std::size_t>(L.nx)});
}

void adjoint_step(const double* u_next, double* v, double* u, const double* b, const double* lam,
                  double decay, const Layout& L, const ThomasFactor& MT) {
    std::copy(u_next, u_next + static_cast<std::size_t>(L.nx) * L.ny, v);
    solve_slices(v, L, MT);
    for (int j = 0; j < L.ny; ++j) adjoint_slice(j, v, u, b, lam, decay, L);
}

}  // namespace serial

namespace parallel {

void forward_step(const double* m, double* out, const double* b, const double* lam, const Layout& L,
                  const ThomasFactor& M) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < L.ny; ++j) forward_slice(j, m, out, b, lam, L, M);
}

void solve_slices(double* x, const Layout& L, const ThomasFactor& M) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < L.ny; ++j)
        M.solve({x + static_cast<std::size_t>(j) * L.nx, static_cast<std::size_t>(L.nx)});
}

void adjoint_step(const double* u_next, double* v, double* u, const double* b, const double* lam,
                  double decay, const Layout& L, const ThomasFactor& MT) {
    const std::size_t n = static_cast<std::size_t>(L.nx) * L.ny;
#pragma omp parallel for schedule(static)
    for (std::size_t k = 0; k < n; ++k) v[k] = u_next[k];
    solve_slices(v, L, MT);
#pragma omp parallel for schedule(static)
    for (int j = 0; j < L.ny; ++j) adjoint_slice(j, v, u, b, lam, decay, L);
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace mvk::kernels
