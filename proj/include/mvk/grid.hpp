#pragma once

#include <cstddef>

namespace mvk {

/// Uniform node grid along x. Node i sits at x_min + i*dx and owns the
/// finite-volume cell [x_i - dx/2, x_i + dx/2].
struct XGrid {
    double x_min = 0.0;
    double dx = 1.0;
    int n = 0;

    [[nodiscard]] double x(int i) const { return x_min + i * dx; }
    [[nodiscard]] double x_max() const { return x_min + (n - 1) * dx; }
    bool operator==(const XGrid&) const = default;
};

/// Uniform node grid along the intensity variable y. The first `n_ext`
/// nodes lie strictly below zero (the extension l < 0 of the half-plane).
struct YGrid {
    double y_min = 0.0;
    double dy = 1.0;
    int n = 0;
    int n_ext = 0;

    [[nodiscard]] double y(int j) const { return y_min + j * dy; }
    [[nodiscard]] double y_max() const { return y_min + (n - 1) * dy; }
    /// Index of the node at y = 0.
    [[nodiscard]] int j_zero() const { return n_ext; }
    bool operator==(const YGrid&) const = default;
};

struct Grid {
    XGrid xg;
    YGrid yg;
    int nt = 0;
    double T = 1.0;

    [[nodiscard]] int nx() const { return xg.n; }
    [[nodiscard]] int ny() const { return yg.n; }
    [[nodiscard]] double dx() const { return xg.dx; }
    [[nodiscard]] double dy() const { return yg.dy; }
    [[nodiscard]] double dt() const { return T / nt; }
    [[nodiscard]] double x(int i) const { return xg.x(i); }
    [[nodiscard]] double y(int j) const { return yg.y(j); }
    [[nodiscard]] double t(int n) const { return n == nt ? T : n * dt(); }
    bool operator==(const Grid&) const = default;
};

/// Uniform grid on [x_min, x_max] x [0, y_max] with nt steps on [0, T].
/// A negative `extension_ell` prepends nodes below y = 0 at the same
/// spacing until the extension is covered. Throws DegenerateRange.
Grid build_grid(double x_min, double x_max, int nx, double y_max, int ny, int nt,
                double extension_ell = 0.0, double T = 1.0);

/// Halves dx, dy and dt `levels` times (node counts go n -> 2(n-1)+1).
Grid refine(const Grid& grid, int levels);

}  // namespace mvk
