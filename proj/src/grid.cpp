#include "mvk/grid.hpp"

#include <cmath>
#include <sstream>

#include "mvk/error.hpp"

namespace mvk {

Grid build_grid(double x_min, double x_max, int nx, double y_max, int ny, int nt,
                double extension_ell, double T) {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::DegenerateRange, msg); };
    if (!std::isfinite(x_min) || !std::isfinite(x_max) || !std::isfinite(y_max) ||
        !std::isfinite(extension_ell) || !std::isfinite(T)) {
        fail("non-finite grid parameter");
    }
    if (!(x_min < x_max)) {
        std::ostringstream os;
        os << "x range [" << x_min << ", " << x_max << "] is empty";
        fail(os.str());
    }
    if (!(y_max > 0.0)) fail("y_max must be positive");
    if (nx < 2 || ny < 2 || nt < 2) fail("nx, ny and nt must be at least 2");
    if (extension_ell > 0.0) fail("extension must be <= 0");
    if (!(T > 0.0)) fail("horizon must be positive");

    Grid g;
    g.xg.x_min = x_min;
    g.xg.dx = (x_max - x_min) / (nx - 1);
    g.xg.n = nx;
    g.yg.dy = y_max / (ny - 1);
    g.yg.n_ext = extension_ell < 0.0
                     ? static_cast<int>(std::ceil(-extension_ell / g.yg.dy - 1e-12))
                     : 0;
    g.yg.y_min = -g.yg.n_ext * g.yg.dy;
    g.yg.n = ny + g.yg.n_ext;
    g.nt = nt;
    g.T = T;
    return g;
}

Grid refine(const Grid& grid, int levels) {
    if (levels < 0) throw Error(ErrorCode::InvalidArgument, "refine levels must be >= 0");
    Grid g = grid;
    for (int l = 0; l < levels; ++l) {
        g.xg.dx *= 0.5;
        g.xg.n = 2 * (g.xg.n - 1) + 1;
        g.yg.dy *= 0.5;
        g.yg.n = 2 * (g.yg.n - 1) + 1;
        g.yg.n_ext *= 2;
        g.nt *= 2;
    }
    return g;
}

}  // namespace mvk
