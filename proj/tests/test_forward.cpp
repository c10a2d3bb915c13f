#include <doctest.h>

#include <cmath>

#include "mvk/error.hpp"
#include "mvk/forward.hpp"
#include "mvk/measures.hpp"
#include "mvk/model.hpp"

using namespace mvk;

namespace {

double variance(const SubProb1D& v) {
    const double m = v.mass(), m1 = v.moment(1) / m;
    return v.moment(2) / m - m1 * m1;
}

FeedbackControl wavy_control(const ModelSpec& spec, const Grid& grid) {
    FeedbackControl g = zero_control(spec, grid);
    for (int n = 0; n <= grid.nt; ++n)
        for (int i = 0; i < grid.nx(); ++i) g.at(n, i) = 0.8 * std::sin(grid.x(i) + 3.0 * grid.t(n));
    return g;
}

}  // namespace

TEST_CASE("heat kernel variance") {
    LQParams p;
    p.kappa = 0.0;
    p.m0 = 0.0;
    p.s0 = 0.1;
    p.zeta = 0.0;
    p.T = 0.5;
    const ModelSpec spec = validate_model(make_lq_killing(p));
    const Grid grid = build_grid(-5, 5, 400, 2, 20, 100, 0.0, 0.5);
    const auto tr = solve_forward_2d(spec, grid, zero_control(spec, grid));
    const double expect = p.s0 * p.s0 + 0.5;
    CHECK(std::abs(variance(tr.nu.back()) - expect) <= 0.02 * expect);
}

TEST_CASE("mean intensity follows the characteristics") {
    LQParams p;
    p.sigma = 0.1;
    p.zeta = 0.0;
    const double kappa = 1.0;
    const ModelSpec spec = validate_model(make_constant_lambda(kappa, p));
    const Grid grid = build_grid(-3, 3, 61, 3, 61, 100);
    const auto tr = solve_forward_2d(spec, grid, zero_control(spec, grid));
    for (int n : {25, 50, 100}) CHECK(tr.mu[n].mean_y() == doctest::Approx(kappa * grid.t(n)).epsilon(0.01));
}

TEST_CASE("2D mass is conserved and densities stay nonnegative") {
    const ModelSpec spec = validate_model(make_lq_killing());
    const Grid grid = build_grid(-4, 4, 81, 6, 31, 100);
    const auto tr = solve_forward_2d(spec, grid, wavy_control(spec, grid));
    for (double m : tr.mass) CHECK(m == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(tr.min_value >= -1e-12);
    for (std::size_t n = 1; n < tr.nu.size(); ++n) CHECK(tr.nu[n].mass() <= tr.nu[n - 1].mass() + 1e-14);
}

TEST_CASE("1D mass decays exactly under constant killing") {
    LQParams p;
    p.zeta = 0.0;
    const double kappa = 0.7;
    const ModelSpec spec = validate_model(make_constant_lambda(kappa, p));
    const Grid grid = build_grid(-4, 4, 81, 6, 31, 100);
    const auto tr = solve_forward_1d(spec, grid, zero_control(spec, grid));
    const double m0 = tr.mass[0];
    CHECK(m0 == doctest::Approx(1.0).epsilon(1e-6));
    for (int n = 0; n <= grid.nt; ++n) CHECK(std::abs(tr.mass[n] - m0 * std::exp(-kappa * grid.t(n))) <= 1e-6);
}

TEST_CASE("1D mass is constant without killing") {
    LQParams p;
    p.kappa = 0.0;
    const ModelSpec spec = validate_model(make_lq_killing(p));
    const Grid grid = build_grid(-4, 4, 81, 6, 31, 100);
    const auto tr = solve_forward_1d(spec, grid, wavy_control(spec, grid));
    for (double m : tr.mass) CHECK(m == doctest::Approx(tr.mass[0]).epsilon(1e-12));
}

TEST_CASE("1D forward against S of the 2D forward under refinement") {
    const ModelSpec spec = validate_model(make_lq_killing());
    double prev = 0.0;
    for (int lv = 0; lv < 3; ++lv) {
        const Grid grid = refine(build_grid(-4, 4, 41, 6, 16, 50), lv);
        const FeedbackControl g = wavy_control(spec, grid);
        const auto one = solve_forward_1d(spec, grid, g);
        const auto two = solve_forward_2d(spec, grid, g);
        double d = 0.0;
        for (int n = 0; n <= grid.nt; n += grid.nt / 5) d = std::max(d, metric_dp(one.nu[n], two.nu[n], 1));
        // frozen level-0 value 0.0389; first order in (dx + dy + dt)
        const double h = grid.dx() + grid.dy() + grid.dt();
        CHECK(d <= 0.2 * h);
        if (lv > 0) CHECK(d < 0.7 * prev);
        prev = d;
    }
}

TEST_CASE("serial and parallel forward agree") {
    const ModelSpec spec = validate_model(make_lq_killing());
    const Grid grid = build_grid(-4, 4, 81, 6, 31, 50);
    const FeedbackControl g = wavy_control(spec, grid);
    const auto a = solve_forward_2d(spec, grid, g, nullptr, ForwardOptions{Exec::Serial});
    const auto b = solve_forward_2d(spec, grid, g, nullptr, ForwardOptions{Exec::Parallel});
    CHECK(a.mu.back().values == b.mu.back().values);
}

TEST_CASE("CFL violation is reported") {
    const ModelSpec spec = validate_model(make_lq_killing());
    const Grid grid = build_grid(-4, 4, 81, 1, 201, 10);
    CHECK_THROWS_AS(solve_forward_2d(spec, grid, zero_control(spec, grid)), Error);
}

TEST_CASE("control on the wrong grid") {
    const ModelSpec spec = validate_model(make_lq_killing());
    const Grid grid = build_grid(-4, 4, 81, 6, 31, 50);
    const Grid other = build_grid(-4, 4, 41, 6, 31, 50);
    CHECK_THROWS_AS(solve_forward_1d(spec, grid, zero_control(spec, other)), Error);
}

TEST_CASE("shift_density") {
    const XGrid xg{-6.0, 0.02, 601};
    SubProb1D v(xg);
    for (int i = 0; i < xg.n; ++i) v.values[i] = std::exp(-0.5 * xg.x(i) * xg.x(i)) / std::sqrt(2.0 * M_PI);
    SUBCASE("offset 0") { CHECK(shift_density(v, 0.0).values == v.values); }
    SUBCASE("there and back") {
        const double h = 0.137;
        const SubProb1D w = shift_density(shift_density(v, h), -h);
        double err = 0.0;
        for (int i = 0; i < xg.n; ++i) err = std::max(err, std::abs(w.values[i] - v.values[i]));
        // linear interpolation twice: error below dx^2 ||rho''||
        CHECK(err <= xg.dx * xg.dx * 0.4);
    }
    SUBCASE("mean moves by the offset") {
        for (double h : {0.3, -0.77, 0.011}) {
            const SubProb1D w = shift_density(v, h);
            CHECK(std::abs(w.moment(1) / w.mass() - h) <= 0.5 * xg.dx);
            // only the Gaussian tail pushed past the grid edge may leave
            const double tail = 0.5 * std::erfc((xg.x_max() - std::abs(h) - xg.dx) / std::sqrt(2.0));
            CHECK(v.mass() - w.mass() <= tail);
            CHECK(w.mass() <= v.mass() + 1e-15);
        }
    }
}

TEST_CASE("common noise shifts the whole population") {
    LQParams p;
    p.sigma0 = 0.5;
    const ModelSpec spec = validate_model(make_lq_killing(p));
    const Grid grid = build_grid(-6, 6, 121, 6, 31, 100);
    const auto noise = CommonNoisePath::generate(grid.nt, grid.dt(), 5);
    const auto a = solve_forward_1d(spec, grid, zero_control(spec, grid), &noise);
    const auto b = solve_forward_1d(spec, grid, zero_control(spec, grid), &noise);
    CHECK(a.nu.back().values == b.nu.back().values);
    const auto path = noise.path();
    const auto c = solve_forward_1d(spec, grid, zero_control(spec, grid));
    const double shift = a.nu.back().moment(1) / a.nu.back().mass() - c.nu.back().moment(1) / c.nu.back().mass();
    CHECK(shift == doctest::Approx(p.sigma0 * path.back()).epsilon(0.05));
}
