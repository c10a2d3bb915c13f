#include <doctest.h>

#include <cmath>

#include "mvk/error.hpp"
#include "mvk/grid.hpp"
#include "mvk/model.hpp"
#include "mvk/rng.hpp"

using namespace mvk;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("LQ with killing validates") {
    ValidationReport rep;
    const ModelSpec s = validate_model(make_lq_killing(), &rep);
    CHECK(s.dim_g == 1);
    CHECK(s.eval_lambda(0.3, -1.0) == 1.0);
    CHECK(s.eval_lambda(0.3, 1.0) == 0.0);
    CHECK(rep.warnings.empty());
}

TEST_CASE("degenerate diffusion is rejected") {
    ModelSpec s = make_lq_killing();
    s.sigma = [](double, double) { return 0.0; };
    CHECK(code_of([&] { validate_model(s); }) == ErrorCode::NondegeneracyViolation);
}

TEST_CASE("negative intensity is rejected") {
    ModelSpec s = make_lq_killing();
    s.lambda = [](double, double) { return -1.0; };
    CHECK(code_of([&] { validate_model(s); }) == ErrorCode::NegativeIntensity);
}

TEST_CASE("nonconvex control cost is rejected") {
    ModelSpec s = make_lq_killing();
    s.f1 = [](double, double, std::span<const double> g) { return -g[0] * g[0]; };
    s.f1_quadratic.reset();
    CHECK(code_of([&] { validate_model(s); }) == ErrorCode::NonconvexControlCost);
}

TEST_CASE("drift must be affine in the control") {
    ModelSpec s = make_lq_killing();
    s.b1_factor = nullptr;
    s.b1 = [](double, double, std::span<const double> g) { return g[0] * g[0]; };
    CHECK(code_of([&] { validate_model(s); }) == ErrorCode::NonlinearDrift);
}

TEST_CASE("general affine b1 is split into factor and offset") {
    ModelSpec s = make_lq_killing();
    s.b1_factor = nullptr;
    s.b1 = [](double, double x, std::span<const double> g) { return 2.0 * g[0] + x; };
    const ModelSpec v = validate_model(s);
    CHECK(v.beta(0.0, 0.7, 0) == doctest::Approx(2.0));
    const std::vector<double> g{0.25};
    CHECK(v.eval_b1(0.0, 0.7, g) == doctest::Approx(0.5));
}

TEST_CASE("build_grid spacing") {
    const Grid g = build_grid(-5, 5, 11, 2, 5, 10, 0.0, 1.0);
    CHECK(g.dx() == doctest::Approx(1.0));
    CHECK(g.dy() == doctest::Approx(0.5));
    CHECK(g.dt() == doctest::Approx(0.1));
    CHECK(g.yg.n_ext == 0);
    CHECK(g.y(0) == 0.0);
}

TEST_CASE("build_grid extension below zero") {
    const Grid g = build_grid(-5, 5, 11, 2, 5, 10, -0.5, 1.0);
    CHECK(g.yg.n_ext == 1);
    CHECK(g.y(0) == doctest::Approx(-0.5));
    CHECK(g.y(g.yg.j_zero()) == doctest::Approx(0.0));
    CHECK(g.yg.y_max() == doctest::Approx(2.0));
}

TEST_CASE("build_grid rejects reversed ranges") {
    CHECK(code_of([] { build_grid(5, -5, 11, 2, 5, 10); }) == ErrorCode::DegenerateRange);
    CHECK(code_of([] { build_grid(-5, 5, 1, 2, 5, 10); }) == ErrorCode::DegenerateRange);
}

TEST_CASE("refine halves every step") {
    const Grid g = refine(build_grid(-4, 4, 81, 6, 31, 100, -1.0), 1);
    CHECK(g.nx() == 161);
    CHECK(g.dx() == doctest::Approx(0.05));
    CHECK(g.yg.n_ext == 10);
    CHECK(g.nt == 200);
}

TEST_CASE("validated control cost passes midpoint convexity") {
    const ModelSpec s = validate_model(make_lq_killing());
    CounterRng rng(3, 1);
    for (int k = 0; k < 1000; ++k) {
        const double t = rng.uniform(), x = -5.0 + 10.0 * rng.uniform();
        const double a = -1.0 + 2.0 * rng.uniform(), b = -1.0 + 2.0 * rng.uniform(), m = 0.5 * (a + b);
        const double fa = s.eval_f1(t, x, std::span<const double>(&a, 1));
        const double fb = s.eval_f1(t, x, std::span<const double>(&b, 1));
        const double fm = s.eval_f1(t, x, std::span<const double>(&m, 1));
        CHECK(fm <= 0.5 * fa + 0.5 * fb + 1e-14);
    }
}

TEST_CASE("initial law on the grid") {
    const ModelSpec s = validate_model(make_lq_killing());
    const Grid g = build_grid(-4, 4, 161, 6, 61, 10);
    const Density2D mu = discretize_initial(s, g);
    // Gaussian in x, exponential in y: nearly all mass lies on the grid
    CHECK(mu.mass() == doctest::Approx(1.0).epsilon(1e-6));
    // E[e^{-Lambda_0}] = 1 / (1 + zeta)
    CHECK(initial_subprob(s, g).mass() == doctest::Approx(1.0 / 1.5).epsilon(1e-6));
}

TEST_CASE("counter RNG streams are reproducible") {
    CounterRng a(7, 3), b(7, 3), c(7, 4);
    for (int k = 0; k < 10; ++k) {
        const double u = a.uniform();
        CHECK(u == b.uniform());
        CHECK(u != c.uniform());
    }
}
