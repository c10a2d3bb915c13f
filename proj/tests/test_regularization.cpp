#include <doctest.h>

#include <cmath>
#include <random>

#include "mvk/error.hpp"
#include "mvk/model.hpp"
#include "mvk/regularization.hpp"

using namespace mvk;

namespace {

std::vector<double> box_points(int m) {
    std::vector<double> g(m);
    for (int k = 0; k < m; ++k) g[k] = -1.0 + 2.0 * k / (m - 1);
    return g;
}

}  // namespace

TEST_CASE("envelope of a quadratic") {
    const auto g = box_points(2001);
    const double c = 1.0;
    std::vector<double> phi(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) phi[k] = 0.5 * c * g[k] * g[k];
    for (double n : {1.0, 4.0, 16.0}) {
        const auto env = inf_convolution(phi, g, n);
        // min_h c/2 h^2 + n (g - h)^2 = c n / (c + 2n) g^2, minimiser inside the box
        for (std::size_t k = 0; k < g.size(); k += 50)
            CHECK(std::abs(env[k] - c * n / (c + 2.0 * n) * g[k] * g[k]) <= 1e-5);
    }
}

TEST_CASE("envelope of the absolute value is Huber") {
    const auto g = box_points(2001);
    std::vector<double> phi(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) phi[k] = std::abs(g[k]);
    const double n = 2.0;
    const auto env = inf_convolution(phi, g, n);
    for (std::size_t k = 0; k < g.size(); k += 25) {
        const double a = std::abs(g[k]);
        const double huber = a >= 0.5 / n ? a - 0.25 / n : n * a * a;
        CHECK(std::abs(env[k] - huber) <= 1e-5);
    }
}

TEST_CASE("envelope is monotone in n and below the input") {
    const auto g = box_points(401);
    std::vector<double> phi(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) phi[k] = std::exp(g[k]) + (g[k] > 0.3 ? 2.0 * (g[k] - 0.3) : 0.0);
    std::vector<double> prev(g.size(), -1e300);
    for (double n : {1.0, 2.0, 4.0, 8.0, 16.0}) {
        const auto env = inf_convolution(phi, g, n);
        for (std::size_t k = 0; k < g.size(); ++k) {
            CHECK(env[k] <= phi[k] + 1e-15);
            CHECK(env[k] >= prev[k] - 1e-15);
        }
        prev = env;
    }
}

TEST_CASE("mollifier") {
    const double h = 1e-3;
    const int m = 2001;
    std::vector<double> x(m);
    for (int k = 0; k < m; ++k) x[k] = -1.0 + k * h;
    SUBCASE("affine functions are reproduced") {
        std::vector<double> f(m);
        for (int k = 0; k < m; ++k) f[k] = 3.0 - 2.0 * x[k];
        const auto out = mollify(f, h, 0.05);
        for (int k = 0; k < m; ++k) CHECK(std::abs(out[k] - f[k]) <= 1e-12);
    }
    SUBCASE("a step spreads over 2 eps") {
        std::vector<double> f(m);
        for (int k = 0; k < m; ++k) f[k] = x[k] > 0.0 ? 1.0 : 0.0;
        const double eps = 0.1;
        const auto out = mollify(f, h, eps);
        for (int k = 0; k < m; ++k) {
            if (x[k] < -eps - h) CHECK(out[k] == doctest::Approx(0.0));
            if (x[k] > eps + h) CHECK(out[k] == doctest::Approx(1.0));
        }
        CHECK(out[1000] == doctest::Approx(0.5).epsilon(0.02));
    }
    SUBCASE("second order on smooth functions") {
        std::vector<double> f(m);
        for (int k = 0; k < m; ++k) f[k] = std::cos(2.0 * x[k]);
        auto err = [&](double eps) {
            const auto out = mollify(f, h, eps);
            double e = 0.0;
            for (int k = 500; k <= 1500; ++k) e = std::max(e, std::abs(out[k] - f[k]));
            return e;
        };
        const double ratio = err(0.1) / err(0.05);
        CHECK(ratio >= 3.5);
        CHECK(ratio <= 4.5);
    }
    SUBCASE("radius below the grid") {
        std::vector<double> f(m, 1.0);
        try {
            (void)mollify(f, h, 1.5 * h);
            FAIL("no error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EpsBelowGrid);
        }
    }
}

TEST_CASE("approximating family") {
    const ModelSpec spec = validate_model(make_lq_killing());
    ApproxOptions ao;
    ao.g_points = 401;
    for (int n : {1, 2, 4, 8, 16}) {
        const ApproxFamily fam = build_approx_family(spec, n, ao);
        CAPTURE(n);
        CHECK_NOTHROW(validate_model(fam.spec));
        for (bool ok : fam.certified) CHECK(ok);
        // killing capped at n
        for (double x : {-50.0, -3.0, 0.5}) CHECK(fam.spec.eval_lambda(0.0, x) <= n + 1e-12);
        // strict convexity with modulus 1/n at x = 0
        std::mt19937_64 rng(n);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int k = 0; k < 200; ++k) {
            const double a = u(rng), b = u(rng);
            const double ga[1] = {a}, gb[1] = {b}, gm[1] = {0.5 * (a + b)};
            const double gap = 0.5 * (fam.spec.eval_f1(0.0, 0.0, ga) + fam.spec.eval_f1(0.0, 0.0, gb)) -
                               fam.spec.eval_f1(0.0, 0.0, gm);
            CHECK(gap >= (a - b) * (a - b) / (4.0 * n) - 1e-9);
        }
    }
}
