#include <doctest.h>

#include <cmath>
#include <functional>

#include "mvk/measures.hpp"
#include "mvk/rng.hpp"

using namespace mvk;

namespace {

XGrid xgrid(double lo, double hi, int n) { return XGrid{lo, (hi - lo) / (n - 1), n}; }

SubProb1D point_mass(const XGrid& g, double x, double m) {
    SubProb1D v(g);
    v.values[static_cast<std::size_t>(std::lround((x - g.x_min) / g.dx))] = m / g.dx;
    return v;
}

SubProb1D random_measure(const XGrid& g, CounterRng& rng, double mass) {
    SubProb1D v(g);
    double s = 0.0;
    for (double& x : v.values) s += (x = rng.uniform() * rng.uniform());
    for (double& x : v.values) x *= mass / (s * g.dx);
    return v;
}

// max over phi on the grid with |phi| <= 1 and |phi_k - phi_{k-1}| <= dx
// of sum (v1 - v2) phi dx, enumerating phi on the lattice of step dx.
double d0_brute(const SubProb1D& a, const SubProb1D& b) {
    const int n = a.grid.n;
    const double h = a.grid.dx;
    const int levels = static_cast<int>(std::lround(2.0 / h));
    std::vector<int> phi(n);
    double best = 0.0;
    std::function<void(int, double)> rec = [&](int k, double acc) {
        if (k == n) {
            best = std::max(best, acc);
            return;
        }
        for (int l = 0; l <= levels; ++l) {
            if (k > 0 && std::abs(l - phi[k - 1]) > 1) continue;
            phi[k] = l;
            rec(k + 1, acc + (a.values[k] - b.values[k]) * h * (-1.0 + l * h));
        }
    };
    rec(0, 0.0);
    return best;
}

}  // namespace

TEST_CASE("s_map weights rows by e^{-y}") {
    const XGrid xg = xgrid(-1, 1, 5);
    const YGrid yg{0.0, std::log(2.0), 3, 0};
    Density2D mu(xg, yg);
    mu.at(2, 0) = 1.0 / (xg.dx * yg.dy);
    SubProb1D nu = s_map(mu);
    CHECK(nu.mass() == doctest::Approx(1.0));
    CHECK(nu.values[2] * xg.dx == doctest::Approx(1.0));

    Density2D mu2(xg, yg);
    mu2.at(1, 1) = 1.0 / (xg.dx * yg.dy);
    CHECK(s_map(mu2).mass() == doctest::Approx(0.5));
}

TEST_CASE("s_map of a y-uniform density") {
    // mass(nu) = (1 - e^{-Y}) / Y mass(mu), up to the node quadrature in y
    const XGrid xg = xgrid(-2, 2, 9);
    const double Y = 3.0;
    const int ny = 3001;
    const YGrid yg{0.0, Y / ny, ny, 0};
    Density2D mu(xg, yg);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < xg.n; ++i) mu.at(i, j) = (1.0 + 0.5 * std::sin(xg.x(i))) / Y;
    const double expect = (1.0 - std::exp(-Y)) / Y * mu.mass();
    CHECK(s_map(mu).mass() == doctest::Approx(expect).epsilon(1e-3));
}

TEST_CASE("d_p examples") {
    const XGrid g = xgrid(-2, 2, 41);
    const SubProb1D a = point_mass(g, 0.0, 1.0);
    CHECK(metric_dp(a, a, 1) == 0.0);
    CHECK(metric_dp(a, point_mass(g, 0.0, 0.5), 1) == doctest::Approx(0.5));
    CHECK(metric_dp(a, point_mass(g, 1.0, 1.0), 1) == doctest::Approx(1.0));
    CHECK(metric_dp(a, point_mass(g, 1.0, 1.0), 2) == doctest::Approx(1.0));
}

TEST_CASE("d_0 examples") {
    const XGrid g = xgrid(-3, 3, 61);
    const SubProb1D a = point_mass(g, 0.0, 1.0);
    CHECK(metric_d0(a, a) == 0.0);
    CHECK(metric_d0(a, point_mass(g, 2.0, 1.0)) == doctest::Approx(2.0));
    CHECK(metric_d0(a, point_mass(g, 3.0, 1.0)) == doctest::Approx(2.0));
    // short distances see the Lipschitz bound
    CHECK(metric_d0(a, point_mass(g, 0.5, 1.0)) == doctest::Approx(0.5));
}

TEST_CASE("d_0 matches brute force over grid test functions") {
    CounterRng rng(11, 0);
    const XGrid g = xgrid(0.0, 2.0, 5);
    for (int r = 0; r < 20; ++r) {
        const SubProb1D a = random_measure(g, rng, 0.3 + 0.7 * rng.uniform());
        const SubProb1D b = random_measure(g, rng, 0.3 + 0.7 * rng.uniform());
        CHECK(metric_d0(a, b) == doctest::Approx(d0_brute(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("d_0 <= d_1") {
    CounterRng rng(12, 0);
    const XGrid g = xgrid(-3, 3, 31);
    for (int r = 0; r < 100; ++r) {
        const SubProb1D a = random_measure(g, rng, rng.uniform());
        const SubProb1D b = random_measure(g, rng, rng.uniform());
        CHECK(metric_d0(a, b) <= metric_dp(a, b, 1) + 1e-12);
    }
}

TEST_CASE("discretize_measure") {
    const XGrid g = xgrid(-4, 4, 801);
    SUBCASE("point mass at a node") {
        const SubProb1D v = point_mass(g, 0.5, 0.7);
        const DiscretizedMeasure d = discretize_measure(v, 2, 1);
        // nodes -2, -1.5, ..., 2: 0.5 is node 5
        CHECK(d.weights[5] == doctest::Approx(0.7));
        double rest = 0.0;
        for (std::size_t i = 0; i < d.weights.size(); ++i)
            if (i != 5) rest += d.weights[i];
        CHECK(rest == doctest::Approx(0.0));
        const auto peak = std::max_element(d.reconstruction.values.begin(), d.reconstruction.values.end());
        CHECK(g.x(static_cast<int>(peak - d.reconstruction.values.begin())) == doctest::Approx(0.5));
        CHECK(d.reconstruction.mass() == doctest::Approx(0.7));
    }
    SUBCASE("support outside [-n, n]") {
        const SubProb1D v = point_mass(g, 3.5, 1.0);
        const DiscretizedMeasure d = discretize_measure(v, 2, 2);
        for (double w : d.weights) CHECK(w == 0.0);
    }
    SUBCASE("d_0 error at most 2^{-k} mass") {
        CounterRng rng(13, 0);
        for (int r = 0; r < 10; ++r) {
            const SubProb1D v = truncate_measure(random_measure(g, rng, rng.uniform()), 3);
            for (int k : {1, 2, 3}) {
                const DiscretizedMeasure d = discretize_measure(v, 3, k);
                CHECK(metric_d0(d.reconstruction, v) <= std::ldexp(1.0, -k) * v.mass() + 1e-12);
            }
        }
    }
}

TEST_CASE("truncate_measure") {
    const XGrid g = xgrid(-6, 6, 241);
    SUBCASE("support inside [-1, 1] is untouched") {
        SubProb1D v(g);
        for (int i = 0; i < g.n; ++i)
            if (std::abs(g.x(i)) <= 1.0) v.values[i] = 0.3;
        const SubProb1D t = truncate_measure(v, 3);
        CHECK(t.values == v.values);
    }
    SUBCASE("mass far outside disappears") {
        const SubProb1D t = truncate_measure(point_mass(g, 5.0, 1.0), 3);
        CHECK(t.mass() == 0.0);
    }
    SUBCASE("d_2 bound from the truncation coupling") {
        // The coupling gives W_2^2 <= A = int x^2 (1 - kappa_n) dv and a mass
        // gap B = int (1 - kappa_n) dv, so d_2 = W_2 + B <= sqrt(A) + B. The
        // sum A + B alone misses the cross term: a unit mass at x = 5 with
        // n = 3 has d_2^2 = 36 against A + B = 26.
        const SubProb1D far = point_mass(g, 5.0, 1.0);
        const double d_far = metric_dp(truncate_measure(far, 3), far, 2);
        CHECK(d_far == doctest::Approx(6.0));
        CounterRng rng(14, 0);
        for (int n : {1, 2, 3, 4}) {
            const SubProb1D v = random_measure(g, rng, 0.9);
            const SubProb1D t = truncate_measure(v, n);
            double A = 0.0, B = 0.0;
            for (int i = 0; i < g.n; ++i) {
                const double x = g.x(i), w = (1.0 - cutoff(x, n)) * v.values[i] * g.dx;
                A += x * x * w;
                B += w;
            }
            CHECK(std::abs(t.mass() - v.mass()) == doctest::Approx(B));
            const double d2 = metric_dp(t, v, 2);
            CHECK(d2 - B <= std::sqrt(A) + 1e-12);
            CHECK(d2 <= std::sqrt(A) + B + 1e-12);
        }
    }
}

TEST_CASE("cutoff equals one inside [-(n-1), n-1]") {
    for (double x : {-2.0, -0.3, 0.0, 1.9, 2.0}) CHECK(cutoff(x, 3) == 1.0);
    CHECK(cutoff(3.0, 3) == 0.0);
    CHECK(cutoff(2.5, 3) > 0.0);
    CHECK(cutoff(2.5, 3) < 1.0);
}
