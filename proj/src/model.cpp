#include "mvk/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mvk/error.hpp"

namespace mvk {

double ModelSpec::eval_b1(double t, double x, std::span<const double> g) const {
    double s = 0.0;
    for (int k = 0; k < dim_g; ++k) s += beta(t, x, k) * g[k];
    return s;
}

void ModelSpec::eval_grad_f1(double t, double x, std::span<const double> g, std::span<double> out) const {
    if (grad_f1) {
        grad_f1(t, x, g, out);
        return;
    }
    if (f1_quadratic) {
        for (int k = 0; k < dim_g; ++k) out[k] = *f1_quadratic * g[k];
        return;
    }
    std::vector<double> h(g.begin(), g.end());
    for (int k = 0; k < dim_g; ++k) {
        const double e = 1e-6 * std::max(1.0, std::abs(g[k]));
        h[k] = g[k] + e;
        const double fp = eval_f1(t, x, h);
        h[k] = g[k] - e;
        const double fm = eval_f1(t, x, h);
        h[k] = g[k];
        out[k] = (fp - fm) / (2.0 * e);
    }
}

bool ModelSpec::in_box(std::span<const double> g, double tol) const {
    for (int k = 0; k < dim_g; ++k)
        if (g[k] < g_min[k] - tol || g[k] > g_max[k] + tol) return false;
    return true;
}

double ModelSpec::max_b1(double t, double x) const {
    double s = 0.0;
    for (int k = 0; k < dim_g; ++k) {
        const double b = beta(t, x, k);
        s += std::max(std::abs(b * g_min[k]), std::abs(b * g_max[k]));
    }
    return s;
}

namespace {

std::string at_point(double t, double x) {
    std::ostringstream os;
    os << " at (t, x) = (" << t << ", " << x << ")";
    return os.str();
}

}  // namespace

ModelSpec validate_model(const ModelSpec& input, ValidationReport* report, unsigned long long seed) {
    ModelSpec spec = input;
    auto warn = [&](const std::string& w) {
        if (report) report->warnings.push_back(w);
    };
    const int d = spec.dim_g;
    if (d < 1) throw Error(ErrorCode::InvalidArgument, "dim_g must be >= 1");
    if (static_cast<int>(spec.g_min.size()) != d || static_cast<int>(spec.g_max.size()) != d)
        throw Error(ErrorCode::InvalidArgument, "control box dimension differs from dim_g");
    for (int k = 0; k < d; ++k)
        if (!(spec.g_min[k] <= spec.g_max[k]))
            throw Error(ErrorCode::InvalidArgument, "control box bounds are not ordered");
    if (!(spec.T > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
    if (!spec.sigma) throw Error(ErrorCode::NondegeneracyViolation, "sigma is missing");

    CounterRng rng(seed, 0);
    auto draw_t = [&] { return spec.T * rng.uniform(); };
    auto draw_x = [&] { return spec.x_lo + (spec.x_hi - spec.x_lo) * rng.uniform(); };
    auto draw_g = [&](std::vector<double>& g) {
        for (int k = 0; k < d; ++k) g[k] = spec.g_min[k] + (spec.g_max[k] - spec.g_min[k]) * rng.uniform();
    };

    // b1 given in general form: check additivity, then read off beta.
    if (spec.b1) {
        std::vector<double> g(d), h(d), gh(d), zero(d, 0.0);
        for (int s = 0; s < 1000; ++s) {
            const double t = draw_t(), x = draw_x();
            draw_g(g);
            draw_g(h);
            for (int k = 0; k < d; ++k) gh[k] = g[k] + h[k];
            const double lhs = spec.b1(t, x, gh);
            const double rhs = spec.b1(t, x, g) + spec.b1(t, x, h) - spec.b1(t, x, zero);
            const double scale = 1.0 + std::abs(lhs) + std::abs(rhs);
            if (!(std::abs(lhs - rhs) <= 1e-9 * scale))
                throw Error(ErrorCode::NonlinearDrift, "b1 is not additive in g" + at_point(t, x));
        }
        auto b1 = spec.b1;
        auto b0 = spec.b0;
        spec.b1_factor = [b1, d](double t, double x, int k) {
            std::vector<double> e(d, 0.0), z(d, 0.0);
            e[k] = 1.0;
            return b1(t, x, e) - b1(t, x, z);
        };
        // An affine offset b1(t, x, 0) belongs to the uncontrolled drift.
        spec.b0 = [b1, b0, d](double t, double x, const MeasureView& nu) {
            std::vector<double> z(d, 0.0);
            return (b0 ? b0(t, x, nu) : 0.0) + b1(t, x, z);
        };
        spec.b1 = nullptr;
    }

    bool warned_lambda_pos = false, warned_lambda_neg = false;
    for (int s = 0; s < 1000; ++s) {
        const double t = draw_t(), x = draw_x();
        const double sg = spec.sigma(t, x);
        if (!std::isfinite(sg) || !(sg * sg >= spec.nondegeneracy_c))
            throw Error(ErrorCode::NondegeneracyViolation, "sigma^2 below c" + at_point(t, x));
        const double s0 = spec.eval_sigma0(t);
        if (!std::isfinite(s0)) throw Error(ErrorCode::NonfiniteInput, "sigma0 not finite" + at_point(t, x));
        const double lam = spec.eval_lambda(t, x);
        if (!std::isfinite(lam)) throw Error(ErrorCode::NonfiniteInput, "lambda not finite" + at_point(t, x));
        if (lam < 0.0) throw Error(ErrorCode::NegativeIntensity, "lambda < 0" + at_point(t, x));
        if (x >= 0.0 && lam > 0.0 && !warned_lambda_pos) {
            warn("lambda is positive for some x >= 0");
            warned_lambda_pos = true;
        }
        if (x < 0.0 && !(lam > 0.0) && !warned_lambda_neg) {
            warn("lambda vanishes for some x < 0");
            warned_lambda_neg = true;
        }
    }
    // also probe the region x < 0 even if the window misses it
    for (int s = 0; s < 100; ++s) {
        const double t = draw_t(), x = -1e-3 - 10.0 * rng.uniform();
        if (spec.eval_lambda(t, x) < 0.0) throw Error(ErrorCode::NegativeIntensity, "lambda < 0" + at_point(t, x));
    }

    if (spec.f1) {
        std::vector<double> g(d), h(d), m(d);
        for (int s = 0; s < 1000; ++s) {
            const double t = draw_t(), x = draw_x();
            draw_g(g);
            draw_g(h);
            for (int k = 0; k < d; ++k) m[k] = 0.5 * (g[k] + h[k]);
            const double fg = spec.f1(t, x, g), fh = spec.f1(t, x, h), fm = spec.f1(t, x, m);
            if (!std::isfinite(fg) || !std::isfinite(fh) || !std::isfinite(fm))
                throw Error(ErrorCode::NonfiniteInput, "f1 not finite" + at_point(t, x));
            const double tol = 1e-10 * (1.0 + std::abs(fg) + std::abs(fh));
            if (fm > 0.5 * fg + 0.5 * fh + tol)
                throw Error(ErrorCode::NonconvexControlCost, "f1 fails midpoint convexity" + at_point(t, x));
        }
    }

    if (spec.initial_density) {
        for (int s = 0; s < 200; ++s) {
            const double x = draw_x();
            const double y = 5.0 * rng.uniform();
            if (spec.initial_density(x, y) < 0.0) {
                warn("initial density negative somewhere");
                break;
            }
        }
        for (int s = 0; s < 50; ++s) {
            const double x = draw_x();
            if (spec.initial_density(x, -0.01 - rng.uniform()) != 0.0) {
                warn("initial density has support below y = 0");
                break;
            }
        }
    }
    return spec;
}

ModelSpec make_lq_killing(const LQParams& p) {
    ModelSpec s;
    s.name = p.kill_everywhere ? "constant_lambda" : "lq_killing";
    s.dim_g = 1;
    s.g_min = {-p.box};
    s.g_max = {p.box};
    s.T = p.T;
    s.b1_factor = [](double, double, int) { return 1.0; };
    const double sig = p.sigma, sig0 = p.sigma0;
    s.sigma = [sig](double, double) { return sig; };
    if (sig0 != 0.0) s.sigma0 = [sig0](double) { return sig0; };
    const double kappa = p.kappa;
    if (p.kill_everywhere)
        s.lambda = [kappa](double, double) { return kappa; };
    else
        s.lambda = [kappa](double, double x) { return x < 0.0 ? kappa : 0.0; };

    if (p.alpha != 0.0) {
        const double a = p.alpha;
        s.b0 = [a](double, double x, const MeasureView& nu) { return a * (nu.first_moment() - x); };
        s.Db0 = [a](double, double, const MeasureView&, double xp) { return a * xp; };
    }
    const double q = p.q, gam = p.gamma;
    if (q != 0.0 || gam != 0.0) {
        s.f0 = [q, gam](double, double x, const MeasureView& nu) {
            const double d = x - nu.first_moment();
            return 0.5 * q * x * x + 0.5 * gam * d * d;
        };
    }
    if (gam != 0.0) {
        s.Df0 = [gam](double, double x, const MeasureView& nu, double xp) {
            return -gam * (x - nu.first_moment()) * xp;
        };
    }
    const double c = p.c;
    s.f1 = [c](double, double, std::span<const double> g) { return 0.5 * c * g[0] * g[0]; };
    s.grad_f1 = [c](double, double, std::span<const double> g, std::span<double> out) { out[0] = c * g[0]; };
    s.f1_quadratic = c;
    s.f1_autonomous = true;

    const double qT = p.q_T, xT = p.x_T;
    if (qT != 0.0) {
        s.psi = [qT, xT](const MeasureView& nu) {
            return 0.5 * qT * (nu.second_moment() - 2.0 * xT * nu.first_moment() + xT * xT * nu.mass());
        };
        s.Dpsi = [qT, xT](const MeasureView&, double x) { return 0.5 * qT * (x - xT) * (x - xT); };
    }

    const double m0 = p.m0, s0 = p.s0, zeta = p.zeta;
    s.initial_density = [m0, s0, zeta](double x, double y) {
        if (y < -1e-12) return 0.0;
        const double z = (x - m0) / s0;
        const double gx = std::exp(-0.5 * z * z) / (s0 * std::sqrt(2.0 * std::numbers::pi));
        if (zeta > 0.0) return gx * std::exp(-y / zeta) / zeta;
        return std::abs(y) < 1e-12 ? gx : 0.0;
    };
    s.initial_sampler = [m0, s0, zeta](CounterRng& r) {
        const double x = m0 + s0 * r.normal();
        const double y = zeta > 0.0 ? zeta * r.exponential() : 0.0;
        return std::pair<double, double>{x, y};
    };
    s.nondegeneracy_c = 0.5 * sig * sig;
    s.x_lo = m0 - 5.0;
    s.x_hi = m0 + 5.0;
    return s;
}

ModelSpec make_constant_lambda(double kappa, const LQParams& p) {
    LQParams q = p;
    q.kappa = kappa;
    q.kill_everywhere = true;
    return make_lq_killing(q);
}

namespace {

// Composite Simpson rule with an even number of panels.
template <class F>
double simpson(F&& f, double a, double b, int panels) {
    if (!(b > a)) return 0.0;
    const double h = (b - a) / panels;
    double s = f(a) + f(b);
    for (int k = 1; k < panels; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
    return s * h / 3.0;
}

constexpr double kTail = 40.0;  // y integration range above the top node

}  // namespace

Density2D discretize_initial(const ModelSpec& spec, const Grid& grid) {
    if (!spec.initial_density) throw Error(ErrorCode::InvalidArgument, "initial density missing");
    Density2D mu(grid.xg, grid.yg);
    const double dy = grid.dy();
    const int j0 = grid.yg.j_zero(), ny = grid.ny();
    // cell averages in y over [y_j - dy/2, y_j + dy/2] cut at 0; the top
    // cell also takes the mass above the grid
    double total = 0.0;
    for (int i = 0; i < grid.nx(); ++i) {
        const double x = grid.x(i);
        auto rho = [&](double y) { return std::max(0.0, spec.initial_density(x, y)); };
        for (int j = j0; j < ny; ++j) {
            const double a = std::max(grid.y(j) - 0.5 * dy, 0.0);
            const double b = j + 1 < ny ? grid.y(j) + 0.5 * dy : grid.y(j) + kTail;
            const double m = simpson(rho, a, b, j + 1 < ny ? 16 : 4000) / dy;
            mu.at(i, j) = m;
            total += m;
        }
    }
    if (!(total > 0.0)) {
        // a law concentrated on y = 0: point values on the y = 0 row
        for (int i = 0; i < grid.nx(); ++i) {
            const double v = std::max(0.0, spec.initial_density(grid.x(i), 0.0));
            mu.at(i, j0) = v;
            total += v;
        }
    }
    total *= grid.dx() * dy;
    if (!(total > 0.0)) throw Error(ErrorCode::InvalidArgument, "initial density has no mass on the grid");
    for (double& v : mu.values) v /= total;
    return mu;
}

SubProb1D initial_subprob(const ModelSpec& spec, const Grid& grid) {
    if (!spec.initial_density) throw Error(ErrorCode::InvalidArgument, "initial density missing");
    // nu_0(x) = int e^{-y} rho(x, y) dy against the x-marginal, both by a
    // fine rule in y independent of the y grid
    SubProb1D nu(grid.xg);
    const double top = grid.yg.y_max() + kTail;
    double total = 0.0;
    for (int i = 0; i < grid.nx(); ++i) {
        const double x = grid.x(i);
        auto rho = [&](double y) { return std::max(0.0, spec.initial_density(x, y)); };
        total += simpson(rho, 0.0, top, 8000);
        nu.values[i] = simpson([&](double y) { return std::exp(-y) * rho(y); }, 0.0, top, 8000);
    }
    if (!(total > 0.0)) {
        for (int i = 0; i < grid.nx(); ++i) {
            nu.values[i] = std::max(0.0, spec.initial_density(grid.x(i), 0.0));
            total += nu.values[i];
        }
    }
    total *= grid.dx();
    if (!(total > 0.0)) throw Error(ErrorCode::InvalidArgument, "initial density has no mass on the grid");
    for (double& v : nu.values) v /= total;
    return nu;
}

}  // namespace mvk
