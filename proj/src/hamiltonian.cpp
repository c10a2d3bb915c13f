#include "mvk/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvk/error.hpp"
#include "mvk/measures.hpp"

namespace mvk {

namespace {

constexpr double kGolden = 0.6180339887498949;

// argmin over the box of beta . h p + f1(t, x, h)
void argmin_linear(double t, double x, std::span<const double> beta, double p, const ModelSpec& spec,
                   std::span<double> out) {
    const int d = spec.dim_g;
    if (spec.f1_quadratic) {
        const double c = *spec.f1_quadratic;
        for (int k = 0; k < d; ++k) out[k] = std::clamp(-beta[k] * p / c, spec.g_min[k], spec.g_max[k]);
        return;
    }
    if (spec.f1_linear_argmin) {
        std::vector<double> s(d);
        for (int k = 0; k < d; ++k) s[k] = beta[k] * p;
        spec.f1_linear_argmin(t, x, s, out);
        return;
    }
    if (d == 1) {
        const double b = beta[0];
        double h1 = 0.0;
        auto phi = [&](double h) { return b * h * p + spec.eval_f1(t, x, std::span<const double>(&h, 1)); };
        double lo = spec.g_min[0], hi = spec.g_max[0];
        if (lo == hi) {
            out[0] = lo;
            return;
        }
        double a = lo, c = hi;
        double x1 = c - kGolden * (c - a), x2 = a + kGolden * (c - a);
        double f1v = phi(x1), f2v = phi(x2);
        for (int it = 0; it < 200 && c - a > 1e-12 * (1.0 + std::abs(a) + std::abs(c)); ++it) {
            if (f1v <= f2v) {
                c = x2;
                x2 = x1;
                f2v = f1v;
                x1 = c - kGolden * (c - a);
                f1v = phi(x1);
            } else {
                a = x1;
                x1 = x2;
                f1v = f2v;
                x2 = a + kGolden * (c - a);
                f2v = phi(x2);
            }
        }
        h1 = 0.5 * (a + c);
        double best = phi(h1);
        for (double e : {lo, hi}) {
            const double v = phi(e);
            if (v < best) {
                best = v;
                h1 = e;
            }
        }
        // smallest point of the (convex) sublevel set {phi <= best + tol}
        const double tol = 1e-13 * (1.0 + std::abs(best));
        if (phi(lo) <= best + tol) {
            out[0] = lo;
            return;
        }
        double l = lo, r = h1;
        for (int it = 0; it < 100 && r - l > 1e-14 * (1.0 + std::abs(r)); ++it) {
            const double m = 0.5 * (l + r);
            if (phi(m) <= best + tol)
                r = m;
            else
                l = m;
        }
        out[0] = r;
        return;
    }

    // projected gradient with Armijo backtracking, restarted from the
    // centre and the corners of the box
    auto value = [&](std::span<const double> h) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += beta[k] * h[k] * p;
        return s + spec.eval_f1(t, x, h);
    };
    auto project = [&](std::vector<double>& h) {
        for (int k = 0; k < d; ++k) h[k] = std::clamp(h[k], spec.g_min[k], spec.g_max[k]);
    };
    std::vector<std::vector<double>> starts;
    std::vector<double> centre(d);
    for (int k = 0; k < d; ++k) centre[k] = 0.5 * (spec.g_min[k] + spec.g_max[k]);
    starts.push_back(centre);
    if (d <= 10) {
        for (int mask = 0; mask < (1 << d); ++mask) {
            std::vector<double> c(d);
            for (int k = 0; k < d; ++k) c[k] = (mask >> k) & 1 ? spec.g_max[k] : spec.g_min[k];
            starts.push_back(c);
        }
    }
    std::vector<double> best_h;
    double best_v = std::numeric_limits<double>::infinity();
    std::vector<double> grad(d), trial(d);
    for (auto h : starts) {
        double v = value(h);
        double step = 1.0;
        for (int it = 0; it < 2000; ++it) {
            spec.eval_grad_f1(t, x, h, grad);
            for (int k = 0; k < d; ++k) grad[k] += beta[k] * p;
            double moved = 0.0;
            double vt = v;
            for (int bt = 0; bt < 60; ++bt) {
                for (int k = 0; k < d; ++k) trial[k] = h[k] - step * grad[k];
                project(trial);
                moved = 0.0;
                for (int k = 0; k < d; ++k) moved += (trial[k] - h[k]) * (trial[k] - h[k]);
                vt = value(trial);
                if (vt <= v - 1e-4 / step * moved) break;
                step *= 0.5;
            }
            if (!(vt <= v)) break;
            h = trial;
            const double dv = v - vt;
            v = vt;
            step = std::min(step * 2.0, 1e6);
            if (moved < 1e-28 || dv <= 1e-16 * (1.0 + std::abs(v))) break;
        }
        const double tol = 1e-10 * (1.0 + std::abs(best_v));
        if (v < best_v - tol || (std::abs(v - best_v) <= tol && h < best_h)) {
            if (v < best_v - tol || best_h.empty()) best_v = v;
            best_h = h;
        }
    }
    std::copy(best_h.begin(), best_h.end(), out.begin());
}

}  // namespace

void minimize_hamiltonian(double t, double x, double p, const ModelSpec& spec, std::span<double> out) {
    if (!std::isfinite(p) || !std::isfinite(t) || !std::isfinite(x))
        throw Error(ErrorCode::NonfiniteInput, "non-finite Hamiltonian query");
    const int d = spec.dim_g;
    double beta_buf[16];
    std::vector<double> beta_vec;
    std::span<double> beta;
    if (d <= 16) {
        beta = std::span<double>(beta_buf, d);
    } else {
        beta_vec.resize(d);
        beta = beta_vec;
    }
    for (int k = 0; k < d; ++k) beta[k] = spec.beta(t, x, k);
    argmin_linear(t, x, beta, p, spec, out);
}

std::vector<double> minimize_hamiltonian(double t, double x, double p, const ModelSpec& spec) {
    std::vector<double> g(spec.dim_g);
    minimize_hamiltonian(t, x, p, spec, g);
    return g;
}

double h_nu(double t, double x, double r, double p, const MeasureView& nu, const ModelSpec& spec) {
    if (!std::isfinite(r) || !std::isfinite(p)) throw Error(ErrorCode::NonfiniteInput, "non-finite (r, p)");
    const auto g = minimize_hamiltonian(t, x, p, spec);
    const double b = spec.eval_b0(t, x, nu) + spec.eval_b1(t, x, g);
    return b * p + spec.eval_f0(t, x, nu) + spec.eval_f1(t, x, g) - spec.eval_lambda(t, x) * r;
}

double f_nu(double t, double x, const MeasureView& nu, std::span<const double> dxu, const ModelSpec& spec) {
    const XGrid& g = nu.grid();
    if (static_cast<int>(dxu.size()) != g.n) throw Error(ErrorCode::GridMismatch, "gradient field size");
    if (!spec.Db0 && !spec.Df0) return 0.0;
    const auto v = nu.values();
    double s = 0.0;
    for (int k = 0; k < g.n; ++k) {
        if (v[k] == 0.0) continue;
        double term = 0.0;
        if (spec.Db0) term += spec.Db0(t, g.x(k), nu, x) * dxu[k];
        if (spec.Df0) term += spec.Df0(t, g.x(k), nu, x);
        s += v[k] * term;
    }
    return s * g.dx;
}

void f_nu_field(double t, const MeasureView& nu, std::span<const double> dxu, const ModelSpec& spec,
                std::span<double> out) {
    const XGrid& g = nu.grid();
    if (static_cast<int>(out.size()) != g.n) throw Error(ErrorCode::GridMismatch, "output size");
    for (int i = 0; i < g.n; ++i) out[i] = f_nu(t, g.x(i), nu, dxu, spec);
}

double k_tilde(double t, double x, double y, double p, std::span<const double> h, const MeasureView& nu,
               const ModelSpec& spec) {
    const double b = spec.eval_b0(t, x, nu) + spec.eval_b1(t, x, h);
    return b * p + std::exp(-y) * (spec.eval_f0(t, x, nu) + spec.eval_f1(t, x, h));
}

double f_tilde_mu(double t, double x, double y, const Density2D& mu, std::span<const double> dxu_2d,
                  const ModelSpec& spec) {
    if (dxu_2d.size() != mu.values.size()) throw Error(ErrorCode::GridMismatch, "gradient field size");
    if (!spec.Db0 && !spec.Df0) return 0.0;
    const SubProb1D nu = s_map(mu);
    const MeasureView view(nu);
    const XGrid& xg = mu.xg;
    const double vol = mu.xg.dx * mu.yg.dy;
    double s = 0.0;
    if (spec.Db0) {
        for (int k = 0; k < xg.n; ++k) {
            double col = 0.0;
            for (int l = 0; l < mu.yg.n; ++l) col += mu.at(k, l) * dxu_2d[static_cast<std::size_t>(l) * xg.n + k];
            if (col != 0.0) s += vol * col * spec.Db0(t, xg.x(k), view, x);
        }
    }
    if (spec.Df0) {
        for (int k = 0; k < xg.n; ++k)
            if (nu.values[k] != 0.0) s += xg.dx * nu.values[k] * spec.Df0(t, xg.x(k), view, x);
    }
    return std::exp(-y) * s;
}

double h_tilde_mu(double t, double x, double y, double p, double mu_value, std::span<const double> fallback_g,
                  const MeasureView& nu, const ModelSpec& spec) {
    if (mu_value > kMuFloor) {
        // inf_h b(h) p + e^{-y} f1(h)  =  e^{-y} inf_h (beta h e^{y} p + f1(h))
        const auto g = minimize_hamiltonian(t, x, std::exp(y) * p, spec);
        return k_tilde(t, x, y, p, g, nu, spec);
    }
    return k_tilde(t, x, y, p, fallback_g, nu, spec);
}

double upwind_value(const UpwindQuery& q, const ModelSpec& spec, std::span<const double> beta,
                    std::span<const double> g) {
    double b = q.b0;
    for (int k = 0; k < spec.dim_g; ++k) b += beta[k] * g[k];
    const double tr = b > 0.0 ? b * q.p_plus : b * q.p_minus;
    if (spec.f1_quadratic) {
        double s = 0.0;
        for (int k = 0; k < spec.dim_g; ++k) s += g[k] * g[k];
        return tr + q.weight * 0.5 * *spec.f1_quadratic * s;
    }
    return tr + q.weight * spec.eval_f1(q.t, q.x, g);
}

double upwind_minimize(const UpwindQuery& q, const ModelSpec& spec, std::span<const double> beta,
                       std::span<double> g) {
    const int d = spec.dim_g;
    const double w = q.weight;
    if (d == 1 && spec.f1_quadratic) {
        const double c = *spec.f1_quadratic, be = beta[0];
        auto val = [&](double h) {
            const double b = q.b0 + be * h;
            return (b > 0.0 ? b * q.p_plus : b * q.p_minus) + w * 0.5 * c * (h * h);
        };
        const double ha = std::clamp(-be * (q.p_plus / w) / c, spec.g_min[0], spec.g_max[0]);
        const double hb = std::clamp(-be * (q.p_minus / w) / c, spec.g_min[0], spec.g_max[0]);
        if (q.p_plus >= q.p_minus) {
            if (q.b0 + be * ha >= 0.0) g[0] = ha;
            else if (q.b0 + be * hb <= 0.0) g[0] = hb;
            else g[0] = std::clamp(-q.b0 / be, spec.g_min[0], spec.g_max[0]);
            return val(g[0]);
        }
        const double va = val(ha), vb = val(hb);
        g[0] = (vb < va || (vb == va && hb < ha)) ? hb : ha;
        return std::min(va, vb);
    }
    auto bval = [&](std::span<const double> h) {
        double b = q.b0;
        for (int k = 0; k < d; ++k) b += beta[k] * h[k];
        return b;
    };
    double buf_a[16], buf_b[16];
    std::vector<double> va, vb;
    std::span<double> ha, hb;
    if (d <= 16) {
        ha = std::span<double>(buf_a, d);
        hb = std::span<double>(buf_b, d);
    } else {
        va.resize(d);
        vb.resize(d);
        ha = va;
        hb = vb;
    }
    if (q.p_plus >= q.p_minus) {
        argmin_linear(q.t, q.x, beta, q.p_plus / w, spec, ha);
        if (bval(ha) >= 0.0) {
            std::copy(ha.begin(), ha.end(), g.begin());
            return upwind_value(q, spec, beta, g);
        }
        argmin_linear(q.t, q.x, beta, q.p_minus / w, spec, hb);
        if (bval(hb) <= 0.0) {
            std::copy(hb.begin(), hb.end(), g.begin());
            return upwind_value(q, spec, beta, g);
        }
        // optimum on the hyperplane b = 0
        if (d == 1) {
            g[0] = std::clamp(-q.b0 / beta[0], spec.g_min[0], spec.g_max[0]);
            return upwind_value(q, spec, beta, g);
        }
        double lo = q.p_minus, hi = q.p_plus;  // b > 0 at lo, b < 0 at hi
        for (int it = 0; it < 100 && hi - lo > 1e-14 * (1.0 + std::abs(hi)); ++it) {
            const double m = 0.5 * (lo + hi);
            argmin_linear(q.t, q.x, beta, m / w, spec, ha);
            if (bval(ha) > 0.0)
                lo = m;
            else
                hi = m;
        }
        argmin_linear(q.t, q.x, beta, 0.5 * (lo + hi) / w, spec, g);
        return upwind_value(q, spec, beta, g);
    }
    argmin_linear(q.t, q.x, beta, q.p_plus / w, spec, ha);
    argmin_linear(q.t, q.x, beta, q.p_minus / w, spec, hb);
    const double va_ = upwind_value(q, spec, beta, ha);
    const double vb_ = upwind_value(q, spec, beta, hb);
    const bool take_b = vb_ < va_ || (vb_ == va_ && std::lexicographical_compare(hb.begin(), hb.end(), ha.begin(), ha.end()));
    const auto& src = take_b ? hb : ha;
    std::copy(src.begin(), src.end(), g.begin());
    return take_b ? vb_ : va_;
}

}  // namespace mvk
