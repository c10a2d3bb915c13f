#include "mvk/regularization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>

#include "mvk/error.hpp"
#include "mvk/measures.hpp"

namespace mvk {

std::vector<double> inf_convolution(std::span<const double> phi, std::span<const double> g, double n) {
    if (phi.size() != g.size()) throw Error(ErrorCode::GridMismatch, "samples and points differ in length");
    const std::size_t M = g.size();
    std::vector<double> out(M);
    for (std::size_t a = 0; a < M; ++a) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < M; ++b) {
            const double d = g[a] - g[b];
            best = std::min(best, phi[b] + n * d * d);
        }
        out[a] = best;
    }
    return out;
}

namespace {

double bump(double z) { return std::abs(z) < 1.0 ? std::exp(-1.0 / (1.0 - z * z)) : 0.0; }

}  // namespace

std::vector<double> mollify(std::span<const double> f, double h, double eps) {
    if (!(eps >= 2.0 * h)) {
        std::ostringstream os;
        os << "mollifier radius " << eps << " below twice the grid step " << h;
        throw Error(ErrorCode::EpsBelowGrid, os.str());
    }
    const int M = static_cast<int>(f.size());
    const int r = static_cast<int>(std::ceil(eps / h));
    std::vector<double> w(2 * r + 1);
    double tot = 0.0;
    for (int k = -r; k <= r; ++k) tot += (w[k + r] = bump(k * h / eps));
    for (double& v : w) v /= tot;
    auto ext = [&](int i) {
        if (i < 0) return f[0] + i * (M > 1 ? f[1] - f[0] : 0.0);
        if (i >= M) return f[M - 1] + (i - M + 1) * (M > 1 ? f[M - 1] - f[M - 2] : 0.0);
        return f[i];
    };
    std::vector<double> out(M);
    for (int i = 0; i < M; ++i) {
        double s = 0.0;
        for (int k = -r; k <= r; ++k) s += w[k + r] * ext(i + k);
        out[i] = s;
    }
    return out;
}

ConvexProfile::ConvexProfile(double lo, double hi, std::vector<double> values, double q)
    : lo_(lo), hi_(hi), q_(q), v_(std::move(values)) {
    if (v_.size() < 2) throw Error(ErrorCode::InvalidArgument, "profile needs two samples");
    dg_ = (hi_ - lo_) / static_cast<double>(v_.size() - 1);
}

double ConvexProfile::value(double h) const {
    const int M = static_cast<int>(v_.size());
    const double s = std::clamp((h - lo_) / dg_, 0.0, static_cast<double>(M - 1));
    const int k = std::min(static_cast<int>(s), M - 2);
    const double w = s - k;
    return (1.0 - w) * v_[k] + w * v_[k + 1] + q_ * h * h;
}

double ConvexProfile::slope(double h) const {
    const int M = static_cast<int>(v_.size());
    const double s = std::clamp((h - lo_) / dg_, 0.0, static_cast<double>(M - 1));
    const int k = std::min(static_cast<int>(s), M - 2);
    return (v_[k + 1] - v_[k]) / dg_ + 2.0 * q_ * h;
}

double ConvexProfile::argmin(double s, double w) const {
    const int M = static_cast<int>(v_.size());
    auto node = [&](int k) { return lo_ + k * dg_; };
    auto seg = [&](int k) { return (v_[k + 1] - v_[k]) / dg_; };
    // right derivative at node k < M - 1 (nondecreasing in k)
    auto right = [&](int k) { return s + w * (seg(k) + 2.0 * q_ * node(k)); };
    if (right(0) >= 0.0) return lo_;
    int a = 0, b = M - 1;  // right(a) < 0; first k with right(k) >= 0 lies in (a, b]
    while (b - a > 1) {
        const int m = (a + b) / 2;
        if (right(m) >= 0.0)
            b = m;
        else
            a = m;
    }
    // minimiser lies in [node(a), node(b)]
    const double left_b = s + w * (seg(a) + 2.0 * q_ * node(b));
    if (left_b <= 0.0) return b == M - 1 ? hi_ : node(b);
    if (q_ <= 0.0) return node(b);
    const double h = (-s / w - seg(a)) / (2.0 * q_);
    return std::clamp(h, node(a), node(b));
}

namespace {

// Hat functions of half-width 2^{-k} on [-n, n] seen from the x grid.
struct HatMap {
    int n = 1, k = 1, L = 0;
    double h = 1.0;
    XGrid grid;
    std::vector<double> norm;     // int psi_i on the grid
    std::vector<int> nearest;     // fallback node of hats that see no node

    HatMap(const XGrid& g, int n_, int k_) : n(n_), k(k_), grid(g) {
        h = std::ldexp(1.0, -k);
        L = 2 * n * (1 << k);
        norm.assign(L + 1, 0.0);
        nearest.assign(L + 1, -1);
        for (int m = 0; m < g.n; ++m)
            for_hats(g.x(m), [&](int i, double psi) { norm[i] += psi * g.dx; });
        for (int i = 0; i <= L; ++i)
            if (norm[i] <= 0.0) {
                const int m = static_cast<int>(std::lround((node(i) - g.x_min) / g.dx));
                if (m >= 0 && m < g.n) nearest[i] = m;
            }
    }
    [[nodiscard]] double node(int i) const { return -n + i * h; }
    template <class F>
    void for_hats(double x, F&& f) const {
        if (x <= -n - h || x >= n + h) return;
        const double s = (x + n) / h;
        const int lo = std::max(0, static_cast<int>(std::ceil(s - 1.0)));
        const int hi = std::min(L, static_cast<int>(std::floor(s + 1.0)));
        for (int i = lo; i <= hi; ++i) {
            const double psi = std::max(0.0, 1.0 - std::abs(x - node(i)) / h);
            if (psi > 0.0) f(i, psi);
        }
    }
    [[nodiscard]] SubProb1D map(const MeasureView& nu) const {
        SubProb1D v(nu.grid(), std::vector<double>(nu.values().begin(), nu.values().end()));
        return discretize_measure(truncate_measure(v, n), n, k).reconstruction;
    }
    /// Linear functional derivative of F o map at x' given DF on the grid.
    [[nodiscard]] double pull(const std::vector<double>& dF, double xp) const {
        double s = 0.0;
        for_hats(xp, [&](int i, double psi) {
            double c = 0.0;
            if (norm[i] > 0.0) {
                for_hats_grid(i, [&](int m, double pm) { c += dF[m] * pm * grid.dx; });
                c /= norm[i];
            } else if (nearest[i] >= 0) {
                c = dF[nearest[i]];
            }
            s += psi * c;
        });
        return cutoff(xp, n) * s;
    }
    template <class F>
    void for_hats_grid(int i, F&& f) const {
        const double c = node(i);
        const int lo = std::max(0, static_cast<int>(std::ceil((c - h - grid.x_min) / grid.dx)));
        const int hi = std::min(grid.n - 1, static_cast<int>(std::floor((c + h - grid.x_min) / grid.dx)));
        for (int m = lo; m <= hi; ++m) {
            const double psi = std::max(0.0, 1.0 - std::abs(grid.x(m) - c) / h);
            if (psi > 0.0) f(m, psi);
        }
    }
};

// Hat maps are built per x grid on first use.
struct HatCache {
    int n = 1, k = 1;
    std::mutex mu;
    std::shared_ptr<const HatMap> last;
    std::shared_ptr<const HatMap> get(const XGrid& g) {
        std::lock_guard<std::mutex> lock(mu);
        if (!last || !(last->grid == g)) last = std::make_shared<const HatMap>(g, n, k);
        return last;
    }
};

}  // namespace

ApproxFamily build_approx_family(const ModelSpec& spec, int n, const ApproxOptions& opt) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "approximation index must be >= 1");
    if (spec.dim_g != 1) throw Error(ErrorCode::InvalidArgument, "approximation family supports d_G = 1");
    ApproxFamily fam;
    fam.n = n;
    fam.k = opt.k > 0 ? opt.k : std::max(1, static_cast<int>(std::ceil(std::log2(static_cast<double>(n)))) + 2);
    ModelSpec s = spec;
    s.name = spec.name + "_n" + std::to_string(n);
    const double nd = n;

    // b1 with x clamped, lambda capped
    if (spec.b1_factor) {
        auto bf = spec.b1_factor;
        s.b1_factor = [bf, nd](double t, double x, int k) { return bf(t, std::clamp(x, -nd, nd), k); };
    }
    s.b1 = nullptr;
    if (spec.lambda) {
        auto lam = spec.lambda;
        s.lambda = [lam, nd](double t, double x) { return std::min(lam(t, x), nd); };
    }

    // f1: envelope, mollified, windowed, plus |g|^2 / n
    const double lo = spec.g_min[0], hi = spec.g_max[0];
    const int M = std::max(opt.g_points, 5);
    const double dg = (hi - lo) / (M - 1);
    auto build_profile = [spec, lo, dg, M, nd](double t, double x, ApproxFamily* record) {
        std::vector<double> pts(M), phi(M);
        for (int i = 0; i < M; ++i) {
            pts[i] = lo + i * dg;
            phi[i] = spec.eval_f1(t, x, std::span<const double>(&pts[i], 1));
        }
        const auto env = inf_convolution(phi, pts, nd);
        double lip = 0.0;
        for (int i = 0; i + 1 < M; ++i) lip = std::max(lip, std::abs(env[i + 1] - env[i]) / dg);
        // eps * Lip <= 1/n bounds the mollification error by 1/n
        const double eps = std::max(2.0 * dg, std::min(0.25 * (M - 1) * dg, lip > 0.0 ? 1.0 / (nd * lip) : 1.0));
        auto mol = mollify(env, dg, eps);
        if (record) {
            record->eps = eps;
            double mod = 0.0;
            for (int i = 0; i < M; ++i) mod = std::max(mod, std::abs(mol[i] - env[i]));
            record->modulus = mod;
        }
        return ConvexProfile(lo, lo + (M - 1) * dg, std::move(mol), 1.0 / nd);
    };
    if (spec.f1) {
        if (spec.f1_autonomous) {
            auto prof = std::make_shared<ConvexProfile>(build_profile(0.0, 0.0, &fam));
            s.f1 = [prof, nd](double, double x, std::span<const double> g) {
                return std::exp(-x * x / nd) * prof->value(g[0]);
            };
            s.grad_f1 = [prof, nd](double, double x, std::span<const double> g, std::span<double> out) {
                out[0] = std::exp(-x * x / nd) * prof->slope(g[0]);
            };
            s.f1_linear_argmin = [prof, nd](double, double x, std::span<const double> c, std::span<double> out) {
                out[0] = prof->argmin(c[0], std::exp(-x * x / nd));
            };
        } else {
            (void)build_profile(0.0, 0.0, &fam);
            auto make = build_profile;
            s.f1 = [make, nd](double t, double x, std::span<const double> g) {
                return std::exp(-x * x / nd) * make(t, x, nullptr).value(g[0]);
            };
            s.grad_f1 = [make, nd](double t, double x, std::span<const double> g, std::span<double> out) {
                out[0] = std::exp(-x * x / nd) * make(t, x, nullptr).slope(g[0]);
            };
            s.f1_linear_argmin = [make, nd](double t, double x, std::span<const double> c, std::span<double> out) {
                out[0] = make(t, x, nullptr).argmin(c[0], std::exp(-x * x / nd));
            };
            fam.notes.push_back("f1 depends on (t, x): envelope rebuilt per evaluation");
        }
        s.f1_quadratic.reset();
    }

    // f0 and psi through truncation and the hat map
    auto cache = std::make_shared<HatCache>();
    cache->n = n;
    cache->k = fam.k;
    if (spec.f0) {
        auto f0 = spec.f0;
        s.f0 = [f0, cache, n](double t, double x, const MeasureView& nu) {
            const SubProb1D r = cache->get(nu.grid())->map(nu);
            return cutoff(x, n) * f0(t, x, MeasureView(r));
        };
    }
    if (spec.Df0) {
        auto df0 = spec.Df0;
        s.Df0 = [df0, cache, n](double t, double x, const MeasureView& nu, double xp) {
            const auto hm = cache->get(nu.grid());
            const SubProb1D r = hm->map(nu);
            const MeasureView rv(r);
            std::vector<double> d(nu.grid().n);
            for (int m = 0; m < nu.grid().n; ++m) d[m] = df0(t, x, rv, nu.grid().x(m));
            return cutoff(x, n) * hm->pull(d, xp);
        };
    }
    if (spec.psi) {
        auto psi = spec.psi;
        s.psi = [psi, cache](const MeasureView& nu) {
            const SubProb1D r = cache->get(nu.grid())->map(nu);
            return psi(MeasureView(r));
        };
    }
    if (spec.Dpsi) {
        auto dpsi = spec.Dpsi;
        s.Dpsi = [dpsi, cache](const MeasureView& nu, double xp) {
            const auto hm = cache->get(nu.grid());
            const SubProb1D r = hm->map(nu);
            const MeasureView rv(r);
            std::vector<double> d(nu.grid().n);
            for (int m = 0; m < nu.grid().n; ++m) d[m] = dpsi(rv, nu.grid().x(m));
            return hm->pull(d, xp);
        };
    }

    // certification by sampling on [-n, n]
    CounterRng rng(0x5eedULL + n, 17);
    double bmax = 0.0, lmax = 0.0;
    bool growth = true;
    for (int i = 0; i < 2000; ++i) {
        const double t = s.T * rng.uniform();
        const double x = -2.0 * nd + 4.0 * nd * rng.uniform();
        const double b1 = s.max_b1(t, x);
        const double l = s.eval_lambda(t, x);
        bmax = std::max(bmax, b1);
        lmax = std::max(lmax, l);
        if (!std::isfinite(b1) || !std::isfinite(l)) growth = false;
    }
    fam.certified[0] = lmax <= nd + 1e-12 && std::isfinite(bmax);
    fam.certified[1] = fam.modulus <= 1.0 / nd + 1e-12;
    fam.certified[2] = growth;
    fam.certified[3] = static_cast<bool>(s.f1);
    {
        std::ostringstream os;
        os << "k = " << fam.k << ", eps = " << fam.eps << ", sampled mollification modulus = " << fam.modulus;
        fam.notes.push_back(os.str());
    }
    fam.spec = std::move(s);
    return fam;
}

ValueSweep value_sweep(const ModelSpec& spec, const Grid& grid, const std::vector<int>& ns, const MfcOptions& opt,
                       const ApproxOptions& aopt) {
    ValueSweep out;
    out.V = solve_mfc(spec, grid, opt).J;
    for (int n : ns) {
        const ApproxFamily fam = build_approx_family(spec, n, aopt);
        const ModelSpec sn = validate_model(fam.spec);
        const MfcResult r = solve_mfc(sn, grid, opt);
        out.n.push_back(n);
        out.Vn.push_back(r.J);
        out.gap.push_back(std::abs(r.J - out.V));
        out.converged.push_back(r.converged);
    }
    return out;
}

}  // namespace mvk
