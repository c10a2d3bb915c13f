#include "mvk/measures.hpp"

#include <algorithm>
#include <cmath>

#include "mvk/error.hpp"

namespace mvk {

void s_map(const Density2D& mu, SubProb1D& out) {
    const int nx = mu.xg.n;
    if (mu.values.size() != static_cast<std::size_t>(nx) * mu.yg.n)
        throw Error(ErrorCode::GridMismatch, "density storage does not match its grid");
    if (!(out.grid == mu.xg)) out = SubProb1D(mu.xg);
    std::fill(out.values.begin(), out.values.end(), 0.0);
    for (int j = 0; j < mu.yg.n; ++j) {
        const double w = std::exp(-mu.yg.y(j)) * mu.yg.dy;
        const auto row = mu.slice(j);
        for (int i = 0; i < nx; ++i) out.values[i] += w * row[i];
    }
}

SubProb1D s_map(const Density2D& mu) {
    SubProb1D out(mu.xg);
    s_map(mu, out);
    return out;
}

namespace {

void check_same(const SubProb1D& a, const SubProb1D& b) {
    if (!(a.grid == b.grid) || a.values.size() != b.values.size())
        throw Error(ErrorCode::GridMismatch, "measures live on different grids");
}

}  // namespace

std::vector<std::pair<double, double>> atoms_of(const SubProb1D& v) {
    std::vector<std::pair<double, double>> a;
    a.reserve(v.values.size() + 1);
    for (int i = 0; i < v.grid.n; ++i) {
        const double m = std::max(v.values[i], 0.0) * v.grid.dx;
        if (m > 0.0) a.emplace_back(v.grid.x(i), m);
    }
    return a;
}

double wasserstein_atoms(std::vector<std::pair<double, double>> a,
                         std::vector<std::pair<double, double>> b, int p) {
    if (p != 1 && p != 2) throw Error(ErrorCode::InvalidArgument, "p must be 1 or 2");
    auto prep = [](std::vector<std::pair<double, double>>& v) {
        std::sort(v.begin(), v.end());
        double s = 0.0;
        for (auto& e : v) s += e.second;
        if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "empty measure");
        for (auto& e : v) e.second /= s;
    };
    prep(a);
    prep(b);
    std::size_t ia = 0, ib = 0;
    double ra = a[0].second, rb = b[0].second;
    double acc = 0.0;
    while (ia < a.size() && ib < b.size()) {
        const double dm = std::min(ra, rb);
        const double dx = std::abs(a[ia].first - b[ib].first);
        acc += dm * (p == 1 ? dx : dx * dx);
        ra -= dm;
        rb -= dm;
        if (ra <= 0.0) {
            if (++ia < a.size()) ra = a[ia].second;
        }
        if (rb <= 0.0) {
            if (++ib < b.size()) rb = b[ib].second;
        }
    }
    return p == 1 ? acc : std::sqrt(acc);
}

double metric_dp(const SubProb1D& v1, const SubProb1D& v2, int p) {
    check_same(v1, v2);
    if (p != 1 && p != 2) throw Error(ErrorCode::InvalidArgument, "p must be 1 or 2");
    auto a = atoms_of(v1);
    auto b = atoms_of(v2);
    double m1 = 0.0, m2 = 0.0;
    for (auto& e : a) m1 += e.second;
    for (auto& e : b) m2 += e.second;
    if (m1 < 1.0) a.emplace_back(0.0, 1.0 - m1);
    if (m2 < 1.0) b.emplace_back(0.0, 1.0 - m2);
    return wasserstein_atoms(std::move(a), std::move(b), p) + std::abs(m1 - m2);
}

namespace {

struct Pt {
    double phi;
    double val;
};

double interp(const Pt& a, const Pt& b, double phi) {
    if (b.phi == a.phi) return std::max(a.val, b.val);
    const double w = (phi - a.phi) / (b.phi - a.phi);
    return a.val + w * (b.val - a.val);
}

// Clips a piecewise-linear function to [-1, 1].
std::vector<Pt> clip_unit(const std::vector<Pt>& f) {
    std::vector<Pt> out;
    out.reserve(f.size() + 2);
    for (std::size_t i = 0; i + 1 < f.size(); ++i) {
        const Pt& a = f[i];
        const Pt& b = f[i + 1];
        if (b.phi < -1.0 || a.phi > 1.0) continue;
        if (out.empty()) {
            if (a.phi < -1.0)
                out.push_back({-1.0, interp(a, b, -1.0)});
            else
                out.push_back(a);
        }
        if (b.phi > 1.0) {
            out.push_back({1.0, interp(a, b, 1.0)});
            break;
        }
        out.push_back(b);
    }
    return out;
}

}  // namespace

double metric_d0(const SubProb1D& v1, const SubProb1D& v2) {
    check_same(v1, v2);
    const int K = v1.grid.n;
    const double dx = v1.grid.dx;
    // Value function V_k(phi) = max of sum_{l<=k} d_l phi_l over admissible
    // phi_0..phi_k with phi_k = phi. Concave and piecewise linear in phi.
    std::vector<Pt> f{{-1.0, 0.0}, {1.0, 0.0}};
    std::vector<Pt> w;
    for (int k = 0; k < K; ++k) {
        const double d = (v1.values[k] - v2.values[k]) * dx;
        if (k > 0) {
            // window max over |psi - phi| <= dx
            std::size_t imax = 0;
            for (std::size_t i = 1; i < f.size(); ++i)
                if (f[i].val > f[imax].val) imax = i;
            std::size_t jmax = imax;
            while (jmax + 1 < f.size() && f[jmax + 1].val >= f[imax].val) ++jmax;
            w.clear();
            for (std::size_t i = 0; i <= imax; ++i) w.push_back({f[i].phi - dx, f[i].val});
            for (std::size_t i = jmax; i < f.size(); ++i) w.push_back({f[i].phi + dx, f[i].val});
            f = clip_unit(w);
        }
        for (auto& pt : f) pt.val += d * pt.phi;
        // drop collinear interior vertices
        std::vector<Pt> g;
        g.reserve(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (!g.empty() && f[i].phi - g.back().phi <= 1e-15) {
                g.back().val = std::max(g.back().val, f[i].val);
                continue;
            }
            if (g.size() >= 2 && i + 1 <= f.size()) {
                const Pt& a = g[g.size() - 2];
                const Pt& b = g.back();
                const double s1 = (b.val - a.val) / (b.phi - a.phi);
                const double s2 = (f[i].val - b.val) / (f[i].phi - b.phi);
                if (std::abs(s1 - s2) <= 1e-14 * (1.0 + std::abs(s1))) g.pop_back();
            }
            g.push_back(f[i]);
        }
        f.swap(g);
    }
    double best = 0.0;
    for (const auto& pt : f) best = std::max(best, pt.val);
    return best;
}

DiscretizedMeasure discretize_measure(const SubProb1D& v, int n, int k) {
    if (n < 1 || k < 1) throw Error(ErrorCode::InvalidArgument, "n and k must be >= 1");
    const double h = std::ldexp(1.0, -k);
    const int L = 2 * n * (1 << k);
    DiscretizedMeasure out;
    out.nodes.resize(L + 1);
    out.weights.assign(L + 1, 0.0);
    for (int i = 0; i <= L; ++i) out.nodes[i] = -n + i * h;
    std::vector<double> norm(L + 1, 0.0);
    const XGrid& g = v.grid;
    auto hat_range = [&](double x, int& lo, int& hi) {
        const double s = (x + n) / h;
        lo = std::max(0, static_cast<int>(std::ceil(s - 1.0)));
        hi = std::min(L, static_cast<int>(std::floor(s + 1.0)));
    };
    for (int m = 0; m < g.n; ++m) {
        const double x = g.x(m);
        if (x <= -n - h || x >= n + h) continue;
        int lo, hi;
        hat_range(x, lo, hi);
        for (int i = lo; i <= hi; ++i) {
            const double psi = std::max(0.0, 1.0 - std::abs(x - out.nodes[i]) / h);
            out.weights[i] += psi * v.values[m] * g.dx;
            norm[i] += psi * g.dx;
        }
    }
    out.reconstruction = SubProb1D(g);
    for (int m = 0; m < g.n; ++m) {
        const double x = g.x(m);
        if (x <= -n - h || x >= n + h) continue;
        int lo, hi;
        hat_range(x, lo, hi);
        double s = 0.0;
        for (int i = lo; i <= hi; ++i) {
            if (norm[i] <= 0.0) continue;
            const double psi = std::max(0.0, 1.0 - std::abs(x - out.nodes[i]) / h);
            s += out.weights[i] * psi / norm[i];
        }
        out.reconstruction.values[m] = s;
    }
    // hats narrower than the grid see no node: put their weight on the
    // nearest node instead
    for (int i = 0; i <= L; ++i) {
        if (norm[i] > 0.0 || out.weights[i] == 0.0) continue;
        const int m = static_cast<int>(std::lround((out.nodes[i] - g.x_min) / g.dx));
        if (m >= 0 && m < g.n) out.reconstruction.values[m] += out.weights[i] / g.dx;
    }
    return out;
}

double smooth_step(double z) {
    if (z <= 0.0) return 0.0;
    if (z >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / z);
    const double b = std::exp(-1.0 / (1.0 - z));
    return a / (a + b);
}

double cutoff(double x, int n) { return smooth_step(n - std::abs(x)); }

SubProb1D truncate_measure(const SubProb1D& v, int n) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
    SubProb1D out = v;
    for (int i = 0; i < v.grid.n; ++i) out.values[i] *= cutoff(v.grid.x(i), n);
    return out;
}

SubProb1D clipped(const SubProb1D& v, double* worst) {
    SubProb1D out = v;
    double w = 0.0;
    for (double& x : out.values) {
        w = std::min(w, x);
        if (x < 0.0) x = 0.0;
    }
    if (worst) *worst = w;
    return out;
}

}  // namespace mvk
