#include "mvk/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "mvk/backward.hpp"
#include "mvk/error.hpp"
#include "mvk/forward.hpp"
#include "mvk/io.hpp"
#include "mvk/measures.hpp"
#include "mvk/mfc.hpp"
#include "mvk/particles.hpp"
#include "mvk/regularization.hpp"
#include "mvk/rng.hpp"

#ifndef MVK_VERSION
#define MVK_VERSION "unknown"
#endif

namespace mvk {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Context {
    RunConfig cfg;
    ModelSpec spec;
    Grid grid;
    MfcOptions opt;
    std::optional<CommonNoisePath> noise;
    fs::path out;
    json manifest;
    json diagnostics;
    bool converged = true;

    void file(const std::string& name) { manifest["outputs"].push_back(name); }
};

json grid_json(const Grid& g) {
    return {{"x_min", g.xg.x_min}, {"x_max", g.xg.x_max()}, {"nx", g.nx()},         {"y_min", g.yg.y_min},
            {"y_max", g.yg.y_max()}, {"ny", g.ny()},        {"n_ext", g.yg.n_ext}, {"nt", g.nt},
            {"T", g.T}};
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream f(p);
    f << j.dump(2) << '\n';
}

void control_csv(Context& c, const std::string& name, const FeedbackControl& g) {
    std::vector<std::string> header{"t", "x"};
    if (g.ny > 1) header.push_back("y");
    for (int k = 0; k < g.dim; ++k) header.push_back(g.dim == 1 ? "g" : "g" + std::to_string(k));
    const std::size_t per = static_cast<std::size_t>(g.nx) * g.ny;
    write_csv(c.out / name, header, per * g.levels, [&](std::size_t r, std::vector<double>& v) {
        const int n = static_cast<int>(r / per);
        const int j = static_cast<int>((r % per) / g.nx), i = static_cast<int>(r % g.nx);
        std::size_t k = 0;
        v[k++] = c.grid.t(n);
        v[k++] = c.grid.x(i);
        if (g.ny > 1) v[k++] = c.grid.y(j);
        for (int d = 0; d < g.dim; ++d) v[k++] = g.at(n, i, j, d);
    });
    c.file(name);
}

void field_csv(Context& c, const std::string& name, const BSPDESolution& u) {
    const int nx = u.nx();
    const std::size_t rows_per = u.u.front().size();
    std::vector<std::string> header{"t", "x"};
    if (u.two_d) header.push_back("y");
    header.push_back("value");
    write_csv(c.out / name, header, rows_per * u.level.size(), [&](std::size_t r, std::vector<double>& v) {
        const std::size_t s = r / rows_per, m = r % rows_per;
        const int j = static_cast<int>(m / nx), i = static_cast<int>(m % nx);
        std::size_t k = 0;
        v[k++] = u.grid.t(u.level[s]);
        v[k++] = u.grid.x(i);
        if (u.two_d) v[k++] = u.grid.y(j);
        v[k++] = u.u[s][m];
    });
    c.file(name);
}

void nu_csv(Context& c, const std::string& name, const std::vector<SubProb1D>& nu) {
    const int nx = c.grid.nx();
    write_csv(c.out / name, {"t", "x", "value"}, nu.size() * nx, [&](std::size_t r, std::vector<double>& v) {
        const int n = static_cast<int>(r / nx), i = static_cast<int>(r % nx);
        v = {c.grid.t(n), c.grid.x(i), nu[n].values[i]};
    });
    c.file(name);
}

json fp_stats(const BSPDESolution& u) {
    int worst = 0;
    for (int it : u.fp_iterations) worst = std::max(worst, it);
    return {{"max_iterations", worst},
            {"capped_steps", u.fp_capped},
            {"max_contraction", u.max_contraction},
            {"max_residual", u.max_residual}};
}

const CommonNoisePath* noise_of(Context& c) {
    if (!c.spec.sigma0) return nullptr;
    if (!c.noise) {
        if (!c.cfg.seed) throw Error(ErrorCode::SeedRequired, "common noise needs a seed");
        c.noise = CommonNoisePath::generate(c.grid.nt, c.grid.dt(), *c.cfg.seed);
    }
    return &*c.noise;
}

MfcResult run_mfc(Context& c) {
    MfcOptions o = c.opt;
    o.noise = noise_of(c);
    MfcResult r = solve_mfc(c.spec, c.grid, o);
    c.converged = r.converged;
    c.diagnostics["picard_iterations"] = r.iterations;
    c.diagnostics["converged"] = r.converged;
    c.diagnostics["stalled"] = r.stalled;
    c.diagnostics["J"] = r.J;
    c.diagnostics["final_residual"] = r.residual_trace.empty() ? 0.0 : r.residual_trace.back();
    c.diagnostics["mass_T"] = r.forward.mass.back();
    return r;
}

void exp_solve(Context& c) {
    const MfcResult r = run_mfc(c);
    control_csv(c, "g_star.csv", r.g);
    field_csv(c, "u.csv", r.u);
    nu_csv(c, "nu.csv", r.forward.nu);
    write_csv(c.out / "cost_trace.csv", {"iteration", "cost", "residual"}, r.cost_trace.size(),
              [&](std::size_t k, std::vector<double>& v) {
                  v = {static_cast<double>(k + 1), r.cost_trace[k],
                       k < r.residual_trace.size() ? r.residual_trace[k] : 0.0};
              });
    c.file("cost_trace.csv");
    c.diagnostics["backward"] = fp_stats(r.u);
    c.diagnostics["forward"] = {{"min_value", r.forward.min_value}, {"max_cfl", r.forward.max_cfl}};
}

void exp_forward(Context& c) {
    const auto g = zero_control(c.spec, c.grid);
    const auto fw = solve_forward_2d(c.spec, c.grid, g, noise_of(c), c.opt.forward);
    nu_csv(c, "nu.csv", fw.nu);
    const Density2D& mu = fw.mu.back();
    const int nx = c.grid.nx();
    write_csv(c.out / "mu_T.csv", {"x", "y", "value"}, mu.values.size(), [&](std::size_t r, std::vector<double>& v) {
        const int j = static_cast<int>(r / nx), i = static_cast<int>(r % nx);
        v = {c.grid.x(i), c.grid.y(j), mu.values[r]};
    });
    c.file("mu_T.csv");
    write_csv(c.out / "mass.csv", {"t", "mass"}, fw.mass.size(), [&](std::size_t n, std::vector<double>& v) {
        v = {c.grid.t(static_cast<int>(n)), fw.mass[n]};
    });
    c.file("mass.csv");
    c.manifest["mass"] = fw.mass;
    c.diagnostics["mass_T"] = fw.mass.back();
    c.diagnostics["min_value"] = fw.min_value;
    c.diagnostics["max_cfl"] = fw.max_cfl;
    c.diagnostics["mass_below_zero_T"] = mu.mass_below_zero();
    c.diagnostics["energy_constant"] = fw.energy_constant;
}

void exp_backward(Context& c) {
    const auto g = zero_control(c.spec, c.grid);
    const auto fw = solve_forward_1d(c.spec, c.grid, g, noise_of(c), c.opt.forward);
    const auto term = terminal_1d(c.spec, fw.nu.back());
    const auto u = solve_backward_1d(c.spec, c.grid, fw, term, c.opt.backward);
    field_csv(c, "u.csv", u);
    const EnergyReport e = energy_report(u, term);
    write_json(c.out / "energy.json", {{"sup_u2", e.sup_u2},
                                       {"grad_sum", e.grad_sum},
                                       {"q_sum", e.q_sum},
                                       {"psi_norm2", e.psi_norm2},
                                       {"constant", e.constant}});
    c.file("energy.json");
    c.diagnostics["backward"] = fp_stats(u);
    c.diagnostics["energy_constant"] = e.constant;
}

void exp_particles(Context& c) {
    if (!c.cfg.seed) throw Error(ErrorCode::SeedRequired, "particles need --seed or a config seed");
    const MfcResult r = run_mfc(c);
    ParticleOptions po;
    po.N = c.cfg.particles.N;
    po.seed = c.cfg.seed;
    po.coupling = c.cfg.particles.coupling;
    po.nu = &r.forward.nu;
    po.noise = noise_of(c);
    po.snapshot_every = c.cfg.particles.snapshot_every;
    const auto tr = simulate_particles(c.spec, c.grid, r.g, po);
    const auto& fin = tr.final();
    write_csv(c.out / "particles_T.csv", {"x", "lambda", "alive", "theta"}, tr.N,
              [&](std::size_t p, std::vector<double>& v) {
                  v = {fin.X[p], fin.Lambda[p], static_cast<double>(fin.alive[p]), tr.theta[p]};
              });
    c.file("particles_T.csv");
    for (const auto& s : tr.snapshots) {
        if (s.level == 0 || s.level == c.grid.nt) continue;
        const std::string name = "particles_" + std::to_string(s.level) + ".csv";
        write_csv(c.out / name, {"x", "lambda", "alive"}, tr.N, [&](std::size_t p, std::vector<double>& v) {
            v = {s.X[p], s.Lambda[p], static_cast<double>(s.alive[p])};
        });
        c.file(name);
    }
    json summary;
    summary["alive_fraction"] = tr.alive_fraction;
    summary["mean_weight"] = tr.mean_weight;
    summary["pde_mass"] = r.forward.mass;
    for (auto mode : {KillMode::Hard, KillMode::Soft}) {
        const auto est = estimate_cost_mc(c.spec, tr, mode, c.cfg.particles.batches);
        const auto emp = empirical_subprob(fin, mode, c.grid.xg);
        const char* key = mode == KillMode::Hard ? "hard" : "soft";
        summary[key] = {{"J", est.J},
                        {"half_width", est.half_width},
                        {"mass_T", emp.mass()},
                        {"d1_to_pde", metric_dp(emp, r.forward.nu.back(), 1)}};
    }
    summary["pde_J"] = r.J;
    summary["N"] = tr.N;
    summary["seed"] = tr.seed;
    write_json(c.out / "summary.json", summary);
    c.file("summary.json");
}

void exp_separability(Context& c) {
    json gaps = json::array(), rel = json::array(), grids = json::array();
    double prev = -1.0;
    bool decreasing = true;
    for (int lv = 0; lv < c.cfg.separability_levels; ++lv) {
        const Grid g = refine(c.grid, lv);
        const auto rep = separability_check(c.spec, g, zero_control(c.spec, g), c.opt.backward);
        gaps.push_back(rep.gap);
        rel.push_back(rep.relative);
        grids.push_back(grid_json(g));
        if (prev >= 0.0 && !(rep.relative < prev)) decreasing = false;
        prev = rep.relative;
    }
    c.diagnostics["separability_gap"] = rel;
    c.diagnostics["separability_gap_abs"] = gaps;
    c.diagnostics["grids"] = grids;
    c.diagnostics["decreasing"] = decreasing;
}

// Smooth random direction, zeroed where it would leave the box.
FeedbackControl inward_direction(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                 CounterRng& rng) {
    double a[6];
    for (double& v : a) v = 2.0 * rng.uniform() - 1.0;
    FeedbackControl h(g.levels, g.nx, g.ny, g.dim);
    for (int n = 0; n < g.levels; ++n)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                for (int k = 0; k < g.dim; ++k) {
                    const double t = grid.t(n), x = grid.x(i), y = grid.y(j);
                    double v = a[0] * std::sin(2.0 * a[1] * x + a[2]) + a[3] * std::cos(3.0 * a[4] * t + x) +
                               a[5] * std::sin(y + x);
                    const double gv = g.at(n, i, j, k);
                    if ((v > 0.0 && gv >= spec.g_max[k] - 1e-12) || (v < 0.0 && gv <= spec.g_min[k] + 1e-12))
                        v = 0.0;
                    h.at(n, i, j, k) = v;
                }
    return h;
}

void exp_smp(Context& c) {
    MfcOptions o = c.opt;
    o.noise = noise_of(c);
    const Mfc2DResult r = solve_mfc_2d(c.spec, c.grid, o);
    c.converged = r.converged;
    c.diagnostics["picard_iterations"] = r.iterations;
    c.diagnostics["converged"] = r.converged;
    c.diagnostics["J"] = r.J;
    c.diagnostics["final_residual"] = r.residual_trace.empty() ? 0.0 : r.residual_trace.back();
    c.diagnostics["intensity_independence"] = intensity_independence_diag(r.g);
    const FeedbackControl& g2 = r.g;
    const auto& fw = r.forward;
    const auto& adj = r.adjoint;
    const double res = smp_residual(c.spec, g2, fw, adj);
    CounterRng rng(c.cfg.seed.value_or(0), 0x5eed);
    double worst = std::numeric_limits<double>::infinity();
    json values = json::array();
    for (int d = 0; d < c.cfg.smp_directions; ++d) {
        const double v = gateaux_derivative(c.spec, g2, inward_direction(c.spec, c.grid, g2, rng), fw, adj);
        values.push_back(v);
        worst = std::min(worst, v);
    }
    c.diagnostics["smp_residual"] = res;
    c.diagnostics["gateaux"] = values;
    c.diagnostics["min_gateaux"] = worst;
}

void exp_sweep(Context& c) {
    ApproxOptions ao;
    ao.g_points = c.cfg.sweep.g_points;
    const ValueSweep s = value_sweep(c.spec, c.grid, c.cfg.sweep.n, c.opt, ao);
    write_csv(c.out / "sweep.csv", {"n", "V_n", "gap", "converged"}, s.n.size(),
              [&](std::size_t k, std::vector<double>& v) {
                  v = {static_cast<double>(s.n[k]), s.Vn[k], s.gap[k], s.converged[k] ? 1.0 : 0.0};
              });
    c.file("sweep.csv");
    bool monotone = true;
    for (std::size_t k = 1; k < s.n.size(); ++k)
        if (s.n[k - 1] >= 4 && s.gap[k] > s.gap[k - 1]) monotone = false;
    c.diagnostics["V"] = s.V;
    c.diagnostics["V_n"] = s.Vn;
    c.diagnostics["gap"] = s.gap;
    c.diagnostics["monotone_from_4"] = monotone;
    for (bool ok : s.converged) c.converged = c.converged && ok;
}

int code_for(ErrorCode e) {
    switch (e) {
        case ErrorCode::FixedPointDiverged:
        case ErrorCode::PicardStalled: return kExitNoConvergence;
        default: return kExitValidation;
    }
}

}  // namespace

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"solve",          "forward",   "backward",        "particles",
                                                "separability-check", "smp-check", "regularize-sweep"};
    return names;
}

int run(const CliArgs& args, std::ostream& err) {
    try {
        Context c;
        c.cfg = load_config(args.config);
        if (args.experiment) c.cfg.experiment = *args.experiment;
        if (args.out) c.cfg.out = *args.out;
        if (args.seed) c.cfg.seed = args.seed;
        if (args.refine) {
            if (*args.refine < 0) throw Error(ErrorCode::InvalidArgument, "--refine must be >= 0");
            c.cfg.refine = *args.refine;
        }
        const auto& names = experiment_names();
        if (std::find(names.begin(), names.end(), c.cfg.experiment) == names.end())
            throw Error(ErrorCode::UnknownExperiment, "'" + c.cfg.experiment + "'");
        c.spec = build_model(c.cfg);
        c.grid = build_run_grid(c.cfg, c.spec);
        c.opt = mfc_options(c.cfg);
        c.out = c.cfg.out;
        fs::create_directories(c.out);

        c.manifest["version"] = MVK_VERSION;
        c.manifest["experiment"] = c.cfg.experiment;
        c.manifest["config_hash"] = config_hash(c.cfg.canonical);
        c.manifest["config"] = json::parse(c.cfg.canonical);
        c.manifest["grid"] = grid_json(c.grid);
        c.manifest["refine"] = c.cfg.refine;
        c.manifest["seed"] = c.cfg.seed ? json(*c.cfg.seed) : json(nullptr);
        const SolverBlock& s = c.cfg.solver;
        c.manifest["tolerances"] = {{"tol_pi", s.tol_pi},     {"tol_fp", s.tol_fp},   {"mu_floor", s.mu_floor},
                                    {"eps_neg", s.eps_neg},   {"theta", s.theta},     {"theta_fp", s.theta_fp},
                                    {"max_iter", s.max_iter}, {"max_iter_fp", s.max_iter_fp}};
        c.manifest["outputs"] = json::array();

        const std::string& e = c.cfg.experiment;
        if (e == "solve") exp_solve(c);
        else if (e == "forward") exp_forward(c);
        else if (e == "backward") exp_backward(c);
        else if (e == "particles") exp_particles(c);
        else if (e == "separability-check") exp_separability(c);
        else if (e == "smp-check") exp_smp(c);
        else exp_sweep(c);

        write_json(c.out / "diagnostics.json", c.diagnostics);
        c.file("diagnostics.json");
        write_json(c.out / "manifest.json", c.manifest);
        if (!c.converged) {
            err << "solver did not converge\n";
            return kExitNoConvergence;
        }
        return kExitOk;
    } catch (const Error& e) {
        err << e.what() << '\n';
        return code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace mvk
