#include "mvk/io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mvk/error.hpp"

namespace mvk {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::ConfigParse, msg); }

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(where + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : obj.items())
        if (!ok.count(k)) fail("unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) fail(where + "." + key + " must be a boolean");
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) fail(where + "." + key + " must be a non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) fail(where + "." + key + " must be an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) fail(where + "." + key + " must be a number");
        } else {
            if (!v.is_string()) fail(where + "." + key + " must be a string");
        }
        out = v.get<T>();
    } catch (const json::exception& e) {
        fail(where + "." + key + ": " + e.what());
    }
}

void positive(double v, const char* name) {
    if (!(v > 0.0)) fail(std::string(name) + " must be > 0");
}

void parse_model(const json& m, RunConfig& c) {
    check_keys(m, "model", {"name", "kappa", "c", "q", "gamma", "alpha", "q_T", "x_T", "sigma", "sigma0",
                            "box", "T", "m0", "s0", "zeta"});
    read(m, "name", c.model, "model");
    if (c.model != "lq_killing" && c.model != "constant_lambda") fail("unknown model '" + c.model + "'");
    LQParams& p = c.lq;
    read(m, "kappa", p.kappa, "model");
    read(m, "c", p.c, "model");
    read(m, "q", p.q, "model");
    read(m, "gamma", p.gamma, "model");
    read(m, "alpha", p.alpha, "model");
    read(m, "q_T", p.q_T, "model");
    read(m, "x_T", p.x_T, "model");
    read(m, "sigma", p.sigma, "model");
    read(m, "sigma0", p.sigma0, "model");
    read(m, "box", p.box, "model");
    read(m, "T", p.T, "model");
    read(m, "m0", p.m0, "model");
    read(m, "s0", p.s0, "model");
    read(m, "zeta", p.zeta, "model");
    p.kill_everywhere = c.model == "constant_lambda";
    positive(p.T, "model.T");
    positive(p.box, "model.box");
    positive(p.s0, "model.s0");
}

void parse_grid(const json& g, GridBlock& b) {
    check_keys(g, "grid", {"x_min", "x_max", "nx", "y_max", "ny", "nt", "extension"});
    read(g, "x_min", b.x_min, "grid");
    read(g, "x_max", b.x_max, "grid");
    read(g, "nx", b.nx, "grid");
    read(g, "y_max", b.y_max, "grid");
    read(g, "ny", b.ny, "grid");
    read(g, "nt", b.nt, "grid");
    read(g, "extension", b.extension, "grid");
    if (!(b.x_max > b.x_min)) fail("grid.x_max must exceed grid.x_min");
    if (b.nx < 3 || b.ny < 2 || b.nt < 2) fail("grid needs nx >= 3, ny >= 2, nt >= 2");
    positive(b.y_max, "grid.y_max");
    if (b.extension > 0.0) fail("grid.extension must be <= 0");
}

void parse_solver(const json& s, SolverBlock& b) {
    check_keys(s, "solver", {"theta", "tol_pi", "max_iter", "stall_window", "theta_fp", "tol_fp", "max_iter_fp",
                             "eta", "mu_floor", "eps_neg", "mfg", "serial"});
    read(s, "theta", b.theta, "solver");
    read(s, "tol_pi", b.tol_pi, "solver");
    read(s, "max_iter", b.max_iter, "solver");
    read(s, "stall_window", b.stall_window, "solver");
    read(s, "theta_fp", b.theta_fp, "solver");
    read(s, "tol_fp", b.tol_fp, "solver");
    read(s, "max_iter_fp", b.max_iter_fp, "solver");
    read(s, "eta", b.eta, "solver");
    read(s, "mu_floor", b.mu_floor, "solver");
    read(s, "eps_neg", b.eps_neg, "solver");
    read(s, "mfg", b.mfg, "solver");
    read(s, "serial", b.serial, "solver");
    positive(b.tol_pi, "solver.tol_pi");
    positive(b.tol_fp, "solver.tol_fp");
    if (!(b.theta > 0.0 && b.theta <= 1.0) || !(b.theta_fp > 0.0 && b.theta_fp <= 1.0))
        fail("damping must lie in (0, 1]");
    if (b.max_iter < 1 || b.max_iter_fp < 1 || b.stall_window < 1) fail("iteration limits must be >= 1");
    // the floors are compiled in; the config may restate them only
    if (b.mu_floor != kMuFloor || b.eps_neg != kEpsNeg) fail("mu_floor and eps_neg are fixed at 1e-12");
}

void parse_particles(const json& s, ParticleBlock& b) {
    check_keys(s, "particles", {"N", "coupling", "batches", "snapshot_every"});
    read(s, "N", b.N, "particles");
    std::string coupling = b.coupling == Coupling::None ? "none" : "empirical";
    read(s, "coupling", coupling, "particles");
    if (coupling == "none")
        b.coupling = Coupling::None;
    else if (coupling == "empirical")
        b.coupling = Coupling::Empirical;
    else
        fail("particles.coupling must be 'none' or 'empirical'");
    read(s, "batches", b.batches, "particles");
    read(s, "snapshot_every", b.snapshot_every, "particles");
    if (b.N < 2 || b.batches < 2) fail("particles need N >= 2 and batches >= 2");
}

void parse_sweep(const json& s, SweepBlock& b) {
    check_keys(s, "sweep", {"n", "g_points"});
    if (s.contains("n")) {
        if (!s["n"].is_array() || s["n"].empty()) fail("sweep.n must be a non-empty array");
        b.n.clear();
        for (const auto& v : s["n"]) {
            if (!v.is_number_integer() || v.get<int>() < 1) fail("sweep.n entries must be integers >= 1");
            b.n.push_back(v.get<int>());
        }
    }
    read(s, "g_points", b.g_points, "sweep");
    if (b.g_points < 5) fail("sweep.g_points must be >= 5");
}

}  // namespace

RunConfig parse_config(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(std::string("malformed JSON: ") + e.what());
    }
    RunConfig c;
    check_keys(doc, "config", {"model", "grid", "solver", "particles", "sweep", "experiment", "out", "seed",
                               "refine", "separability_levels", "smp_directions"});
    for (const char* block : {"model", "grid"})
        if (!doc.contains(block)) fail(std::string("missing block '") + block + "'");
    parse_model(doc["model"], c);
    parse_grid(doc["grid"], c.grid);
    if (doc.contains("solver")) parse_solver(doc["solver"], c.solver);
    if (doc.contains("particles")) parse_particles(doc["particles"], c.particles);
    if (doc.contains("sweep")) parse_sweep(doc["sweep"], c.sweep);
    read(doc, "experiment", c.experiment, "config");
    read(doc, "out", c.out, "config");
    if (doc.contains("seed")) {
        std::uint64_t s = 0;
        read(doc, "seed", s, "config");
        c.seed = s;
    }
    read(doc, "refine", c.refine, "config");
    read(doc, "separability_levels", c.separability_levels, "config");
    read(doc, "smp_directions", c.smp_directions, "config");
    if (c.refine < 0) fail("refine must be >= 0");
    if (c.separability_levels < 2) fail("separability_levels must be >= 2");
    if (c.smp_directions < 1) fail("smp_directions must be >= 1");
    c.canonical = doc.dump();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config(os.str());
}

ModelSpec build_model(const RunConfig& cfg) { return validate_model(make_lq_killing(cfg.lq)); }

Grid build_run_grid(const RunConfig& cfg, const ModelSpec& spec) {
    const GridBlock& b = cfg.grid;
    return refine(build_grid(b.x_min, b.x_max, b.nx, b.y_max, b.ny, b.nt, b.extension, spec.T), cfg.refine);
}

MfcOptions mfc_options(const RunConfig& cfg) {
    const SolverBlock& s = cfg.solver;
    MfcOptions o;
    o.theta = s.theta;
    o.tol = s.tol_pi;
    o.max_iter = s.max_iter;
    o.stall_window = s.stall_window;
    o.backward.fp.theta = s.theta_fp;
    o.backward.fp.tol = s.tol_fp;
    o.backward.fp.max_iter = s.max_iter_fp;
    o.backward.fp.eta = s.eta;
    o.backward.nonlocal = !s.mfg;
    o.backward.exec = s.serial ? Exec::Serial : Exec::Parallel;
    o.forward.exec = o.backward.exec;
    return o;
}

std::string config_hash(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, std::size_t rows,
               const std::function<void(std::size_t, std::vector<double>&)>& row) {
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    if (!f) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
    for (std::size_t k = 0; k < header.size(); ++k) std::fprintf(f, k ? ",%s" : "%s", header[k].c_str());
    std::fputc('\n', f);
    std::vector<double> v(header.size());
    for (std::size_t r = 0; r < rows; ++r) {
        row(r, v);
        for (std::size_t k = 0; k < v.size(); ++k) std::fprintf(f, k ? ",%.17g" : "%.17g", v[k]);
        std::fputc('\n', f);
    }
    std::fclose(f);
}

}  // namespace mvk
