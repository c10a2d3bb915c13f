#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvk/grid.hpp"
#include "mvk/hamiltonian.hpp"
#include "mvk/measures.hpp"
#include "mvk/mfc.hpp"
#include "mvk/model.hpp"
#include "mvk/particles.hpp"

namespace mvk {

struct GridBlock {
    double x_min = -4.0, x_max = 4.0;
    int nx = 81;
    double y_max = 6.0;
    int ny = 31;
    int nt = 100;
    double extension = 0.0;  // lowest y node, <= 0
};

struct SolverBlock {
    double theta = 0.5;      // Picard damping
    double tol_pi = 1e-6;
    int max_iter = 200;
    int stall_window = 30;
    double theta_fp = 0.5;   // inner fixed point
    double tol_fp = 1e-10;
    int max_iter_fp = 50;
    double eta = 1.0;
    double mu_floor = kMuFloor;
    double eps_neg = kEpsNeg;
    bool mfg = false;        // drop the nonlocal terms
    bool serial = false;
};

struct ParticleBlock {
    std::size_t N = 100000;
    Coupling coupling = Coupling::None;
    int batches = 10;
    int snapshot_every = 0;
};

struct SweepBlock {
    std::vector<int> n{1, 2, 4, 8, 16};
    int g_points = 2001;
};

struct RunConfig {
    std::string model = "lq_killing";  // lq_killing | constant_lambda
    LQParams lq;
    GridBlock grid;
    SolverBlock solver;
    ParticleBlock particles;
    SweepBlock sweep;
    int separability_levels = 3;
    int smp_directions = 20;
    std::string experiment = "solve";
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    int refine = 0;
    std::string canonical;  // normalised JSON of the document as read
};

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ConfigParse.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

ModelSpec build_model(const RunConfig& cfg);
/// Grid block refined `cfg.refine` times.
Grid build_run_grid(const RunConfig& cfg, const ModelSpec& spec);
MfcOptions mfc_options(const RunConfig& cfg);

/// FNV-1a 64 of the text, as 16 hex digits.
std::string config_hash(std::string_view text);

/// Comma separated, header row, 17 significant digits.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               std::size_t rows, const std::function<void(std::size_t, std::vector<double>&)>& row);

}  // namespace mvk
