#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mvk/fields.hpp"
#include "mvk/forward.hpp"
#include "mvk/grid.hpp"
#include "mvk/model.hpp"

namespace mvk {

enum class Coupling { None, Empirical };
enum class KillMode { Hard, Soft };

struct ParticleOptions {
    std::size_t N = 100000;
    std::optional<std::uint64_t> seed;
    Coupling coupling = Coupling::None;
    /// Measure flow read by b0 and f0 when coupling is None (one entry per
    /// time level). Without it the empirical measure is used.
    const std::vector<SubProb1D>* nu = nullptr;
    const CommonNoisePath* noise = nullptr;
    /// Keep full particle snapshots every k steps (0: only t = 0 and T).
    int snapshot_every = 0;
};

struct ParticleSnapshot {
    int level = 0;
    std::vector<double> X, Lambda;
    std::vector<std::uint8_t> alive;
};

struct ParticleTrajectory {
    Grid grid;
    std::size_t N = 0;
    std::uint64_t seed = 0;
    std::vector<double> theta;              // exponential clocks
    std::vector<ParticleSnapshot> snapshots;  // includes t = 0 and t = T
    std::vector<double> alive_fraction;     // per level
    std::vector<double> mean_weight;        // per level, mean of e^{-Lambda}
    /// Per-particle running cost (trapezoid in time) in both modes.
    std::vector<double> running_hard, running_soft;
    /// Measure flow used by the coefficients.
    std::vector<SubProb1D> coupling_nu;

    [[nodiscard]] const ParticleSnapshot& final() const { return snapshots.back(); }
    [[nodiscard]] const ParticleSnapshot* at_level(int n) const;
};

/// Euler-Maruyama for (X, Lambda) with shared common-noise increments and
/// clocks drawn at t = 0. Both kill modes are read off the same paths.
/// Throws SeedRequired.
ParticleTrajectory simulate_particles(const ModelSpec& spec, const Grid& grid, const FeedbackControl& g,
                                      const ParticleOptions& opt);

/// Histogram on the x grid (cell-centred, ends absorb the overflow),
/// normalised by the full count. `lo, hi` select a sub-ensemble.
SubProb1D empirical_subprob(const ParticleSnapshot& s, KillMode mode, const XGrid& grid, std::size_t lo = 0,
                            std::size_t hi = static_cast<std::size_t>(-1));

struct McEstimate {
    double J = 0.0;
    double half_width = 0.0;  // 95% batch-means interval
    std::vector<double> batches;
};

/// Weighted running cost plus psi on the empirical nu_T, with a batch-means
/// interval over `batches` sub-ensembles.
McEstimate estimate_cost_mc(const ModelSpec& spec, const ParticleTrajectory& traj, KillMode mode,
                            int batches = 10);

/// One pass of the (1/4, 1/2, 1/4) kernel with reflecting ends.
void smooth3(std::vector<double>& v);

}  // namespace mvk
