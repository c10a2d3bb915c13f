#pragma once

#include <utility>
#include <vector>

#include "mvk/fields.hpp"

namespace mvk {

inline constexpr double kEpsNeg = 1e-12;

/// nu(x) = sum_j e^{-y_j} mu(x, y_j) dy. Each node carries a full cell of
/// width dy, so the weights are the cell-volume rule on the y grid.
SubProb1D s_map(const Density2D& mu);
void s_map(const Density2D& mu, SubProb1D& out);

/// d_p = W_p(eta_1, eta_2) + |m_1 - m_2| with eta_i the completion of v_i by
/// an atom of mass 1 - m_i at 0. Computed exactly for the atomic measures
/// with atoms at the grid nodes. p in {1, 2}.
double metric_dp(const SubProb1D& v1, const SubProb1D& v2, int p);

/// Bounded-Lipschitz distance sup{<v1 - v2, phi> : |phi| <= 1, Lip(phi) <= 1}.
double metric_d0(const SubProb1D& v1, const SubProb1D& v2);

/// Exact W_p between two finite atomic probability measures. Masses are
/// renormalised to 1 on entry.
double wasserstein_atoms(std::vector<std::pair<double, double>> a,
                         std::vector<std::pair<double, double>> b, int p);

/// Node masses  max(v_i, 0) * dx  as atoms.
std::vector<std::pair<double, double>> atoms_of(const SubProb1D& v);

struct DiscretizedMeasure {
    std::vector<double> nodes;    // x_i = -n + i 2^{-k}, i = 0..2n 2^k
    std::vector<double> weights;  // varpi_i = int psi_i dv
    SubProb1D reconstruction;     // sum_i varpi_i psibar_i on the input grid
};

/// Partition-of-unity discretisation by hat functions of half-width 2^{-k}
/// on [-n, n].
DiscretizedMeasure discretize_measure(const SubProb1D& v, int n, int k);

/// Smooth step: 0 for z <= 0, 1 for z >= 1.
double smooth_step(double z);
/// kappa_n(x) = smooth_step(n - |x|).
double cutoff(double x, int n);

/// Multiplies the density by kappa_n.
SubProb1D truncate_measure(const SubProb1D& v, int n);

/// Copy with entries below -kEpsNeg reported and small negatives clipped to
/// zero. Returns the most negative raw value through `worst`.
SubProb1D clipped(const SubProb1D& v, double* worst = nullptr);

}  // namespace mvk
