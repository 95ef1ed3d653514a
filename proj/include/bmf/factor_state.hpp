#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace bmf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Per-side auxiliary variables. Only the members used by the active kind's
/// prior on that side are sized; the rest stay empty.
struct SideAux {
    MatrixXd laplace_var;  ///< GLL/GLLI: mixing variance per entry (lambda^U_ik)
    MatrixXd laplace_eta;  ///< GLLI: per-entry eta^U_ik
    MatrixXd tn_mean;      ///< GTTN: mu^U_ik
    MatrixXd tn_prec;      ///< GTTN: tau^U_ik
    VectorXd gamma_rate;   ///< PGGG: h^U_i
    VectorXd wishart_mean; ///< GGGW: mu_U
    MatrixXd wishart_cov;  ///< GGGW: Sigma_U
};

/// Latent Poisson allocations Z_ijk, one row of K counts per observed cell
/// (cell order of ObservedMatrix::cells()).
using LatentCounts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Current Gibbs state of one model.
struct FactorState {
    MatrixXd U;        ///< I x K
    MatrixXd V;        ///< J x K
    double tau = 1.0;  ///< Gaussian noise precision (unused for Poisson/NMF)
    VectorXd ard;      ///< GGGA/GEEA: lambda_k
    SideAux u_aux;
    SideAux v_aux;
    LatentCounts z;    ///< PGG/PGGG: |Omega| x K

    /// Volume-prior entries whose posterior precision came out non-positive
    /// and were resampled from the likelihood-only conditional.
    std::int64_t volume_fallbacks = 0;

    int k() const noexcept { return static_cast<int>(U.cols()); }

    MatrixXd& factor(bool u_side) noexcept { return u_side ? U : V; }
    const MatrixXd& factor(bool u_side) const noexcept { return u_side ? U : V; }
    SideAux& aux(bool u_side) noexcept { return u_side ? u_aux : v_aux; }
    const SideAux& aux(bool u_side) const noexcept { return u_side ? u_aux : v_aux; }
};

} // namespace bmf
