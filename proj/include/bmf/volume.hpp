#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

#include "bmf/distributions.hpp"
#include "bmf/factor_state.hpp"
#include "bmf/model_spec.hpp"
#include "bmf/observed_matrix.hpp"
#include "bmf/rng.hpp"
#include "bmf/updates.hpp"

namespace bmf {

/// Determinant and adjugate of the Gram matrix of the columns other than k.
/// The adjugate is kept as gamma_det * adj / det when the Gram matrix is
/// nonsingular (so it never overflows), and as gamma * adj otherwise.
struct VolumeTerms {
    double gamma_det = 0.0; ///< gamma * D
    MatrixXd scaled_adj;    ///< adjugate, scaled so that the quadratic forms below are gamma * w^T A w
};

namespace detail {

inline MatrixXd drop_index(const MatrixXd& g, int k) {
    const int n = static_cast<int>(g.rows());
    MatrixXd out(n - 1, n - 1);
    for (int a = 0, ra = 0; a < n; ++a) {
        if (a == k)
            continue;
        for (int b = 0, rb = 0; b < n; ++b) {
            if (b == k)
                continue;
            out(ra, rb++) = g(a, b);
        }
        ++ra;
    }
    return out;
}

inline VolumeTerms volume_terms(const MatrixXd& g_minus, double gamma) {
    const auto m = g_minus.rows();
    VolumeTerms t;
    if (gamma == 0.0) {
        t.scaled_adj = MatrixXd::Zero(m, m);
        return t;
    }
    Eigen::LLT<MatrixXd> llt(g_minus);
    bool regular = llt.info() == Eigen::Success;
    if (regular) {
        const VectorXd d = llt.matrixLLT().diagonal();
        regular = d.minCoeff() > 1e-10 * std::max(1.0, d.maxCoeff());
    }
    if (regular) {
        const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        t.gamma_det = std::exp(std::log(gamma) + log_det);
        // adj(G) = det(G) G^-1
        t.scaled_adj = t.gamma_det * llt.solve(MatrixXd::Identity(m, m));
        return t;
    }
    // Singular or nearly so: adj(G) = Q diag(prod_{j != i} l_j) Q^T.
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(g_minus);
    const VectorXd l = eig.eigenvalues().cwiseMax(0.0);
    VectorXd cof(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        double p = gamma;
        for (Eigen::Index j = 0; j < m; ++j)
            if (j != i)
                p *= l[j];
        cof[i] = p;
    }
    t.gamma_det = gamma * l.prod();
    t.scaled_adj = eig.eigenvectors() * cof.asDiagonal() * eig.eigenvectors().transpose();
    return t;
}

} // namespace detail

/// Conditional of U_ik under the volume prior exp(-gamma/2 det(U^T U)).
///
/// With W the other columns, w = W_i and c = W^T U_k - w U_ik, det(U^T U)
/// is quadratic in U_ik with leading coefficient D - w^T A w and linear
/// coefficient -2 w^T A c, where D = det(W^T W) and A = adj(W^T W). (The
/// adjugate is written as a second determinant in "A_{k~k~} = det(...)".)
/// For K = 1 the empty determinant is 1 and the adjugate term vanishes.
inline EntryPosterior volume_entry_posterior(const FactorState& st, const ObservedMatrix& data, double gamma,
                                             const MatrixXd& gram, int i, int k, bool nonneg) {
    const int kk = st.k();
    double s = 0.0;
    double t = 0.0;
    for (const auto& ent : data.row_entries(i)) {
        const double vk = st.V(ent.other, k);
        const double r = ent.value - st.U.row(i).dot(st.V.row(ent.other)) + st.U(i, k) * vk;
        s += vk * vk;
        t += r * vk;
    }
    EntryPosterior p{st.tau * s, st.tau * t, nonneg, 0.0};
    if (kk == 1) {
        p.precision += gamma;
        return p;
    }
    const auto terms = detail::volume_terms(detail::drop_index(gram, k), gamma);
    VectorXd w(kk - 1);
    VectorXd c(kk - 1);
    for (int a = 0, r = 0; a < kk; ++a) {
        if (a == k)
            continue;
        w[r] = st.U(i, a);
        c[r] = gram(a, k) - st.U(i, a) * st.U(i, k);
        ++r;
    }
    p.precision += terms.gamma_det - w.dot(terms.scaled_adj * w);
    p.linear += w.dot(terms.scaled_adj * c);
    return p;
}

/// Entry-wise update of U for GVG (Gaussian) and GVnG (truncated normal).
/// Every entry changes the Gram matrix U^T U, so rows are visited in order.
/// A non-positive or non-finite precision (possible only through rounding)
/// falls back to the likelihood-only conditional, or keeps the value when
/// there is no data on the row; each such event bumps volume_fallbacks.
inline void update_volume(FactorState& st, const ObservedMatrix& data, const ModelSpec& spec, Rng& rng) {
    const bool nonneg = spec.model_traits().u_prior == FactorPrior::VolumeNonneg;
    const double gamma = *spec.hyper().gamma;
    MatrixXd gram = st.U.transpose() * st.U;
    for (int i = 0; i < st.U.rows(); ++i) {
        for (int k = 0; k < st.k(); ++k) {
            EntryPosterior p = volume_entry_posterior(st, data, gamma, gram, i, k, nonneg);
            const double old = st.U(i, k);
            if (!(p.precision > 0.0) || !std::isfinite(p.precision) || !std::isfinite(p.linear)) {
                ++st.volume_fallbacks;
                double s = 0.0;
                double t = 0.0;
                for (const auto& ent : data.row_entries(i)) {
                    const double vk = st.V(ent.other, k);
                    s += vk * vk;
                    t += (ent.value - st.U.row(i).dot(st.V.row(ent.other)) + old * st.V(ent.other, k)) * vk;
                }
                if (!(s > 0.0))
                    continue;
                p = {st.tau * s, st.tau * t, nonneg, 0.0};
            }
            const double value = p.truncated ? sample_truncated_normal(p.mean(), p.precision, rng)
                                             : sample_gaussian(p.mean(), p.precision, rng);
            st.U(i, k) = value;
            // Gram update for the change in U_ik.
            const double delta = value - old;
            if (delta != 0.0) {
                for (int a = 0; a < st.k(); ++a) {
                    if (a == k)
                        continue;
                    gram(a, k) += delta * st.U(i, a);
                    gram(k, a) = gram(a, k);
                }
                gram(k, k) += value * value - old * old;
            }
        }
        // Refresh against drift once per row.
        if ((i + 1) % 64 == 0)
            gram = st.U.transpose() * st.U;
    }
}

} // namespace bmf
