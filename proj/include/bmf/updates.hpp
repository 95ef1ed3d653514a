#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

#include "bmf/distributions.hpp"
#include "bmf/factor_state.hpp"
#include "bmf/linalg.hpp"
#include "bmf/model_spec.hpp"
#include "bmf/observed_matrix.hpp"
#include "bmf/parallel.hpp"
#include "bmf/rng.hpp"

// Gibbs conditionals for the Gaussian-likelihood kinds. Every factor update
// is written once and applied to either side: the U side iterates rows of R
// against V, the V side iterates columns of R against U.

namespace bmf {

enum class Side { U, V };

inline constexpr bool is_u(Side s) noexcept { return s == Side::U; }
inline constexpr Side other(Side s) noexcept { return s == Side::U ? Side::V : Side::U; }

inline FactorPrior side_prior(const ModelSpec& spec, Side s) {
    const auto t = spec.model_traits();
    return is_u(s) ? t.u_prior : t.v_prior;
}

struct GammaPosterior {
    double shape;
    double rate;
};

/// Sum over Omega of (R_ij - U_i . V_j)^2.
inline double residual_sse(const FactorState& st, const ObservedMatrix& data) {
    double sse = 0.0;
    for (const auto& c : data.cells()) {
        const double r = c.value - st.U.row(c.row).dot(st.V.row(c.col));
        sse += r * r;
    }
    return sse;
}

inline double training_mse(const FactorState& st, const ObservedMatrix& data) {
    return residual_sse(st, data) / static_cast<double>(data.n_observed());
}

// ---------------------------------------------------------------------------
// Noise precision
// ---------------------------------------------------------------------------

/// The sum runs over the observed cells. (The written posterior sums over k,
/// which is a typo: "sum_{k=1}^K (R_ij - U_i V_j)^2".)
inline GammaPosterior noise_posterior(const FactorState& st, const ObservedMatrix& data, const Hyperparams& h) {
    return {h.alpha_tau + 0.5 * data.n_observed(), h.beta_tau + 0.5 * residual_sse(st, data)};
}

inline void update_noise(FactorState& st, const ObservedMatrix& data, const ModelSpec& spec, Rng& rng) {
    const auto p = noise_posterior(st, data, spec.hyper());
    st.tau = sample_gamma(p.shape, p.rate, rng);
}

// ---------------------------------------------------------------------------
// Hierarchical parameters
// ---------------------------------------------------------------------------

inline GammaPosterior ard_posterior(const FactorState& st, const ModelSpec& spec, int k) {
    const auto& h = spec.hyper();
    const double n = static_cast<double>(st.U.rows() + st.V.rows());
    if (spec.kind() == ModelKind::GEEA)
        return {h.alpha0 + n, h.beta0 + st.U.col(k).sum() + st.V.col(k).sum()};
    return {h.alpha0 + 0.5 * n, h.beta0 + 0.5 * (st.U.col(k).squaredNorm() + st.V.col(k).squaredNorm())};
}

inline void update_ard(FactorState& st, const ModelSpec& spec, Rng& rng) {
    for (int k = 0; k < st.k(); ++k) {
        const auto p = ard_posterior(st, spec, k);
        st.ard[k] = sample_gamma(p.shape, p.rate, rng);
    }
}

/// NIW prior from the (resolved) hyperparameters.
inline NormalInverseWishartParams niw_prior(const Hyperparams& h) {
    return {*h.mu0, h.beta0_niw, *h.nu0, *h.w0};
}

/// Conjugate NIW update from the rows of F, using the centred scatter
/// matrix sum_i (F_i - Fbar)(F_i - Fbar)^T.
inline NormalInverseWishartParams niw_posterior(const MatrixXd& f, const NormalInverseWishartParams& prior) {
    const double n = static_cast<double>(f.rows());
    if (f.rows() == 0)
        return prior;
    const VectorXd mean = f.colwise().mean().transpose();
    const MatrixXd centred = f.rowwise() - mean.transpose();
    const VectorXd diff = mean - prior.mu0;

    NormalInverseWishartParams post;
    post.beta0 = prior.beta0 + n;
    post.nu0 = prior.nu0 + n;
    post.mu0 = (prior.beta0 * prior.mu0 + n * mean) / post.beta0;
    post.w0 = prior.w0 + centred.transpose() * centred + (prior.beta0 * n / post.beta0) * diff * diff.transpose();
    post.w0 = 0.5 * (post.w0 + post.w0.transpose());
    return post;
}

inline void update_wishart(FactorState& st, const ModelSpec& spec, Side side, Rng& rng) {
    const auto draw = sample_niw(niw_posterior(st.factor(is_u(side)), niw_prior(spec.hyper())), rng);
    auto& aux = st.aux(is_u(side));
    aux.wishart_mean = draw.mean;
    aux.wishart_cov = draw.covariance;
}

/// Inverse mixing variances of the Laplace scale mixture, and for GLLI the
/// per-entry eta. One stream per row of the side.
inline void update_laplace_scales(FactorState& st, const ModelSpec& spec, Side side, std::uint64_t seed,
                                  bool parallel) {
    const auto& h = spec.hyper();
    const bool hier = side_prior(spec, side) == FactorPrior::LaplaceHier;
    const MatrixXd& f = st.factor(is_u(side));
    auto& aux = st.aux(is_u(side));
    parallel_for(static_cast<int>(f.rows()), parallel, [&](int i) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        for (int k = 0; k < f.cols(); ++k) {
            const double eta = hier ? aux.laplace_eta(i, k) : h.eta;
            const double abs_u = std::max(std::abs(f(i, k)), 1e-12);
            const double inv_var = sample_inverse_gaussian(std::sqrt(eta) / abs_u, eta, rng);
            aux.laplace_var(i, k) = 1.0 / inv_var;
            if (hier) {
                const double a = aux.laplace_var(i, k) + *h.lambda_ig / (*h.mu_ig * *h.mu_ig);
                aux.laplace_eta(i, k) = 1.0 / sample_inverse_gaussian(std::sqrt(a / *h.lambda_ig), a, rng);
            }
        }
    });
}

/// GTTN per-entry (mu, tau) of the truncated-normal prior.
inline void update_gttn_hyper(FactorState& st, const ModelSpec& spec, Side side, std::uint64_t seed, bool parallel) {
    const auto& h = spec.hyper();
    const MatrixXd& f = st.factor(is_u(side));
    auto& aux = st.aux(is_u(side));
    parallel_for(static_cast<int>(f.rows()), parallel, [&](int i) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        for (int k = 0; k < f.cols(); ++k) {
            const double t = aux.tn_prec(i, k) + h.tau_mu;
            const double m = (aux.tn_prec(i, k) * f(i, k) + h.mu_mu * h.tau_mu) / t;
            aux.tn_mean(i, k) = sample_gaussian(m, t, rng);
            const double d = f(i, k) - aux.tn_mean(i, k);
            aux.tn_prec(i, k) = sample_gamma(h.a_tn + 0.5, h.b_tn + 0.5 * d * d, rng);
        }
    });
}

// ---------------------------------------------------------------------------
// Multivariate row updates (GGG, GGGA, GGGW, GLL, GLLI and the Gaussian side
// of GEG/GVG/GVnG)
// ---------------------------------------------------------------------------

/// Canonical parameters (P_i + tau sum_j G_j G_j^T, m_i + tau sum_j R_ij G_j)
/// of one row's Gaussian conditional.
struct CanonicalGaussian {
    MatrixXd precision;
    VectorXd linear;
};

namespace detail {

/// Prior precision and linear term shared by all rows of a side, except the
/// Laplace priors, whose precision is per row (filled in by row_prior).
struct SidePrior {
    FactorPrior kind;
    MatrixXd precision;
    VectorXd linear;
};

inline SidePrior side_prior_terms(const FactorState& st, const ModelSpec& spec, Side side) {
    const int k = st.k();
    SidePrior p{side_prior(spec, side), MatrixXd::Zero(k, k), VectorXd::Zero(k)};
    switch (p.kind) {
    case FactorPrior::GaussianArd:
        p.precision.diagonal() = st.ard;
        break;
    case FactorPrior::GaussianWishart: {
        const auto& aux = st.aux(is_u(side));
        const auto llt = robust_cholesky(aux.wishart_cov, "Wishart covariance");
        p.precision = llt.solve(MatrixXd::Identity(k, k));
        p.precision = 0.5 * (p.precision + p.precision.transpose());
        p.linear = p.precision * aux.wishart_mean;
        break;
    }
    case FactorPrior::Laplace:
    case FactorPrior::LaplaceHier:
        break;
    default:
        p.precision.diagonal().setConstant(spec.hyper().lambda);
        break;
    }
    return p;
}

inline CanonicalGaussian row_canonical(const FactorState& st, const ObservedMatrix& data, const SidePrior& prior,
                                       Side side, int i) {
    const MatrixXd& g = st.factor(!is_u(side));
    CanonicalGaussian c{prior.precision, prior.linear};
    if (prior.kind == FactorPrior::Laplace || prior.kind == FactorPrior::LaplaceHier)
        c.precision.diagonal() = st.aux(is_u(side)).laplace_var.row(i).cwiseInverse().transpose();

    const auto& entries = data.lines(is_u(side))[static_cast<std::size_t>(i)];
    if (!entries.empty()) {
        MatrixXd gi(static_cast<Eigen::Index>(entries.size()), g.cols());
        VectorXd r(gi.rows());
        for (std::size_t e = 0; e < entries.size(); ++e) {
            gi.row(static_cast<Eigen::Index>(e)) = g.row(entries[e].other);
            r[static_cast<Eigen::Index>(e)] = entries[e].value;
        }
        c.precision.selfadjointView<Eigen::Lower>().rankUpdate(gi.transpose(), st.tau);
        c.precision.triangularView<Eigen::StrictlyUpper>() = c.precision.transpose();
        c.linear.noalias() += st.tau * (gi.transpose() * r);
    }
    return c;
}

} // namespace detail

/// Conditional of row i of the side's factor, in canonical form.
inline CanonicalGaussian row_posterior(const FactorState& st, const ObservedMatrix& data, const ModelSpec& spec,
                                       Side side, int i) {
    return detail::row_canonical(st, data, detail::side_prior_terms(st, spec, side), side, i);
}

/// Redraw every row of one side from its multivariate Gaussian conditional.
/// Rows are conditionally independent, so they run in parallel, each with
/// its own stream derived from `seed`.
inline void update_rows_multivariate(FactorState& st, const ObservedMatrix& data, const ModelSpec& spec, Side side,
                                     std::uint64_t seed, bool parallel) {
    const auto prior = detail::side_prior_terms(st, spec, side);
    MatrixXd& f = st.factor(is_u(side));
    parallel_for(static_cast<int>(f.rows()), parallel, [&](int i) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        const auto c = detail::row_canonical(st, data, prior, side, i);
        f.row(i) = sample_gaussian_canonical(c.precision, c.linear, rng).transpose();
    });
}

// ---------------------------------------------------------------------------
// Entry-wise updates (GGGU, GEE, GEEA, GTT, GTTN, GL21, U side of GEG)
// ---------------------------------------------------------------------------

/// Conditional of one entry F_ik: a Gaussian with the given precision and
/// linear term, truncated to [0, inf) when `truncated`. For the exponential
/// priors the precision can be zero (no data on the line, or an all-zero
/// column of the other factor); the conditional is then the prior itself.
struct EntryPosterior {
    double precision;
    double linear;
    bool truncated;
    double prior_rate; ///< exponential priors: rate used when precision == 0

    double mean() const { return linear / precision; }
};

namespace detail {

/// Prior part of one entry's conditional: (precision, linear, truncated, rate).
inline EntryPosterior entry_prior(const FactorState& st, const ModelSpec& spec, Side side, FactorPrior prior,
                                  int i, int k) {
    const auto& h = spec.hyper();
    const MatrixXd& f = st.factor(is_u(side));
    switch (prior) {
    case FactorPrior::GaussianUnivariate:
        return {h.lambda, 0.0, false, 0.0};
    case FactorPrior::Exponential:
        return {0.0, -h.lambda, true, h.lambda};
    case FactorPrior::ExponentialArd:
        return {0.0, -st.ard[k], true, st.ard[k]};
    case FactorPrior::TruncNormal: {
        const double mu = is_u(side) ? h.mu_u : h.mu_v;
        const double tau = is_u(side) ? h.tau_u : h.tau_v;
        return {tau, mu * tau, true, 0.0};
    }
    case FactorPrior::TruncNormalHier: {
        const auto& aux = st.aux(is_u(side));
        return {aux.tn_prec(i, k), aux.tn_mean(i, k) * aux.tn_prec(i, k), true, 0.0};
    }
    case FactorPrior::L21:
        return {h.lambda, -h.lambda * (f.row(i).sum() - f(i, k)), true, 0.0};
    default:
        throw InvalidParameter("entry-wise update called for a prior without one");
    }
}

inline double draw_entry(const EntryPosterior& p, Rng& rng) {
    if (!(p.precision > 0.0)) {
        if (p.prior_rate > 0.0)
            return sample_exponential(p.prior_rate, rng);
        throw InvalidParameter("entry conditional has zero precision");
    }
    const double mean = p.mean();
    return p.truncated ? sample_truncated_normal(mean, p.precision, rng) : sample_gaussian(mean, p.precision, rng);
}

/// Sequential sweep over k of one row, keeping the residuals of the row's
/// observations in sync with each new value.
template <typename PriorFn>
void update_row_entries(FactorState& st, const ObservedMatrix& data, Side side, int i, PriorFn&& prior_of,
                        Rng& rng) {
    MatrixXd& f = st.factor(is_u(side));
    const MatrixXd& g = st.factor(!is_u(side));
    const auto& entries = data.lines(is_u(side))[static_cast<std::size_t>(i)];
    const auto n = static_cast<Eigen::Index>(entries.size());

    VectorXd res(n);
    for (Eigen::Index e = 0; e < n; ++e) {
        const auto& ent = entries[static_cast<std::size_t>(e)];
        res[e] = ent.value - f.row(i).dot(g.row(ent.other));
    }
    for (int k = 0; k < f.cols(); ++k) {
        double s = 0.0;
        double t = 0.0;
        const double old = f(i, k);
        for (Eigen::Index e = 0; e < n; ++e) {
            const double gk = g(entries[static_cast<std::size_t>(e)].other, k);
            s += gk * gk;
            t += (res[e] + old * gk) * gk;
        }
        EntryPosterior p = prior_of(i, k);
        p.precision += st.tau * s;
        p.linear += st.tau * t;
        const double value = draw_entry(p, rng);
        f(i, k) = value;
        const double delta = value - old;
        if (delta != 0.0)
            for (Eigen::Index e = 0; e < n; ++e)
                res[e] -= delta * g(entries[static_cast<std::size_t>(e)].other, k);
    }
}

} // namespace detail

/// Conditional of entry (i, k) on one side given everything else.
inline EntryPosterior entry_posterior(const FactorState& st, const ObservedMatrix& data, const ModelSpec& spec,
                                      Side side, int i, int k) {
    const MatrixXd& f = st.factor(is_u(side));
    const MatrixXd& g = st.factor(!is_u(side));
    EntryPosterior p = detail::entry_prior(st, spec, side, side_prior(spec, side), i, k);
    double s = 0.0;
    double t = 0.0;
    for (const auto& ent : data.lines(is_u(side))[static_cast<std::size_t>(i)]) {
        const double gk = g(ent.other, k);
        const double r = ent.value - f.row(i).dot(g.row(ent.other)) + f(i, k) * gk;
        s += gk * gk;
        t += r * gk;
    }
    p.precision += st.tau * s;
    p.linear += st.tau * t;
    return p;
}

/// Redraw every entry of one side, row by row. Rows are independent given
/// the other factor; within a row the K entries are drawn in order.
inline void update_entries_univariate(FactorState& st, const ObservedMatrix& data, const ModelSpec& spec, Side side,
                                      std::uint64_t seed, bool parallel) {
    const FactorPrior prior = side_prior(spec, side);
    const int n = static_cast<int>(st.factor(is_u(side)).rows());
    parallel_for(n, parallel, [&](int i) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        detail::update_row_entries(
            st, data, side, i, [&](int r, int k) { return detail::entry_prior(st, spec, side, prior, r, k); },
            rng);
    });
}

} // namespace bmf
