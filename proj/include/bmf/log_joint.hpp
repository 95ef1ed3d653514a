#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>

#include "bmf/distributions.hpp"
#include "bmf/error.hpp"
#include "bmf/factor_state.hpp"
#include "bmf/model_spec.hpp"
#include "bmf/observed_matrix.hpp"
#include "bmf/updates.hpp"

namespace bmf {

namespace detail {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();
inline constexpr double half_log_2pi = 0.91893853320467274178;

inline double log_normal(double x, double mean, double prec) {
    const double d = x - mean;
    return 0.5 * std::log(prec) - half_log_2pi - 0.5 * prec * d * d;
}

inline double log_truncated_normal(double x, double mean, double prec) {
    if (x < 0.0)
        return neg_inf;
    // normaliser P(X >= 0) = Phi(mean * sqrt(prec))
    return log_normal(x, mean, prec) - std::log(normal_cdf(mean * std::sqrt(prec)));
}

inline double log_gamma_density(double x, double shape, double rate) {
    if (!(x > 0.0))
        return neg_inf;
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

/// Log prior of one factor matrix. Hierarchical variables (ARD lambda_k,
/// Wishart (mu, Sigma), GLLI scales, GTTN (mu, tau), PGGG h) are held at
/// their current values; their own hyperprior densities are not included.
/// The L21 and volume priors are unnormalised.
inline double log_factor_prior(const FactorState& st, const ModelSpec& spec, Side side) {
    const auto& h = spec.hyper();
    const MatrixXd& f = st.factor(is_u(side));
    const auto& aux = st.aux(is_u(side));
    const FactorPrior prior = side_prior(spec, side);

    if (is_nonnegative_prior(prior) && (f.array() < 0.0).any())
        return neg_inf;

    double lp = 0.0;
    switch (prior) {
    case FactorPrior::Gaussian:
    case FactorPrior::GaussianUnivariate:
        for (Eigen::Index i = 0; i < f.size(); ++i)
            lp += log_normal(f.data()[i], 0.0, h.lambda);
        break;
    case FactorPrior::GaussianArd:
        for (Eigen::Index i = 0; i < f.rows(); ++i)
            for (Eigen::Index k = 0; k < f.cols(); ++k)
                lp += log_normal(f(i, k), 0.0, st.ard[k]);
        break;
    case FactorPrior::GaussianWishart: {
        const auto llt = robust_cholesky(aux.wishart_cov, "Wishart covariance");
        const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        const double k = static_cast<double>(f.cols());
        for (Eigen::Index i = 0; i < f.rows(); ++i) {
            const VectorXd d = f.row(i).transpose() - aux.wishart_mean;
            lp += -k * half_log_2pi - 0.5 * log_det - 0.5 * d.dot(llt.solve(d));
        }
        break;
    }
    case FactorPrior::Laplace: {
        // Marginal of the scale mixture: Laplace with rate sqrt(eta).
        const double rate = std::sqrt(h.eta);
        lp += static_cast<double>(f.size()) * std::log(0.5 * rate) - rate * f.cwiseAbs().sum();
        break;
    }
    case FactorPrior::LaplaceHier:
        for (Eigen::Index i = 0; i < f.rows(); ++i)
            for (Eigen::Index k = 0; k < f.cols(); ++k)
                lp += log_normal(f(i, k), 0.0, 1.0 / aux.laplace_var(i, k));
        break;
    case FactorPrior::Exponential:
        lp += static_cast<double>(f.size()) * std::log(h.lambda) - h.lambda * f.sum();
        break;
    case FactorPrior::ExponentialArd:
        for (Eigen::Index k = 0; k < f.cols(); ++k)
            lp += static_cast<double>(f.rows()) * std::log(st.ard[k]) - st.ard[k] * f.col(k).sum();
        break;
    case FactorPrior::TruncNormal: {
        const double mu = is_u(side) ? h.mu_u : h.mu_v;
        const double tau = is_u(side) ? h.tau_u : h.tau_v;
        for (Eigen::Index i = 0; i < f.size(); ++i)
            lp += log_truncated_normal(f.data()[i], mu, tau);
        break;
    }
    case FactorPrior::TruncNormalHier:
        for (Eigen::Index i = 0; i < f.rows(); ++i)
            for (Eigen::Index k = 0; k < f.cols(); ++k)
                lp += log_truncated_normal(f(i, k), aux.tn_mean(i, k), aux.tn_prec(i, k));
        break;
    case FactorPrior::L21:
        lp += -0.5 * h.lambda * f.rowwise().sum().squaredNorm();
        break;
    case FactorPrior::Volume:
    case FactorPrior::VolumeNonneg:
        lp += -0.5 * *h.gamma * (f.transpose() * f).determinant();
        break;
    case FactorPrior::Gamma:
        for (Eigen::Index i = 0; i < f.size(); ++i)
            lp += log_gamma_density(f.data()[i], h.a, h.b);
        break;
    case FactorPrior::GammaHier:
        for (Eigen::Index i = 0; i < f.rows(); ++i)
            for (Eigen::Index k = 0; k < f.cols(); ++k)
                lp += log_gamma_density(f(i, k), h.a, aux.gamma_rate[i]);
        break;
    case FactorPrior::None:
        break;
    }
    return lp;
}

} // namespace detail

/// Gaussian log likelihood of the observed cells at noise precision tau.
inline double gaussian_log_likelihood(const FactorState& st, const ObservedMatrix& data) {
    const double n = static_cast<double>(data.n_observed());
    return 0.5 * n * std::log(st.tau) - n * detail::half_log_2pi - 0.5 * st.tau * residual_sse(st, data);
}

inline double poisson_log_likelihood(const FactorState& st, const ObservedMatrix& data) {
    double ll = 0.0;
    for (const auto& c : data.cells()) {
        const double rate = st.U.row(c.row).dot(st.V.row(c.col));
        if (!(rate > 0.0)) {
            if (c.value != 0.0)
                return detail::neg_inf;
            continue;
        }
        ll += c.value * std::log(rate) - rate - std::lgamma(c.value + 1.0);
    }
    return ll;
}

/// Sum of the log priors of U and V (and of tau for Gaussian kinds).
inline double log_prior(const FactorState& st, const ModelSpec& spec) {
    double lp = detail::log_factor_prior(st, spec, Side::U);
    if (lp == detail::neg_inf)
        return lp;
    lp += detail::log_factor_prior(st, spec, Side::V);
    if (is_gaussian_likelihood(spec.kind()))
        lp += detail::log_gamma_density(st.tau, spec.hyper().alpha_tau, spec.hyper().beta_tau);
    return lp;
}

/// Unnormalised log posterior log p(R | theta) + log p(theta). States
/// outside the prior's support give -inf.
inline double log_joint(const FactorState& st, const ObservedMatrix& data, const ModelSpec& spec) {
    if (spec.kind() == ModelKind::NMF)
        throw InvalidParameter("NMF has no probabilistic model");
    const double lp = log_prior(st, spec);
    if (lp == detail::neg_inf)
        return lp;
    return lp + (is_poisson(spec.kind()) ? poisson_log_likelihood(st, data) : gaussian_log_likelihood(st, data));
}

} // namespace bmf
