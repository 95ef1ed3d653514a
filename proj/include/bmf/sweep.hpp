#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

#include "bmf/distributions.hpp"
#include "bmf/error.hpp"
#include "bmf/factor_state.hpp"
#include "bmf/model_spec.hpp"
#include "bmf/nmf.hpp"
#include "bmf/observed_matrix.hpp"
#include "bmf/poisson.hpp"
#include "bmf/rng.hpp"
#include "bmf/updates.hpp"
#include "bmf/volume.hpp"

namespace bmf {

/// Stream coordinates within one sweep. Every update phase draws from its
/// own stream derived from (seed, sweep, tag), and row-parallel phases
/// derive one more level per row.
enum class StreamTag : std::uint64_t {
    Noise = 1,
    Ard,
    WishartU,
    WishartV,
    HyperU,
    HyperV,
    FactorU,
    FactorV,
    Poisson,
    Init,
};

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t sweep, StreamTag tag) {
    return derive_seed(seed, {sweep, static_cast<std::uint64_t>(tag)});
}

namespace detail {

inline void draw_side_from_prior(FactorState& st, const ModelSpec& spec, Side side, int rows, Rng& rng) {
    const auto& h = spec.hyper();
    const int k = spec.k();
    const FactorPrior prior = side_prior(spec, side);
    MatrixXd& f = st.factor(is_u(side));
    SideAux& aux = st.aux(is_u(side));
    f.resize(rows, k);

    switch (prior) {
    case FactorPrior::Gaussian:
    case FactorPrior::GaussianUnivariate:
        for (Eigen::Index i = 0; i < f.size(); ++i)
            f.data()[i] = sample_gaussian(0.0, h.lambda, rng);
        break;
    case FactorPrior::GaussianArd:
        for (int i = 0; i < rows; ++i)
            for (int c = 0; c < k; ++c)
                f(i, c) = sample_gaussian(0.0, st.ard[c], rng);
        break;
    case FactorPrior::GaussianWishart:
        aux.wishart_mean = *h.mu0;
        aux.wishart_cov = *h.w0;
        for (int i = 0; i < rows; ++i)
            f.row(i) = sample_multivariate_gaussian(aux.wishart_mean, aux.wishart_cov, rng).transpose();
        break;
    case FactorPrior::Laplace:
    case FactorPrior::LaplaceHier:
        aux.laplace_var.resize(rows, k);
        if (prior == FactorPrior::LaplaceHier)
            aux.laplace_eta = MatrixXd::Constant(rows, k, *h.mu_ig);
        for (int i = 0; i < rows; ++i)
            for (int c = 0; c < k; ++c) {
                const double eta = prior == FactorPrior::LaplaceHier ? aux.laplace_eta(i, c) : h.eta;
                aux.laplace_var(i, c) = sample_exponential(0.5 * eta, rng);
                f(i, c) = sample_gaussian(0.0, 1.0 / aux.laplace_var(i, c), rng);
            }
        break;
    case FactorPrior::Exponential:
        for (Eigen::Index i = 0; i < f.size(); ++i)
            f.data()[i] = sample_exponential(h.lambda, rng);
        break;
    case FactorPrior::ExponentialArd:
        for (int i = 0; i < rows; ++i)
            for (int c = 0; c < k; ++c)
                f(i, c) = sample_exponential(st.ard[c], rng);
        break;
    case FactorPrior::TruncNormal: {
        const double mu = is_u(side) ? h.mu_u : h.mu_v;
        const double tau = is_u(side) ? h.tau_u : h.tau_v;
        for (Eigen::Index i = 0; i < f.size(); ++i)
            f.data()[i] = sample_truncated_normal(mu, tau, rng);
        break;
    }
    case FactorPrior::TruncNormalHier:
        aux.tn_mean = MatrixXd::Constant(rows, k, h.mu_mu);
        aux.tn_prec = MatrixXd::Constant(rows, k, h.a_tn / h.b_tn);
        for (int i = 0; i < rows; ++i)
            for (int c = 0; c < k; ++c)
                f(i, c) = sample_truncated_normal(aux.tn_mean(i, c), aux.tn_prec(i, c), rng);
        break;
    case FactorPrior::L21:
        // No direct sampler: start from Exp(lambda) and run prior-only
        // Gibbs passes over each row.
        for (Eigen::Index i = 0; i < f.size(); ++i)
            f.data()[i] = sample_exponential(h.lambda, rng);
        for (int pass = 0; pass < 20; ++pass)
            for (int i = 0; i < rows; ++i)
                for (int c = 0; c < k; ++c)
                    f(i, c) = sample_truncated_normal(-(f.row(i).sum() - f(i, c)), h.lambda, rng);
        break;
    case FactorPrior::Volume:
    case FactorPrior::VolumeNonneg:
        for (Eigen::Index i = 0; i < f.size(); ++i) {
            const double x = sample_gaussian(0.0, h.lambda, rng);
            f.data()[i] = prior == FactorPrior::VolumeNonneg ? std::abs(x) : x;
        }
        break;
    case FactorPrior::Gamma:
        for (Eigen::Index i = 0; i < f.size(); ++i)
            f.data()[i] = sample_gamma(h.a, h.b, rng);
        break;
    case FactorPrior::GammaHier:
        aux.gamma_rate = VectorXd::Constant(rows, h.b_prime);
        for (int i = 0; i < rows; ++i)
            for (int c = 0; c < k; ++c)
                f(i, c) = sample_gamma(h.a, aux.gamma_rate[i], rng);
        break;
    case FactorPrior::None:
        f.setZero();
        break;
    }
}

} // namespace detail

/// A draw from the prior: every factor from its prior, with hierarchical
/// variables at their prior means, and tau from its prior.
inline FactorState prior_state(const ModelSpec& spec, int rows, int cols, std::uint64_t seed) {
    FactorState st;
    Rng rng(stream_seed(seed, 0, StreamTag::Init));
    const auto& h = spec.hyper();
    if (uses_ard(spec.kind()))
        st.ard = VectorXd::Constant(spec.k(), h.alpha0 / h.beta0);
    detail::draw_side_from_prior(st, spec, Side::U, rows, rng);
    detail::draw_side_from_prior(st, spec, Side::V, cols, rng);
    if (is_gaussian_likelihood(spec.kind()))
        st.tau = sample_gamma(h.alpha_tau, h.beta_tau, rng);
    return st;
}

/// Redraw one side's factor with the update its prior calls for.
inline void update_factor(FactorState& st, const ObservedMatrix& data, const ModelSpec& spec, Side side,
                          std::uint64_t seed, bool parallel) {
    switch (side_prior(spec, side)) {
    case FactorPrior::Gaussian:
    case FactorPrior::GaussianArd:
    case FactorPrior::GaussianWishart:
    case FactorPrior::Laplace:
    case FactorPrior::LaplaceHier:
        update_rows_multivariate(st, data, spec, side, seed, parallel);
        break;
    case FactorPrior::Volume:
    case FactorPrior::VolumeNonneg: {
        Rng rng(seed);
        update_volume(st, data, spec, rng);
        break;
    }
    case FactorPrior::Gamma:
    case FactorPrior::GammaHier:
        throw InvalidParameter("Gamma factors are updated through update_poisson");
    case FactorPrior::None:
        throw InvalidParameter("NMF factors are updated through nmf_step");
    default:
        update_entries_univariate(st, data, spec, side, seed, parallel);
        break;
    }
}

/// Alternating U/V passes run at the prior-drawn tau before the first sweep.
inline constexpr int kWarmPasses = 10;

/// Starting state of a fit: a prior draw, then (Gaussian kinds) kWarmPasses
/// passes of the U and V conditionals with tau held at its drawn value.
/// Otherwise the first noise update sees the residual of prior-drawn factors,
/// and on uncentred data tau can collapse so far that the chain stays near
/// U V^T = 0. A single pass was not always enough at 50x40, K=5.

inline FactorState initial_state(const ModelSpec& spec, const ObservedMatrix& data, std::uint64_t seed,
                                 bool parallel = false) {
    if (spec.kind() == ModelKind::NMF) {
        FactorState st;
        Rng rng(stream_seed(seed, 0, StreamTag::Init));
        nmf_init(st.U, st.V, data, spec.k(), rng);
        return st;
    }
    FactorState st = prior_state(spec, data.rows(), data.cols(), seed);
    if (is_poisson(spec.kind())) {
        st.z = LatentCounts::Zero(data.n_observed(), spec.k());
    } else {
        const std::uint64_t warm = derive_seed(seed, {static_cast<std::uint64_t>(StreamTag::Init)});
        for (int pass = 0; pass < kWarmPasses; ++pass) {
            const auto p = static_cast<std::uint64_t>(pass);
            update_factor(st, data, spec, Side::U, stream_seed(warm, p, StreamTag::FactorU), parallel);
            update_factor(st, data, spec, Side::V, stream_seed(warm, p, StreamTag::FactorV), parallel);
        }
    }
    return st;
}

/// Hierarchical variables of a Gaussian-likelihood kind.
inline void update_hierarchical(FactorState& st, const ModelSpec& spec, std::uint64_t seed, std::uint64_t sweep,
                                bool parallel) {
    if (uses_ard(spec.kind())) {
        Rng rng(stream_seed(seed, sweep, StreamTag::Ard));
        update_ard(st, spec, rng);
    }
    for (Side side : {Side::U, Side::V}) {
        const auto tag = is_u(side) ? StreamTag::HyperU : StreamTag::HyperV;
        switch (side_prior(spec, side)) {
        case FactorPrior::GaussianWishart: {
            Rng rng(stream_seed(seed, sweep, is_u(side) ? StreamTag::WishartU : StreamTag::WishartV));
            update_wishart(st, spec, side, rng);
            break;
        }
        case FactorPrior::Laplace:
        case FactorPrior::LaplaceHier:
            update_laplace_scales(st, spec, side, stream_seed(seed, sweep, tag), parallel);
            break;
        case FactorPrior::TruncNormalHier:
            update_gttn_hyper(st, spec, side, stream_seed(seed, sweep, tag), parallel);
            break;
        default:
            break;
        }
    }
}

/// One full sweep (sweeps are numbered from 1). Gaussian kinds: noise,
/// hierarchical variables, U, V. Poisson kinds: Z, U, h^U, V, h^V. NMF: one
/// multiplicative update.
inline void gibbs_sweep(FactorState& st, const ObservedMatrix& data, const ModelSpec& spec, std::uint64_t seed,
                        std::uint64_t sweep, bool parallel) {
    if (spec.kind() == ModelKind::NMF) {
        nmf_step(st.U, st.V, data);
    } else if (is_poisson(spec.kind())) {
        update_poisson(st, data, spec, stream_seed(seed, sweep, StreamTag::Poisson), parallel);
    } else {
        {
            Rng rng(stream_seed(seed, sweep, StreamTag::Noise));
            update_noise(st, data, spec, rng);
        }
        update_hierarchical(st, spec, seed, sweep, parallel);
        update_factor(st, data, spec, Side::U, stream_seed(seed, sweep, StreamTag::FactorU), parallel);
        update_factor(st, data, spec, Side::V, stream_seed(seed, sweep, StreamTag::FactorV), parallel);
    }
    if (!st.U.allFinite() || !st.V.allFinite())
        throw NumericalFailure(spec.name() + ": factor matrices became non-finite at sweep " + std::to_string(sweep));
}

} // namespace bmf
