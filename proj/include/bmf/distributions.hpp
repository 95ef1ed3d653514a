#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "bmf/error.hpp"
#include "bmf/linalg.hpp"
#include "bmf/rng.hpp"

namespace bmf {

// ---------------------------------------------------------------------------
// Standard normal helpers
// ---------------------------------------------------------------------------

inline double normal_pdf(double x) noexcept {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Phi(x), the standard normal CDF.
inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Phi^-1(p) for p in (0, 1).
inline double normal_quantile(double p) {
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

namespace detail {

inline void require(bool ok, const char* dist, const char* what) {
    if (!ok) [[unlikely]]
        throw InvalidParameter(std::string(dist) + ": " + what);
}

inline bool positive(double x) { return x > 0.0 && std::isfinite(x); }

} // namespace detail

// ---------------------------------------------------------------------------
// Scalar samplers
// ---------------------------------------------------------------------------

/// N(mean, 1/precision).
inline double sample_gaussian(double mean, double precision, Rng& rng) {
    detail::require(std::isfinite(mean), "Gaussian", "mean must be finite");
    detail::require(detail::positive(precision), "Gaussian", "precision must be > 0");
    std::normal_distribution<double> normal;
    return mean + normal(rng) / std::sqrt(precision);
}

/// Gamma with shape `shape` and rate `rate`.
inline double sample_gamma(double shape, double rate, Rng& rng) {
    detail::require(detail::positive(shape), "Gamma", "shape must be > 0");
    detail::require(detail::positive(rate), "Gamma", "rate must be > 0");
    std::gamma_distribution<double> gamma(shape, 1.0 / rate);
    double x = gamma(rng);
    // Shapes well below one can underflow to exactly zero; the density has
    // no mass there, so redraw.
    while (!(x > 0.0))
        x = gamma(rng);
    return x;
}

inline double sample_exponential(double rate, Rng& rng) {
    detail::require(detail::positive(rate), "Exponential", "rate must be > 0");
    return -std::log(rng.uniform()) / rate;
}

/// Laplace with location `mu` and scale `scale`.
inline double sample_laplace(double mu, double scale, Rng& rng) {
    detail::require(std::isfinite(mu), "Laplace", "location must be finite");
    detail::require(detail::positive(scale), "Laplace", "scale must be > 0");
    const double u = rng.uniform() - 0.5;
    return mu - scale * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
}

/// Inverse Gaussian IG(mu, lambda) by the transformation-with-uniform-
/// correction method (Michael, Schucany and Haas), written in a form that
/// stays accurate when mu*y/lambda is huge.
inline double sample_inverse_gaussian(double mu, double lambda, Rng& rng) {
    detail::require(detail::positive(mu), "InverseGaussian", "mean must be > 0");
    detail::require(detail::positive(lambda), "InverseGaussian", "shape must be > 0");
    std::normal_distribution<double> normal;
    const double nu = normal(rng);
    const double w = mu * nu * nu / (2.0 * lambda);
    // mu * (1 + w - sqrt(w^2 + 2w)) without cancellation
    const double x = mu / (1.0 + w + std::sqrt(w * w + 2.0 * w));
    if (rng.uniform() * (mu + x) <= mu)
        return x;
    return mu * (mu / x);
}

/// TN(mu, tau): N(mu, 1/tau) restricted to [0, inf).
///
/// Inverse-CDF sampling while the standardised lower bound a = -mu*sqrt(tau)
/// is below 4; beyond that, Robert's exponential rejection sampler, which
/// has acceptance rate close to one in the far tail.
inline double sample_truncated_normal(double mu, double tau, Rng& rng) {
    detail::require(std::isfinite(mu), "TruncatedNormal", "mean must be finite");
    detail::require(detail::positive(tau), "TruncatedNormal", "precision must be > 0");
    const double sigma = 1.0 / std::sqrt(tau);
    const double a = -mu / sigma;

    double z;
    if (a < 4.0) {
        // Z >= a  <=>  -Z <= -a; sample the reflected lower tail.
        const double upper_mass = normal_cdf(-a);
        z = -normal_quantile(rng.uniform() * upper_mass);
    } else {
        const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
        while (true) {
            z = a - std::log(rng.uniform()) / alpha;
            const double d = z - alpha;
            if (std::log(rng.uniform()) <= -0.5 * d * d)
                break;
        }
    }
    const double x = mu + sigma * z;
    return x > 0.0 ? x : 0.0; // rounding only; z >= a already
}

inline std::int64_t sample_poisson(double rate, Rng& rng) {
    detail::require(rate >= 0.0 && std::isfinite(rate), "Poisson", "rate must be >= 0");
    if (rate == 0.0)
        return 0;
    std::poisson_distribution<std::int64_t> poisson(rate);
    return poisson(rng);
}

/// Multinomial(n, p) by sequential conditional binomials. `p` must sum to
/// one within 1e-12 and be nonnegative.
inline std::vector<std::int64_t> sample_multinomial(std::int64_t n, const VectorXd& p, Rng& rng) {
    detail::require(n >= 0, "Multinomial", "count must be >= 0");
    detail::require(p.size() >= 1, "Multinomial", "needs at least one category");
    detail::require((p.array() >= 0.0).all() && p.allFinite(), "Multinomial",
                    "probabilities must be nonnegative");
    detail::require(std::abs(p.sum() - 1.0) <= 1e-12, "Multinomial", "probabilities must sum to 1");

    std::vector<std::int64_t> counts(static_cast<std::size_t>(p.size()), 0);
    std::int64_t remaining = n;
    double mass = 1.0;
    for (Eigen::Index k = 0; k + 1 < p.size() && remaining > 0; ++k) {
        const double q = mass > 0.0 ? std::min(1.0, p[k] / mass) : 1.0;
        std::binomial_distribution<std::int64_t> binom(remaining, q);
        const std::int64_t c = q >= 1.0 ? remaining : binom(rng);
        counts[static_cast<std::size_t>(k)] = c;
        remaining -= c;
        mass -= p[k];
    }
    counts.back() += remaining;
    return counts;
}

// ---------------------------------------------------------------------------
// Multivariate samplers
// ---------------------------------------------------------------------------

inline VectorXd sample_multivariate_gaussian(const VectorXd& mean, const MatrixXd& cov, Rng& rng) {
    detail::require(cov.rows() == cov.cols() && cov.rows() == mean.size(), "MultivariateGaussian",
                    "dimension mismatch");
    detail::require(cov.isApprox(cov.transpose(), 1e-10), "MultivariateGaussian",
                    "covariance must be symmetric");
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw InvalidParameter("MultivariateGaussian: covariance is not positive-definite");
    return mean + llt.matrixL() * standard_normal_vector(mean.size(), rng);
}

struct NiwDraw {
    VectorXd mean;
    MatrixXd covariance;
};

struct NormalInverseWishartParams {
    VectorXd mu0;
    double beta0;
    double nu0;
    MatrixXd w0; ///< inverse-Wishart scale matrix
};

namespace detail {

inline void validate_niw(const NormalInverseWishartParams& p) {
    const auto k = p.mu0.size();
    require(k >= 1, "NormalInverseWishart", "dimension must be >= 1");
    require(p.w0.rows() == k && p.w0.cols() == k, "NormalInverseWishart", "W0 must be K x K");
    require(positive(p.beta0), "NormalInverseWishart", "beta0 must be > 0");
    require(std::isfinite(p.nu0) && p.nu0 > static_cast<double>(k) - 1.0, "NormalInverseWishart",
            "nu0 must exceed K - 1");
    require(p.w0.isApprox(p.w0.transpose(), 1e-10), "NormalInverseWishart",
            "W0 must be symmetric");
}

} // namespace detail

/// Sigma ~ IW(nu0, W0) by the Bartlett decomposition of a standard Wishart,
/// then mean ~ N(mu0, Sigma / beta0).
inline NiwDraw sample_niw(const NormalInverseWishartParams& p, Rng& rng) {
    detail::validate_niw(p);
    const Eigen::Index k = p.mu0.size();
    const auto llt = robust_cholesky(p.w0, "inverse-Wishart scale");
    const MatrixXd l_scale = llt.matrixL();

    std::normal_distribution<double> normal;
    MatrixXd bartlett = MatrixXd::Zero(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        std::chi_squared_distribution<double> chi2(p.nu0 - static_cast<double>(i));
        bartlett(i, i) = std::sqrt(chi2(rng));
        for (Eigen::Index j = 0; j < i; ++j)
            bartlett(i, j) = normal(rng);
    }
    // X = A A^T ~ W(nu0, I)  =>  L X^-1 L^T ~ IW(nu0, L L^T); factor C = L A^-T.
    const MatrixXd a_inv = bartlett.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(k, k));
    const MatrixXd factor = l_scale * a_inv.transpose();

    NiwDraw out;
    out.covariance = factor * factor.transpose();
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
    out.mean = p.mu0 + factor * standard_normal_vector(k, rng) / std::sqrt(p.beta0);
    return out;
}

// ---------------------------------------------------------------------------
// Tagged parameter records and the generic entry point
// ---------------------------------------------------------------------------

struct GaussianParams {
    double mean;
    double precision;
};
struct MultivariateGaussianParams {
    VectorXd mean;
    MatrixXd covariance;
};
struct GammaParams {
    double shape;
    double rate;
};
struct LaplaceParams {
    double mu;
    double scale;
};
struct InverseGaussianParams {
    double mu;
    double lambda;
};
struct ExponentialParams {
    double rate;
};
struct TruncatedNormalParams {
    double mean;
    double precision;
};
struct PoissonParams {
    double rate;
};
struct MultinomialParams {
    std::int64_t n;
    VectorXd p;
};

using DistributionParams =
    std::variant<GaussianParams, MultivariateGaussianParams, GammaParams, NormalInverseWishartParams,
                 LaplaceParams, InverseGaussianParams, ExponentialParams, TruncatedNormalParams,
                 PoissonParams, MultinomialParams>;

using Draw = std::variant<double, std::int64_t, VectorXd, std::vector<std::int64_t>, NiwDraw>;

/// Single draw from any supported density.
inline Draw sample(const DistributionParams& params, Rng& rng) {
    struct Visitor {
        Rng& rng;
        Draw operator()(const GaussianParams& p) const {
            return sample_gaussian(p.mean, p.precision, rng);
        }
        Draw operator()(const MultivariateGaussianParams& p) const {
            return sample_multivariate_gaussian(p.mean, p.covariance, rng);
        }
        Draw operator()(const GammaParams& p) const { return sample_gamma(p.shape, p.rate, rng); }
        Draw operator()(const NormalInverseWishartParams& p) const { return sample_niw(p, rng); }
        Draw operator()(const LaplaceParams& p) const { return sample_laplace(p.mu, p.scale, rng); }
        Draw operator()(const InverseGaussianParams& p) const {
            return sample_inverse_gaussian(p.mu, p.lambda, rng);
        }
        Draw operator()(const ExponentialParams& p) const {
            return sample_exponential(p.rate, rng);
        }
        Draw operator()(const TruncatedNormalParams& p) const {
            return sample_truncated_normal(p.mean, p.precision, rng);
        }
        Draw operator()(const PoissonParams& p) const {
            return sample_poisson(p.rate, rng);
        }
        Draw operator()(const MultinomialParams& p) const {
            return sample_multinomial(p.n, p.p, rng);
        }
    };
    return std::visit(Visitor{rng}, params);
}

} // namespace bmf
