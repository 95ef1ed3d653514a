#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <random>
#include <string>

#include "bmf/error.hpp"
#include "bmf/rng.hpp"

namespace bmf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Cholesky factorisation of a symmetric positive-definite matrix. On
/// failure, retries with diagonal jitter of 1e-10, 1e-8 and 1e-6 times the
/// mean diagonal entry before giving up.
inline Eigen::LLT<MatrixXd> robust_cholesky(const MatrixXd& a, const char* what = "matrix") {
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() == Eigen::Success)
        return llt;

    const double n = static_cast<double>(a.rows());
    double scale = n > 0 ? std::abs(a.trace()) / n : 1.0;
    if (!(scale > 0) || !std::isfinite(scale))
        scale = 1.0;
    for (double eps : {1e-10, 1e-8, 1e-6}) {
        MatrixXd jittered = a;
        jittered.diagonal().array() += eps * scale;
        llt.compute(jittered);
        if (llt.info() == Eigen::Success)
            return llt;
    }
    throw DecompositionFailure(std::string("Cholesky factorisation of ") + what +
                               " failed after jitter retries");
}

/// Vector of iid standard normals.
inline VectorXd standard_normal_vector(Eigen::Index n, Rng& rng) {
    std::normal_distribution<double> normal;
    VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i)
        z[i] = normal(rng);
    return z;
}

/// Draw from N(P^-1 b, P^-1) given the precision P and linear term b.
/// This is the shape every multivariate Gibbs conditional takes.
inline VectorXd sample_gaussian_canonical(const MatrixXd& precision, const VectorXd& linear,
                                          Rng& rng) {
    const auto llt = robust_cholesky(precision, "posterior precision");
    const auto l = llt.matrixL();
    VectorXd mean = llt.solve(linear);
    VectorXd z = standard_normal_vector(precision.rows(), rng);
    // L^T x = z  =>  cov(x) = (L L^T)^-1
    return mean + l.transpose().solve(z);
}

} // namespace bmf
