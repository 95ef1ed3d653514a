#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "bmf/error.hpp"
#include "bmf/observed_matrix.hpp"
#include "bmf/rng.hpp"

namespace bmf {

inline void require_nonnegative(const ObservedMatrix& data, const char* who) {
    for (const auto& c : data.cells())
        if (c.value < 0.0)
            throw DataError(std::string(who) + " needs nonnegative data; cell (" + std::to_string(c.row) + ", " +
                            std::to_string(c.col) + ") is negative");
}

/// Positive starting point with E[U V^T] matching the observed mean.
inline void nmf_init(Eigen::MatrixXd& u, Eigen::MatrixXd& v, const ObservedMatrix& data, int k, Rng& rng) {
    const double mean = std::max(data.observed_mean(), 1e-6);
    const double scale = std::sqrt(mean / (0.25 * k));
    u.resize(data.rows(), k);
    v.resize(data.cols(), k);
    for (Eigen::Index i = 0; i < u.size(); ++i)
        u.data()[i] = scale * rng.uniform();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v.data()[i] = scale * rng.uniform();
}

/// One sweep of the masked multiplicative updates (U first, then V) for
/// min sum_Omega (R - U V^T)^2 over U, V >= 0. Denominators are floored at
/// 1e-12.
inline void nmf_step(Eigen::MatrixXd& u, Eigen::MatrixXd& v, const ObservedMatrix& data) {
    const auto k = u.cols();
    Eigen::MatrixXd num(u.rows(), k);
    Eigen::MatrixXd den(u.rows(), k);

    num.setZero();
    den.setZero();
    for (const auto& c : data.cells()) {
        const double pred = u.row(c.row).dot(v.row(c.col));
        num.row(c.row) += c.value * v.row(c.col);
        den.row(c.row) += pred * v.row(c.col);
    }
    u.array() *= num.array() / den.array().max(1e-12);

    num.setZero(v.rows(), k);
    den.setZero(v.rows(), k);
    for (const auto& c : data.cells()) {
        const double pred = u.row(c.row).dot(v.row(c.col));
        num.row(c.col) += c.value * u.row(c.row);
        den.row(c.col) += pred * u.row(c.row);
    }
    v.array() *= num.array() / den.array().max(1e-12);
}

} // namespace bmf
