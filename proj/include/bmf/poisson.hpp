#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>

#include "bmf/distributions.hpp"
#include "bmf/error.hpp"
#include "bmf/factor_state.hpp"
#include "bmf/model_spec.hpp"
#include "bmf/observed_matrix.hpp"
#include "bmf/parallel.hpp"
#include "bmf/rng.hpp"
#include "bmf/updates.hpp"

namespace bmf {

/// Poisson kinds need nonnegative integer counts. Values within 1e-9 of an
/// integer are rounded half-up; anything else is a data error naming the
/// first offending cell.
inline ObservedMatrix as_count_matrix(const ObservedMatrix& data) {
    Eigen::MatrixXd values = data.values();
    for (const auto& c : data.cells()) {
        const double r = std::floor(c.value + 0.5);
        if (std::abs(c.value - r) > 1e-9 || r < 0.0)
            throw DataError("Poisson models need nonnegative integer data; cell (" + std::to_string(c.row) + ", " +
                            std::to_string(c.col) + ") holds " + std::to_string(c.value));
        values(c.row, c.col) = r;
    }
    return data.with_values(std::move(values));
}

inline VectorXd allocation_probabilities(const FactorState& st, int row, int col) {
    VectorXd p = (st.U.row(row).array().max(1e-12) * st.V.row(col).array().max(1e-12)).transpose();
    return p / p.sum();
}

/// Z_ij ~ Mult(R_ij, p) with p_k proportional to U_ik V_jk. Factors are
/// floored at 1e-12 so p stays defined when U_i . V_j = 0.
inline void update_latent_counts(FactorState& st, const ObservedMatrix& data, std::uint64_t seed, bool parallel) {
    const int k = st.k();
    parallel_for(data.rows(), parallel, [&](int i) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        for (const auto& ent : data.row_entries(i)) {
            const auto n = static_cast<std::int64_t>(ent.value);
            if (n == 0) {
                st.z.row(ent.cell).setZero();
                continue;
            }
            if (k == 1) {
                st.z(ent.cell, 0) = n;
                continue;
            }
            const auto draw = sample_multinomial(n, allocation_probabilities(st, i, ent.other), rng);
            for (int c = 0; c < k; ++c)
                st.z(ent.cell, c) = draw[static_cast<std::size_t>(c)];
        }
    });
}

/// Gamma conditional of one entry of a Poisson model's factor. (The written
/// "U_ik ~ P(...)" names the wrong family; the conjugate update is a Gamma.)
inline GammaPosterior poisson_factor_posterior(const FactorState& st, const ObservedMatrix& data,
                                               const ModelSpec& spec, Side side, int i, int k) {
    const auto& h = spec.hyper();
    const bool hier = side_prior(spec, side) == FactorPrior::GammaHier;
    const MatrixXd& g = st.factor(!is_u(side));
    double shape = h.a;
    double rate = hier ? st.aux(is_u(side)).gamma_rate[i] : h.b;
    for (const auto& ent : data.lines(is_u(side))[static_cast<std::size_t>(i)]) {
        shape += static_cast<double>(st.z(ent.cell, k));
        rate += g(ent.other, k);
    }
    return {shape, rate};
}

inline void update_gamma_factor(FactorState& st, const ObservedMatrix& data, const ModelSpec& spec, Side side,
                                std::uint64_t seed, bool parallel) {
    MatrixXd& f = st.factor(is_u(side));
    parallel_for(static_cast<int>(f.rows()), parallel, [&](int i) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        for (int k = 0; k < f.cols(); ++k) {
            const auto p = poisson_factor_posterior(st, data, spec, side, i, k);
            f(i, k) = sample_gamma(p.shape, p.rate, rng);
        }
    });
}

/// PGGG row rates: h_i ~ Gamma(a' + K a, a'/b' + sum_k F_ik).
inline void update_gamma_rates(FactorState& st, const ModelSpec& spec, Side side, Rng& rng) {
    const auto& h = spec.hyper();
    const MatrixXd& f = st.factor(is_u(side));
    auto& rates = st.aux(is_u(side)).gamma_rate;
    for (int i = 0; i < f.rows(); ++i)
        rates[i] = sample_gamma(h.a_prime + f.cols() * h.a, h.a_prime / h.b_prime + f.row(i).sum(), rng);
}

/// One Poisson block in the fixed order Z, U, h^U, V, h^V.
inline void update_poisson(FactorState& st, const ObservedMatrix& data, const ModelSpec& spec, std::uint64_t seed,
                           bool parallel) {
    const bool hier = spec.kind() == ModelKind::PGGG;
    update_latent_counts(st, data, derive_seed(seed, {1}), parallel);
    update_gamma_factor(st, data, spec, Side::U, derive_seed(seed, {2}), parallel);
    if (hier) {
        Rng rng(derive_seed(seed, {3}));
        update_gamma_rates(st, spec, Side::U, rng);
    }
    update_gamma_factor(st, data, spec, Side::V, derive_seed(seed, {4}), parallel);
    if (hier) {
        Rng rng(derive_seed(seed, {5}));
        update_gamma_rates(st, spec, Side::V, rng);
    }
}

} // namespace bmf
