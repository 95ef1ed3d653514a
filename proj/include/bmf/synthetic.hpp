#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "bmf/distributions.hpp"
#include "bmf/error.hpp"
#include "bmf/observed_matrix.hpp"
#include "bmf/rng.hpp"

namespace bmf {

enum class Family { Gaussian, Nonnegative, Poisson };

inline std::string family_name(Family f) {
    switch (f) {
    case Family::Gaussian: return "gaussian";
    case Family::Nonnegative: return "nonnegative";
    case Family::Poisson: return "poisson";
    }
    return "?";
}

inline Family parse_family(const std::string& s) {
    if (s == "gaussian")
        return Family::Gaussian;
    if (s == "nonnegative")
        return Family::Nonnegative;
    if (s == "poisson")
        return Family::Poisson;
    throw ConfigError("unknown synthetic family '" + s + "' (expected gaussian, nonnegative or poisson)");
}

/// Everything needed to regenerate a synthetic dataset bit for bit.
struct SyntheticSpec {
    int rows = 0;
    int cols = 0;
    int k = 1;
    Family family = Family::Gaussian;
    double tau = 1.0;      ///< noise precision; +inf for no noise (ignored for poisson)
    double fraction = 1.0; ///< fraction of cells observed
    std::uint64_t seed = 0;
    double lambda = 0.1;   ///< gaussian N(0, 1/lambda), nonnegative Exp(lambda)
    double a = 1.0;        ///< poisson Gamma(a, b) factors
    double b = 1.0;

    void validate() const {
        if (rows < 1 || cols < 1)
            throw ConfigError("synthetic data needs rows >= 1 and cols >= 1");
        if (k < 1 || k > std::min(rows, cols))
            throw ConfigError("synthetic data needs 1 <= k <= min(rows, cols)");
        if (!(tau > 0.0))
            throw ConfigError("noise precision tau must be > 0");
        if (!(fraction > 0.0 && fraction <= 1.0))
            throw ConfigError("fraction must be in (0, 1]");
        if (!(lambda > 0.0) || !(a > 0.0) || !(b > 0.0))
            throw ConfigError("synthetic prior parameters must be > 0");
        if (observed_count() < std::max(rows, cols))
            throw ConfigError("fraction too small to observe every row and column");
    }

    long long observed_count() const {
        return std::llround(fraction * static_cast<double>(rows) * static_cast<double>(cols));
    }
};

struct SyntheticData {
    ObservedMatrix matrix;
    MatrixXd U;
    MatrixXd V;
    MatrixXd full; ///< every cell of R, observed or not
};

namespace detail {

/// Mask with exactly `n` observed cells. The first max(I, J) cells pair a
/// random row permutation with a random column permutation, so every row
/// and column is covered; the rest are uniform among the remaining cells.
inline Mask coverage_mask(int rows, int cols, long long n, Rng& rng) {
    std::vector<int> rp(static_cast<std::size_t>(rows));
    std::vector<int> cp(static_cast<std::size_t>(cols));
    std::iota(rp.begin(), rp.end(), 0);
    std::iota(cp.begin(), cp.end(), 0);
    std::shuffle(rp.begin(), rp.end(), rng);
    std::shuffle(cp.begin(), cp.end(), rng);

    Mask m = Mask::Constant(rows, cols, false);
    const int cover = std::max(rows, cols);
    for (int t = 0; t < cover; ++t)
        m(rp[static_cast<std::size_t>(t % rows)], cp[static_cast<std::size_t>(t % cols)]) = true;

    std::vector<int> rest;
    rest.reserve(static_cast<std::size_t>(rows) * cols - cover);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            if (!m(i, j))
                rest.push_back(i * cols + j);
    std::shuffle(rest.begin(), rest.end(), rng);
    for (long long t = 0; t < n - cover; ++t) {
        const int id = rest[static_cast<std::size_t>(t)];
        m(id / cols, id % cols) = true;
    }
    return m;
}

} // namespace detail

/// R = U V^T + noise (or a Poisson draw), with U and V from the family's
/// prior. Streams: U, V, noise and mask each derive from the seed.
inline SyntheticData generate_synthetic(const SyntheticSpec& s) {
    s.validate();
    Rng ru(derive_seed(s.seed, {1}));
    Rng rv(derive_seed(s.seed, {2}));
    Rng rn(derive_seed(s.seed, {3}));
    Rng rm(derive_seed(s.seed, {4}));

    SyntheticData out;
    out.U.resize(s.rows, s.k);
    out.V.resize(s.cols, s.k);
    auto fill = [&](MatrixXd& f, Rng& rng) {
        for (Eigen::Index i = 0; i < f.size(); ++i) {
            switch (s.family) {
            case Family::Gaussian: f.data()[i] = sample_gaussian(0.0, s.lambda, rng); break;
            case Family::Nonnegative: f.data()[i] = sample_exponential(s.lambda, rng); break;
            case Family::Poisson: f.data()[i] = sample_gamma(s.a, s.b, rng); break;
            }
        }
    };
    fill(out.U, ru);
    fill(out.V, rv);

    const MatrixXd clean = out.U * out.V.transpose();
    out.full = clean;
    for (int i = 0; i < s.rows; ++i)
        for (int j = 0; j < s.cols; ++j) {
            if (s.family == Family::Poisson)
                out.full(i, j) = static_cast<double>(sample_poisson(clean(i, j), rn));
            else if (std::isfinite(s.tau))
                out.full(i, j) += sample_gaussian(0.0, s.tau, rn);
        }
    out.matrix = ObservedMatrix(out.full, detail::coverage_mask(s.rows, s.cols, s.observed_count(), rm));
    return out;
}

/// Observed cells plus Gaussian noise of variance
/// noise_to_signal * (population variance of the observed values).
inline ObservedMatrix add_noise(const ObservedMatrix& m, double noise_to_signal, std::uint64_t seed) {
    if (!(noise_to_signal >= 0.0) || !std::isfinite(noise_to_signal))
        throw ConfigError("noise_to_signal must be >= 0");
    if (noise_to_signal == 0.0)
        return m;
    const double var = noise_to_signal * m.observed_variance();
    if (!(var > 0.0))
        return m;
    Rng rng(derive_seed(seed, {5}));
    MatrixXd values = m.values();
    for (const auto& c : m.cells())
        values(c.row, c.col) += sample_gaussian(0.0, 1.0 / var, rng);
    return m.with_values(std::move(values));
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json manifest_json(const SyntheticSpec& s) {
    nlohmann::ordered_json j;
    j["rows"] = s.rows;
    j["cols"] = s.cols;
    j["k"] = s.k;
    j["family"] = family_name(s.family);
    if (std::isinf(s.tau))
        j["tau"] = "inf";
    else
        j["tau"] = s.tau;
    j["fraction"] = s.fraction;
    j["seed"] = s.seed;
    j["lambda"] = s.lambda;
    j["a"] = s.a;
    j["b"] = s.b;
    return j;
}

inline SyntheticSpec manifest_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known{"rows", "cols", "k", "family", "tau", "fraction",
                                                "seed", "lambda", "a", "b", "matrix"};
    if (!j.is_object())
        throw ConfigError("manifest must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown manifest key '" + key + "'");
    SyntheticSpec s;
    try {
        s.rows = j.at("rows").get<int>();
        s.cols = j.at("cols").get<int>();
        s.k = j.at("k").get<int>();
        s.family = parse_family(j.at("family").get<std::string>());
        const auto& tau = j.at("tau");
        s.tau = tau.is_string() && tau.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                   : tau.get<double>();
        s.fraction = j.at("fraction").get<double>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.lambda = j.value("lambda", s.lambda);
        s.a = j.value("a", s.a);
        s.b = j.value("b", s.b);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad manifest: ") + e.what());
    }
    s.validate();
    return s;
}

inline SyntheticSpec read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open manifest '" + path + "'");
    try {
        return manifest_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("manifest '" + path + "' is not valid JSON: " + e.what());
    }
}

} // namespace bmf
