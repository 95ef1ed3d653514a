#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bmf/error.hpp"
#include "bmf/factor_state.hpp"
#include "bmf/matrix_io.hpp"
#include "bmf/model_spec.hpp"
#include "bmf/nmf.hpp"
#include "bmf/observed_matrix.hpp"
#include "bmf/poisson.hpp"
#include "bmf/sweep.hpp"

namespace bmf {

struct SamplerConfig {
    int n_iterations = 1000;
    int burn_in = 500;
    int thinning = 2;
    std::uint64_t seed = 0;
    bool parallel_rows = true;

    void validate() const {
        if (n_iterations < 1)
            throw ConfigError("n_iterations must be >= 1");
        if (burn_in < 0 || burn_in >= n_iterations)
            throw ConfigError("burn_in must be in [0, n_iterations)");
        if (thinning < 1)
            throw ConfigError("thinning must be >= 1");
    }

    /// floor((n_iterations - burn_in) / thinning)
    int retained_count() const { return (n_iterations - burn_in) / thinning; }
};

struct SamplerTrace {
    std::vector<double> training_mse; ///< one entry per sweep
    std::vector<double> wall_seconds; ///< cumulative, one entry per sweep
    int retained = 0;
    MatrixXd prediction_sum;          ///< sum of U V^T over retained sweeps
    std::int64_t volume_fallbacks = 0;
};

using Index2 = std::pair<int, int>;

/// Posterior-mean predictor: the average of U V^T over the retained draws.
class Predictor {
  public:
    Predictor() = default;
    Predictor(MatrixXd sum, int retained) : retained_(retained) {
        if (retained < 1)
            throw ConfigError("predictor needs at least one retained draw");
        mean_ = std::move(sum) / static_cast<double>(retained);
    }

    int rows() const noexcept { return static_cast<int>(mean_.rows()); }
    int cols() const noexcept { return static_cast<int>(mean_.cols()); }
    int retained() const noexcept { return retained_; }
    const MatrixXd& mean() const noexcept { return mean_; }

    double at(int i, int j) const {
        if (i < 0 || j < 0 || i >= rows() || j >= cols())
            throw DataError("prediction index (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
        return mean_(i, j);
    }

    std::vector<double> predict(std::span<const Index2> indices) const {
        std::vector<double> out;
        out.reserve(indices.size());
        for (const auto& [i, j] : indices)
            out.push_back(at(i, j));
        return out;
    }

  private:
    MatrixXd mean_;
    int retained_ = 0;
};

struct FitResult {
    SamplerTrace trace;
    Predictor predictor;
    FactorState state; ///< state after the last sweep
};

/// Data as the kind consumes it: counts for Poisson kinds, checked
/// nonnegative for NMF, unchanged otherwise.
inline ObservedMatrix prepare_data(const ModelSpec& spec, const ObservedMatrix& data) {
    spec.validate_shape(data.rows(), data.cols());
    if (is_poisson(spec.kind()))
        return as_count_matrix(data);
    if (spec.kind() == ModelKind::NMF)
        require_nonnegative(data, "NMF");
    return data;
}

/// Run the sampler. Sweep t (1-based) is retained when t > burn_in and
/// (t - burn_in) is a multiple of thinning.
template <typename OnSweep>
FitResult fit(const ModelSpec& spec, const ObservedMatrix& raw, const SamplerConfig& cfg, OnSweep&& on_sweep) {
    cfg.validate();
    const ObservedMatrix data = prepare_data(spec, raw);

    const auto start = std::chrono::steady_clock::now();
    FitResult out;
    out.state = initial_state(spec, data, cfg.seed, cfg.parallel_rows);
    auto& tr = out.trace;
    tr.training_mse.reserve(static_cast<std::size_t>(cfg.n_iterations));
    tr.wall_seconds.reserve(static_cast<std::size_t>(cfg.n_iterations));
    tr.prediction_sum = MatrixXd::Zero(data.rows(), data.cols());

    for (int t = 1; t <= cfg.n_iterations; ++t) {
        gibbs_sweep(out.state, data, spec, cfg.seed, static_cast<std::uint64_t>(t), cfg.parallel_rows);
        const double mse = training_mse(out.state, data);
        tr.training_mse.push_back(mse);
        tr.wall_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thinning == 0) {
            tr.prediction_sum.noalias() += out.state.U * out.state.V.transpose();
            ++tr.retained;
        }
        on_sweep(t, mse);
    }
    tr.volume_fallbacks = out.state.volume_fallbacks;
    out.predictor = Predictor(tr.prediction_sum, tr.retained);
    return out;
}

inline FitResult fit(const ModelSpec& spec, const ObservedMatrix& data, const SamplerConfig& cfg) {
    return fit(spec, data, cfg, [](int, double) {});
}

inline std::vector<double> predict(const Predictor& p, std::span<const Index2> indices) {
    return p.predict(indices);
}

inline double mse(std::span<const double> predictions, std::span<const double> truth) {
    if (predictions.empty() || predictions.size() != truth.size())
        throw DataError("mse needs two non-empty sequences of equal length");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = predictions[i] - truth[i];
        s += d * d;
    }
    return s / static_cast<double>(truth.size());
}

/// Population variance of the truth over the MSE; +inf when the MSE is 0.
inline double variance_ratio(std::span<const double> truth, std::span<const double> predictions) {
    const double err = mse(predictions, truth);
    double mean = 0.0;
    for (double x : truth)
        mean += x;
    mean /= static_cast<double>(truth.size());
    double var = 0.0;
    for (double x : truth)
        var += (x - mean) * (x - mean);
    var /= static_cast<double>(truth.size());
    if (err == 0.0)
        return std::numeric_limits<double>::infinity();
    return var / err;
}

/// Trace as delimited text: header `iteration,training_MSE,wall_seconds`,
/// then one line per sweep. Timings are written only when asked for, so
/// default output is reproducible byte for byte.
inline void write_trace(std::ostream& out, const SamplerTrace& tr, bool timings) {
    out << "iteration,training_MSE,wall_seconds\n";
    for (std::size_t t = 0; t < tr.training_mse.size(); ++t) {
        out << (t + 1) << ',' << format_double(tr.training_mse[t]) << ','
            << (timings ? format_double(tr.wall_seconds[t]) : std::string("NA")) << '\n';
    }
}

} // namespace bmf
