#pragma once

// Monte-Carlo moment checks shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace bmf_test {

struct SampleMoments {
    double mean = 0.0;
    double var = 0.0;
    double mean_se = 0.0; ///< standard error of the mean
    double var_se = 0.0;  ///< standard error of the variance
};

inline SampleMoments moments(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    SampleMoments m;
    for (double x : xs)
        m.mean += x;
    m.mean /= n;
    double m2 = 0.0, m4 = 0.0;
    for (double x : xs) {
        const double d = (x - m.mean) * (x - m.mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    m.var = m2 * n / (n - 1.0);
    m.mean_se = std::sqrt(m2 / n);
    m.var_se = std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
    return m;
}

/// Result of comparing sample moments with expected values, within `z`
/// standard errors.
struct MomentCheck {
    bool ok = true;
    std::string detail;
};

inline MomentCheck check_moments(const std::vector<double>& xs, double mean, double var, double z) {
    const auto m = moments(xs);
    MomentCheck c;
    const double tol_mean = z * m.mean_se + 1e-12 * (1.0 + std::abs(mean));
    const double tol_var = z * m.var_se + 1e-12 * (1.0 + var);
    c.ok = std::abs(m.mean - mean) <= tol_mean && std::abs(m.var - var) <= tol_var;
    std::ostringstream os;
    os << "mean " << m.mean << " vs " << mean << " (tol " << tol_mean << "), var " << m.var << " vs " << var
       << " (tol " << tol_var << ")";
    c.detail = os.str();
    return c;
}

/// First two moments of a density on [0, inf) known up to a constant, by
/// numerical integration.
struct DensityMoments {
    double mean;
    double var;
};

inline DensityMoments half_line_moments(const std::function<double(double)>& raw) {
    // endpoints can produce inf * 0; the density has no mass there
    const auto unnormalised = [&](double x) {
        const double v = raw(x);
        return std::isfinite(v) ? v : 0.0;
    };
    boost::math::quadrature::exp_sinh<double> integrator;
    const double z = integrator.integrate(unnormalised, 0.0, std::numeric_limits<double>::infinity());
    const double m1 =
        integrator.integrate([&](double x) { return x * unnormalised(x); }, 0.0,
                             std::numeric_limits<double>::infinity()) / z;
    const double m2 =
        integrator.integrate([&](double x) { return x * x * unnormalised(x); }, 0.0,
                             std::numeric_limits<double>::infinity()) / z;
    return {m1, m2 - m1 * m1};
}

/// Same on the whole real line.
inline DensityMoments real_line_moments(const std::function<double(double)>& raw) {
    const auto unnormalised = [&](double x) {
        const double v = raw(x);
        return std::isfinite(v) ? v : 0.0;
    };
    boost::math::quadrature::tanh_sinh<double> integrator;
    const double inf = std::numeric_limits<double>::infinity();
    const double z = integrator.integrate(unnormalised, -inf, inf);
    const double m1 = integrator.integrate([&](double x) { return x * unnormalised(x); }, -inf, inf) / z;
    const double m2 = integrator.integrate([&](double x) { return x * x * unnormalised(x); }, -inf, inf) / z;
    return {m1, m2 - m1 * m1};
}

} // namespace bmf_test
