#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bmf/error.hpp"
#include "bmf/experiments.hpp"
#include "bmf/inference.hpp"
#include "bmf/model_spec.hpp"
#include "bmf/synthetic.hpp"

namespace bmf {

using Json = nlohmann::ordered_json;

namespace detail {

inline void reject_unknown(const Json& j, const std::vector<std::string>& known, const std::string& where) {
    if (!j.is_object())
        throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
T get_as(const Json& j, const std::string& key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("bad value for '" + key + "' in " + where);
    }
}

/// JSON number, or the strings "inf"/"-inf".
inline double get_real(const Json& j, const std::string& key, const std::string& where) {
    const auto& v = j.at(key);
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf")
            return std::numeric_limits<double>::infinity();
        throw ConfigError("bad value for '" + key + "' in " + where);
    }
    if (!v.is_number())
        throw ConfigError("bad value for '" + key + "' in " + where);
    return v.get<double>();
}

inline Json real_json(double x) {
    if (std::isinf(x))
        return x > 0 ? Json("inf") : Json("-inf");
    return Json(x);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Hyperparameters
// ---------------------------------------------------------------------------

/// Overlay the keys present in `j` onto `base`.
inline Hyperparams hyper_from_json(const Json& j, Hyperparams base = {}) {
    static const std::vector<std::string> known{
        "alpha_tau", "beta_tau", "lambda", "eta",   "alpha0", "beta0", "mu0",  "beta0_niw", "nu0",
        "w0",        "mu_ig",    "lambda_ig", "mu_u", "tau_u", "mu_v", "tau_v", "mu_mu",   "tau_mu",
        "a_tn",      "b_tn",     "gamma",  "a",     "b",      "a_prime", "b_prime"};
    const std::string where = "hyperparameters";
    detail::reject_unknown(j, known, where);
    Hyperparams h = base;
    auto real = [&](const char* key, double& field) {
        if (j.contains(key))
            field = detail::get_real(j, key, where);
    };
    auto opt_real = [&](const char* key, std::optional<double>& field) {
        if (j.contains(key))
            field = detail::get_real(j, key, where);
    };
    real("alpha_tau", h.alpha_tau);
    real("beta_tau", h.beta_tau);
    real("lambda", h.lambda);
    real("eta", h.eta);
    real("alpha0", h.alpha0);
    real("beta0", h.beta0);
    real("beta0_niw", h.beta0_niw);
    opt_real("nu0", h.nu0);
    opt_real("mu_ig", h.mu_ig);
    opt_real("lambda_ig", h.lambda_ig);
    real("mu_u", h.mu_u);
    real("tau_u", h.tau_u);
    real("mu_v", h.mu_v);
    real("tau_v", h.tau_v);
    real("mu_mu", h.mu_mu);
    real("tau_mu", h.tau_mu);
    real("a_tn", h.a_tn);
    real("b_tn", h.b_tn);
    opt_real("gamma", h.gamma);
    real("a", h.a);
    real("b", h.b);
    real("a_prime", h.a_prime);
    real("b_prime", h.b_prime);
    if (j.contains("mu0")) {
        const auto v = detail::get_as<std::vector<double>>(j, "mu0", where);
        h.mu0 = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    if (j.contains("w0")) {
        const auto rows = detail::get_as<std::vector<std::vector<double>>>(j, "w0", where);
        Eigen::MatrixXd w(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != rows.size())
                throw ConfigError("w0 must be a square matrix");
            for (std::size_t c = 0; c < rows.size(); ++c)
                w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
        h.w0 = w;
    }
    return h;
}

inline Json hyper_to_json(const Hyperparams& h) {
    Json j;
    j["alpha_tau"] = h.alpha_tau;
    j["beta_tau"] = h.beta_tau;
    j["lambda"] = h.lambda;
    j["eta"] = h.eta;
    j["alpha0"] = h.alpha0;
    j["beta0"] = h.beta0;
    if (h.mu0)
        j["mu0"] = std::vector<double>(h.mu0->data(), h.mu0->data() + h.mu0->size());
    j["beta0_niw"] = h.beta0_niw;
    if (h.nu0)
        j["nu0"] = *h.nu0;
    if (h.w0) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index r = 0; r < h.w0->rows(); ++r) {
            rows.emplace_back();
            for (Eigen::Index c = 0; c < h.w0->cols(); ++c)
                rows.back().push_back((*h.w0)(r, c));
        }
        j["w0"] = rows;
    }
    if (h.mu_ig)
        j["mu_ig"] = *h.mu_ig;
    if (h.lambda_ig)
        j["lambda_ig"] = *h.lambda_ig;
    j["mu_u"] = h.mu_u;
    j["tau_u"] = h.tau_u;
    j["mu_v"] = h.mu_v;
    j["tau_v"] = h.tau_v;
    j["mu_mu"] = h.mu_mu;
    j["tau_mu"] = h.tau_mu;
    j["a_tn"] = h.a_tn;
    j["b_tn"] = h.b_tn;
    if (h.gamma)
        j["gamma"] = *h.gamma;
    j["a"] = h.a;
    j["b"] = h.b;
    j["a_prime"] = h.a_prime;
    j["b_prime"] = h.b_prime;
    return j;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct ModelDecl {
    std::string name;
    Json hyper = Json::object(); ///< per-model overrides on top of the global block
};

/// Everything a `fit` or `experiment` run reads. Parsed from JSON; unknown
/// keys are rejected.
struct RunConfig {
    std::optional<std::string> data;
    std::optional<SyntheticSpec> synthetic; ///< generate the data instead of reading it
    std::string output = ".";
    std::optional<std::string> predict;     ///< index file for fit predictions
    int min_observed = 3;

    std::vector<ModelDecl> models;
    Json hyper = Json::object();
    std::optional<int> k;
    SamplerConfig sampler;

    std::optional<Protocol> protocol;
    std::vector<int> k_grid;
    std::vector<double> noise_levels;
    std::vector<double> fractions;
    std::optional<int> n_repeats;
    std::optional<int> n_folds;
    int inner_folds = 5;
    double holdout = 0.1;
    bool baselines = false;
    std::optional<int> jobs;
    bool timings = false;

    ModelSpec model_spec(std::size_t i, int default_k) const {
        const auto& decl = models.at(i);
        const auto kind = parse_model_kind(decl.name);
        if (!kind)
            throw ConfigError("unknown model '" + decl.name + "'");
        const Hyperparams h = hyper_from_json(decl.hyper, hyper_from_json(hyper));
        return ModelSpec(*kind, k.value_or(default_k), h);
    }

    ExperimentPlan plan(int default_jobs) const {
        if (!protocol)
            throw ConfigError("experiment needs a protocol");
        ExperimentPlan p;
        p.protocol = *protocol;
        for (std::size_t i = 0; i < models.size(); ++i)
            p.models.push_back(model_spec(i, p.fixed_k()));
        p.k_grid = k_grid;
        p.noise_levels = noise_levels;
        p.fractions = fractions;
        p.k = k;
        p.n_repeats = n_repeats;
        p.n_folds = n_folds;
        p.inner_folds = inner_folds;
        p.holdout = holdout;
        p.seed = sampler.seed;
        p.sampler = sampler;
        p.baselines = baselines;
        p.jobs = jobs.value_or(default_jobs);
        p.validate();
        return p;
    }
};

inline RunConfig run_config_from_json(const Json& j) {
    static const std::vector<std::string> known{
        "data", "synthetic", "output", "predict", "min_observed", "model", "models", "hyper", "k",
        "sampler", "seed", "protocol", "k_grid", "noise_levels", "fractions", "n_repeats", "n_folds",
        "inner_folds", "holdout", "baselines", "jobs", "timings", "noise_ratio_definition"};
    const std::string where = "run config";
    detail::reject_unknown(j, known, where);
    RunConfig c;
    using detail::get_as;
    if (j.contains("data"))
        c.data = get_as<std::string>(j, "data", where);
    if (j.contains("synthetic"))
        c.synthetic = manifest_from_json(nlohmann::json::parse(j.at("synthetic").dump()));
    if (j.contains("output"))
        c.output = get_as<std::string>(j, "output", where);
    if (j.contains("predict"))
        c.predict = get_as<std::string>(j, "predict", where);
    if (j.contains("min_observed"))
        c.min_observed = get_as<int>(j, "min_observed", where);
    if (j.contains("model") && j.contains("models"))
        throw ConfigError("give either 'model' or 'models', not both");
    auto model_decl = [&](const Json& m) {
        if (m.is_string())
            return ModelDecl{m.get<std::string>()};
        detail::reject_unknown(m, {"name", "hyper"}, "model entry");
        ModelDecl d{get_as<std::string>(m, "name", "model entry")};
        if (m.contains("hyper"))
            d.hyper = m.at("hyper");
        hyper_from_json(d.hyper); // validate keys early
        return d;
    };
    if (j.contains("model"))
        c.models.push_back(model_decl(j.at("model")));
    if (j.contains("models")) {
        if (!j.at("models").is_array())
            throw ConfigError("'models' must be a list");
        for (const auto& m : j.at("models"))
            c.models.push_back(model_decl(m));
    }
    for (const auto& m : c.models)
        if (!parse_model_kind(m.name))
            throw ConfigError("unknown model '" + m.name + "'");
    if (j.contains("hyper")) {
        c.hyper = j.at("hyper");
        hyper_from_json(c.hyper);
    }
    if (j.contains("k"))
        c.k = get_as<int>(j, "k", where);
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        detail::reject_unknown(s, {"n_iterations", "burn_in", "thinning", "seed", "parallel_rows"}, "sampler");
        if (s.contains("n_iterations"))
            c.sampler.n_iterations = get_as<int>(s, "n_iterations", "sampler");
        if (s.contains("burn_in"))
            c.sampler.burn_in = get_as<int>(s, "burn_in", "sampler");
        if (s.contains("thinning"))
            c.sampler.thinning = get_as<int>(s, "thinning", "sampler");
        if (s.contains("seed"))
            c.sampler.seed = get_as<std::uint64_t>(s, "seed", "sampler");
        if (s.contains("parallel_rows"))
            c.sampler.parallel_rows = get_as<bool>(s, "parallel_rows", "sampler");
    }
    if (j.contains("seed"))
        c.sampler.seed = get_as<std::uint64_t>(j, "seed", where);
    if (j.contains("protocol"))
        c.protocol = parse_protocol(get_as<std::string>(j, "protocol", where));
    if (j.contains("k_grid"))
        c.k_grid = get_as<std::vector<int>>(j, "k_grid", where);
    if (j.contains("noise_levels"))
        c.noise_levels = get_as<std::vector<double>>(j, "noise_levels", where);
    if (j.contains("fractions"))
        c.fractions = get_as<std::vector<double>>(j, "fractions", where);
    if (j.contains("n_repeats"))
        c.n_repeats = get_as<int>(j, "n_repeats", where);
    if (j.contains("n_folds"))
        c.n_folds = get_as<int>(j, "n_folds", where);
    if (j.contains("inner_folds"))
        c.inner_folds = get_as<int>(j, "inner_folds", where);
    if (j.contains("holdout"))
        c.holdout = get_as<double>(j, "holdout", where);
    if (j.contains("baselines"))
        c.baselines = get_as<bool>(j, "baselines", where);
    if (j.contains("jobs"))
        c.jobs = get_as<int>(j, "jobs", where);
    if (j.contains("timings"))
        c.timings = get_as<bool>(j, "timings", where);
    if (j.contains("noise_ratio_definition") && j.at("noise_ratio_definition") != "variance/variance")
        throw ConfigError("only the variance/variance noise ratio is supported");
    c.sampler.validate();
    return c;
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

/// The config with every default spelled out. `k` is the K actually used
/// for fixed-K runs.
inline Json resolved_json(const RunConfig& c, int k_used, int jobs_used) {
    Json j;
    if (c.data)
        j["data"] = *c.data;
    if (c.synthetic)
        j["synthetic"] = manifest_json(*c.synthetic);
    j["output"] = c.output;
    if (c.predict)
        j["predict"] = *c.predict;
    j["min_observed"] = c.min_observed;
    j["models"] = Json::array();
    for (std::size_t i = 0; i < c.models.size(); ++i) {
        Json m;
        m["name"] = c.models[i].name;
        const auto spec = c.model_spec(i, k_used);
        m["hyper"] = hyper_to_json(spec.overrides());
        j["models"].push_back(m);
    }
    j["k"] = k_used;
    j["sampler"] = {{"n_iterations", c.sampler.n_iterations},
                    {"burn_in", c.sampler.burn_in},
                    {"thinning", c.sampler.thinning},
                    {"seed", c.sampler.seed},
                    {"parallel_rows", c.sampler.parallel_rows}};
    if (c.protocol) {
        const auto p = c.plan(jobs_used);
        j["protocol"] = protocol_name(*c.protocol);
        j["k_grid"] = p.grid();
        j["noise_levels"] = c.noise_levels;
        j["fractions"] = c.fractions;
        j["n_repeats"] = p.repeats();
        j["n_folds"] = p.folds();
        j["inner_folds"] = c.inner_folds;
        j["holdout"] = c.holdout;
        j["baselines"] = c.baselines;
        j["noise_ratio_definition"] = "variance/variance";
    }
    j["jobs"] = jobs_used;
    j["timings"] = c.timings;
    return j;
}

} // namespace bmf
