// bmf: fit Bayesian matrix factorisation models, run experiment protocols,
// generate synthetic data, and run a quick self-test.
//
// Exit codes: 0 ok, 1 self-test failure or unexpected error, 2 config
// error, 3 data error, 4 numerical failure.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "bmf/bmf.hpp"

namespace fs = std::filesystem;
using bmf::Json;

namespace {

enum Exit { kOk = 0, kFailed = 1, kConfig = 2, kData = 3, kNumerical = 4 };

int default_jobs() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(item);
    return out;
}

double parse_real(const std::string& s) {
    if (s == "inf")
        return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw bmf::ConfigError("not a number: '" + s + "'");
    }
    if (used != s.size())
        throw bmf::ConfigError("not a number: '" + s + "'");
    return v;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw bmf::ConfigError("cannot write '" + p.string() + "'");
    return out;
}

void write_json(const fs::path& p, const Json& j) {
    auto out = open_out(p);
    out << j.dump(2) << '\n';
}

/// Options shared by fit and experiment. Anything given on the command line
/// overrides the config file.
struct CommonOptions {
    std::string config;
    std::string data;
    std::string synthetic;
    std::string output;
    std::string k;
    std::string seed;
    std::string iterations;
    std::string burn_in;
    std::string thinning;
    std::string min_observed;
    std::string gamma;
    std::vector<std::string> hyper;
    bool no_parallel_rows = false;
    bool timings = false;
    bool verbose = false;

    void add_to(CLI::App* app) {
        app->add_option("--config", config, "JSON run config");
        app->add_option("--data", data, "matrix file (comma/tab separated, NA for missing)");
        app->add_option("--synthetic", synthetic, "synthetic-data manifest to generate the data from");
        app->add_option("--output,-o", output, "output directory");
        app->add_option("--k", k, "number of factors");
        app->add_option("--seed", seed, "random seed");
        app->add_option("--iterations", iterations, "Gibbs sweeps per fit");
        app->add_option("--burn-in", burn_in, "sweeps discarded before averaging");
        app->add_option("--thinning", thinning, "keep every n-th sweep after burn-in");
        app->add_option("--min-observed", min_observed, "drop rows/columns with fewer observations");
        app->add_option("--gamma", gamma, "volume prior strength (GVG, GVnG)");
        app->add_option("--hyper", hyper, "hyperparameter override key=value (repeatable)");
        app->add_flag("--no-parallel-rows", no_parallel_rows, "update rows sequentially");
        app->add_flag("--timings", timings, "fill in wall_seconds columns");
        app->add_flag("--verbose,-v", verbose, "progress on stdout");
    }

    Json merged() const {
        Json j = config.empty() ? Json::object() : bmf::read_json_file(config);
        if (!j.is_object())
            throw bmf::ConfigError("config must be a JSON object");
        if (!data.empty())
            j["data"] = data;
        if (!synthetic.empty()) {
            auto m = bmf::read_json_file(synthetic);
            m.erase("matrix");
            j["synthetic"] = m;
        }
        if (!output.empty())
            j["output"] = output;
        if (!k.empty())
            j["k"] = static_cast<int>(parse_real(k));
        if (!min_observed.empty())
            j["min_observed"] = static_cast<int>(parse_real(min_observed));
        auto& s = j["sampler"];
        if (s.is_null())
            s = Json::object();
        if (!seed.empty()) {
            j.erase("seed");
            s["seed"] = std::stoull(seed);
        }
        if (!iterations.empty())
            s["n_iterations"] = static_cast<int>(parse_real(iterations));
        if (!burn_in.empty())
            s["burn_in"] = static_cast<int>(parse_real(burn_in));
        if (!thinning.empty())
            s["thinning"] = static_cast<int>(parse_real(thinning));
        if (no_parallel_rows)
            s["parallel_rows"] = false;
        auto& h = j["hyper"];
        if (h.is_null())
            h = Json::object();
        if (!gamma.empty())
            h["gamma"] = parse_real(gamma);
        for (const auto& kv : hyper) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw bmf::ConfigError("--hyper expects key=value, got '" + kv + "'");
            h[kv.substr(0, eq)] = parse_real(kv.substr(eq + 1));
        }
        if (timings)
            j["timings"] = true;
        return j;
    }
};

struct Dataset {
    bmf::ObservedMatrix matrix;
    std::vector<int> rows; ///< original index of each row
    std::vector<int> cols;
};

Dataset load_data(const bmf::RunConfig& c) {
    if (c.data && c.synthetic)
        throw bmf::ConfigError("give either 'data' or 'synthetic', not both");
    Dataset d;
    if (c.synthetic) {
        d.matrix = bmf::generate_synthetic(*c.synthetic).matrix;
        for (int i = 0; i < d.matrix.rows(); ++i)
            d.rows.push_back(i);
        for (int j = 0; j < d.matrix.cols(); ++j)
            d.cols.push_back(j);
        return d;
    }
    if (!c.data)
        throw bmf::ConfigError("no data: pass --data or --synthetic");
    auto loaded = bmf::load_matrix(*c.data, bmf::LoadOptions{c.min_observed});
    d.matrix = std::move(loaded.matrix);
    d.rows = std::move(loaded.kept_rows);
    d.cols = std::move(loaded.kept_cols);
    return d;
}

/// Cells to predict, as (filtered row, filtered col). The index file holds
/// one "row,col" pair per line in the original file's coordinates.
std::vector<bmf::Index2> prediction_cells(const bmf::RunConfig& c, const Dataset& d) {
    std::vector<bmf::Index2> out;
    if (!c.predict) {
        for (int i = 0; i < d.matrix.rows(); ++i)
            for (int j = 0; j < d.matrix.cols(); ++j)
                out.emplace_back(i, j);
        return out;
    }
    std::ifstream in(*c.predict);
    if (!in)
        throw bmf::DataError("cannot open index file '" + *c.predict + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = bmf::detail::trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        const auto parts = split_list(std::string(t));
        int r = -1;
        int col = -1;
        try {
            if (parts.size() != 2)
                throw std::invalid_argument("fields");
            r = std::stoi(parts[0]);
            col = std::stoi(parts[1]);
        } catch (const std::exception&) {
            throw bmf::DataError("index file line " + std::to_string(line_no) + ": expected 'row,col'");
        }
        const auto ri = std::find(d.rows.begin(), d.rows.end(), r);
        const auto ci = std::find(d.cols.begin(), d.cols.end(), col);
        if (ri == d.rows.end() || ci == d.cols.end())
            throw bmf::DataError("index file line " + std::to_string(line_no) + ": cell (" + parts[0] + ", " +
                                 parts[1] + ") is not in the loaded matrix");
        out.emplace_back(static_cast<int>(ri - d.rows.begin()), static_cast<int>(ci - d.cols.begin()));
    }
    return out;
}

int cmd_fit(const CommonOptions& opt, const std::string& model, const std::string& predict) {
    Json j = opt.merged();
    if (!predict.empty())
        j["predict"] = predict;
    if (!model.empty()) {
        j.erase("models");
        j["model"] = model;
    }
    const auto cfg = bmf::run_config_from_json(j);
    if (cfg.models.size() != 1)
        throw bmf::ConfigError("fit needs exactly one model (--model)");
    const int k = cfg.k.value_or(5);
    const auto spec = cfg.model_spec(0, k);
    const auto data = load_data(cfg);
    const auto cells = prediction_cells(cfg, data);

    const fs::path dir(cfg.output);
    fs::create_directories(dir);
    write_json(dir / "resolved_config.json", bmf::resolved_json(cfg, k, 1));

    const auto res = bmf::fit(spec, data.matrix, cfg.sampler, [&](int t, double mse) {
        if (opt.verbose && (t % 50 == 0 || t == cfg.sampler.n_iterations))
            std::cout << spec.name() << " sweep " << t << " training MSE " << bmf::format_double(mse) << '\n';
    });

    {
        auto out = open_out(dir / "trace.csv");
        bmf::write_trace(out, res.trace, cfg.timings);
    }
    {
        auto out = open_out(dir / "predictions.csv");
        out << "row,col,prediction\n";
        for (const auto& [i, jj] : cells)
            out << data.rows[static_cast<std::size_t>(i)] << ',' << data.cols[static_cast<std::size_t>(jj)] << ','
                << bmf::format_double(res.predictor.at(i, jj)) << '\n';
    }
    if (res.trace.volume_fallbacks > 0)
        std::cerr << "note: " << res.trace.volume_fallbacks
                  << " volume-prior entries used the likelihood-only fallback\n";
    return kOk;
}

int cmd_experiment(const CommonOptions& opt, const std::string& protocol, const std::string& models,
                   const std::string& k_grid, const std::string& noise, const std::string& fractions,
                   const std::string& repeats, const std::string& folds, const std::string& holdout,
                   const std::string& jobs, bool baselines) {
    Json j = opt.merged();
    if (!protocol.empty())
        j["protocol"] = protocol;
    if (!models.empty()) {
        j.erase("model");
        j["models"] = split_list(models);
    }
    auto reals = [](const std::string& s) {
        std::vector<double> v;
        for (const auto& x : split_list(s))
            v.push_back(parse_real(x));
        return v;
    };
    if (!k_grid.empty()) {
        std::vector<int> ks;
        for (double x : reals(k_grid))
            ks.push_back(static_cast<int>(x));
        j["k_grid"] = ks;
    }
    if (!noise.empty())
        j["noise_levels"] = reals(noise);
    if (!fractions.empty())
        j["fractions"] = reals(fractions);
    if (!repeats.empty())
        j["n_repeats"] = static_cast<int>(parse_real(repeats));
    if (!folds.empty())
        j["n_folds"] = static_cast<int>(parse_real(folds));
    if (!holdout.empty())
        j["holdout"] = parse_real(holdout);
    if (!jobs.empty())
        j["jobs"] = static_cast<int>(parse_real(jobs));
    if (baselines)
        j["baselines"] = true;

    const auto cfg = bmf::run_config_from_json(j);
    const int n_jobs = cfg.jobs.value_or(default_jobs());
    const auto plan = cfg.plan(n_jobs);
    const auto data = load_data(cfg);

    const fs::path dir(cfg.output);
    fs::create_directories(dir);
    write_json(dir / "resolved_config.json", bmf::resolved_json(cfg, plan.fixed_k(), n_jobs));
    if (opt.verbose)
        std::cout << "running " << bmf::protocol_name(plan.protocol) << " on " << data.matrix.rows() << " x "
                  << data.matrix.cols() << " matrix with " << plan.models.size() << " model(s)\n";

    const auto res = bmf::run_experiment(plan, data.matrix);
    {
        auto out = open_out(dir / "records.csv");
        bmf::write_records(out, res, cfg.timings);
    }
    {
        auto out = open_out(dir / "summary.csv");
        bmf::write_summary(out, res);
    }
    if (!res.curves.empty()) {
        auto out = open_out(dir / "curves.csv");
        bmf::write_curves(out, res);
    }
    if (opt.verbose)
        std::cout << res.records.size() << " records written to " << dir.string() << '\n';
    return kOk;
}

int cmd_synth(bmf::SyntheticSpec spec, const std::string& family, const std::string& tau, const std::string& from,
              const std::string& output, std::string manifest) {
    if (!from.empty()) {
        spec = bmf::read_manifest(from);
    } else {
        spec.family = bmf::parse_family(family);
        spec.tau = parse_real(tau);
    }
    if (output.empty())
        throw bmf::ConfigError("synth needs --output");
    const auto data = bmf::generate_synthetic(spec);
    const fs::path out_path(output);
    if (out_path.has_parent_path())
        fs::create_directories(out_path.parent_path());
    bmf::save_matrix(output, data.matrix);
    if (from.empty()) {
        if (manifest.empty())
            manifest = output + ".json";
        auto j = bmf::manifest_json(spec);
        j["matrix"] = out_path.filename().string();
        write_json(manifest, j);
    }
    std::cerr << "wrote " << data.matrix.rows() << " x " << data.matrix.cols() << " matrix, "
              << data.matrix.n_observed() << " observed (fraction "
              << bmf::format_double(data.matrix.fraction_observed()) << ")\n";
    return kOk;
}

/// Quick property checks: sampler moments, split and fit determinism, NMF
/// monotonicity, support of nonnegative kinds.
int cmd_selftest(bool verbose) {
    int failures = 0;
    auto check = [&](const std::string& name, bool ok) {
        if (!ok)
            ++failures;
        if (verbose || !ok)
            std::cout << (ok ? "PASS " : "FAIL ") << name << '\n';
    };

    {
        bmf::Rng rng(1);
        const int n = 20000;
        double sum = 0.0;
        for (int i = 0; i < n; ++i)
            sum += bmf::sample_gamma(2.0, 3.0, rng);
        const double se = std::sqrt(2.0 / 9.0 / n);
        check("gamma mean", std::abs(sum / n - 2.0 / 3.0) < 5 * se);

        sum = 0.0;
        double sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = bmf::sample_truncated_normal(-2.0, 1.0, rng);
            sum += x;
            sq += x * x;
        }
        const double mean = sum / n;
        const double tn_mean = -2.0 + bmf::normal_pdf(2.0) / bmf::normal_cdf(-2.0);
        check("truncated normal mean", std::abs(mean - tn_mean) < 5 * std::sqrt((sq / n - mean * mean) / n));
    }

    bmf::SyntheticSpec s;
    s.rows = 20;
    s.cols = 15;
    s.k = 2;
    s.family = bmf::Family::Nonnegative;
    s.fraction = 0.8;
    s.seed = 3;
    const auto data = bmf::generate_synthetic(s).matrix;
    check("synthetic coverage", data.covers_all_lines());

    const auto a = bmf::make_kfold(data, 5, 9);
    const auto b = bmf::make_kfold(data, 5, 9);
    check("split determinism", a.fold_of == b.fold_of);

    bmf::SamplerConfig cfg{60, 30, 2, 5, true};
    for (auto kind : bmf::all_model_kinds) {
        bmf::Hyperparams h;
        h.gamma = 1e-3;
        const bmf::ModelSpec spec(kind, 2, h);
        const auto& input = bmf::is_poisson(kind) ? bmf::ObservedMatrix(data.values().array().round().matrix(),
                                                                        data.mask())
                                                  : data;
        const auto r1 = bmf::fit(spec, input, cfg);
        const auto r2 = bmf::fit(spec, input, cfg);
        bool ok = r1.trace.training_mse == r2.trace.training_mse && r1.predictor.mean() == r2.predictor.mean();
        const auto t = bmf::traits(kind);
        if (bmf::is_nonnegative_prior(t.u_prior))
            ok = ok && (r1.state.U.array() >= 0.0).all();
        if (bmf::is_nonnegative_prior(t.v_prior))
            ok = ok && (r1.state.V.array() >= 0.0).all();
        if (kind == bmf::ModelKind::NMF)
            for (std::size_t i = 1; i < r1.trace.training_mse.size(); ++i)
                ok = ok && r1.trace.training_mse[i] <= r1.trace.training_mse[i - 1];
        check("fit " + spec.name(), ok);
    }

    std::cout << (failures == 0 ? "selftest passed" : "selftest FAILED") << '\n';
    return failures == 0 ? kOk : kFailed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian matrix factorisation by Gibbs sampling"};
    app.require_subcommand(1);

    CommonOptions fit_opt;
    std::string fit_model;
    auto* fit_cmd = app.add_subcommand("fit", "fit one model; writes trace.csv, predictions.csv, resolved_config.json");
    fit_opt.add_to(fit_cmd);
    fit_cmd->add_option("--model,-m", fit_model, "model name, e.g. GGG, GEEA, GL21");
    std::string predict_path;
    fit_cmd->add_option("--predict", predict_path, "file of row,col pairs to predict (default: every cell)");

    CommonOptions exp_opt;
    std::string protocol, models, k_grid, noise, fractions, repeats, folds, holdout, jobs;
    bool baselines = false;
    auto* exp_cmd = app.add_subcommand("experiment", "run an experiment protocol; writes records.csv, summary.csv");
    exp_opt.add_to(exp_cmd);
    exp_cmd->add_option("--protocol", protocol,
                        "convergence, cross_validation, nested_cv, noise, sparsity or model_selection");
    exp_cmd->add_option("--models", models, "comma-separated model names");
    exp_cmd->add_option("--k-grid", k_grid, "comma-separated K values");
    exp_cmd->add_option("--noise-levels", noise, "comma-separated noise-to-signal ratios");
    exp_cmd->add_option("--fractions", fractions, "comma-separated held-out fractions");
    exp_cmd->add_option("--repeats", repeats, "repeats per setting");
    exp_cmd->add_option("--folds", folds, "outer folds");
    exp_cmd->add_option("--holdout", holdout, "held-out fraction for model_selection");
    exp_cmd->add_option("--jobs,-j", jobs, "parallel fits (default: available cores)");
    exp_cmd->add_flag("--baselines", baselines, "also evaluate the row-average predictor and NMF");

    bmf::SyntheticSpec synth;
    std::string family = "gaussian", tau = "1", from, synth_out, manifest;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic matrix and its manifest");
    synth_cmd->add_option("--rows", synth.rows, "rows I");
    synth_cmd->add_option("--cols", synth.cols, "columns J");
    synth_cmd->add_option("--k", synth.k, "true number of factors");
    synth_cmd->add_option("--family", family, "gaussian, nonnegative or poisson");
    synth_cmd->add_option("--tau", tau, "noise precision, or inf for none");
    synth_cmd->add_option("--fraction", synth.fraction, "fraction of cells observed");
    synth_cmd->add_option("--seed", synth.seed, "random seed");
    synth_cmd->add_option("--lambda", synth.lambda, "factor prior rate (gaussian, nonnegative)");
    synth_cmd->add_option("--a", synth.a, "Gamma shape (poisson)");
    synth_cmd->add_option("--b", synth.b, "Gamma rate (poisson)");
    synth_cmd->add_option("--from-manifest", from, "regenerate from a manifest");
    synth_cmd->add_option("--output,-o", synth_out, "matrix file to write");
    synth_cmd->add_option("--manifest", manifest, "manifest path (default: <output>.json)");

    bool self_verbose = false;
    auto* self_cmd = app.add_subcommand("selftest", "run quick property checks");
    self_cmd->add_flag("--verbose,-v", self_verbose, "print every check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*fit_cmd)
            return cmd_fit(fit_opt, fit_model, predict_path);
        if (*exp_cmd)
            return cmd_experiment(exp_opt, protocol, models, k_grid, noise, fractions, repeats, folds, holdout, jobs,
                                  baselines);
        if (*synth_cmd)
            return cmd_synth(synth, family, tau, from, synth_out, manifest);
        if (*self_cmd)
            return cmd_selftest(self_verbose);
    } catch (const bmf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const bmf::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const bmf::InvalidParameter& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const bmf::DecompositionFailure& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const bmf::NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailed;
    }
    return kOk;
}
