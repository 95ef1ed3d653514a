#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "bmf/error.hpp"
#include "bmf/inference.hpp"
#include "bmf/matrix_io.hpp"
#include "bmf/model_spec.hpp"
#include "bmf/observed_matrix.hpp"
#include "bmf/parallel.hpp"
#include "bmf/rng.hpp"
#include "bmf/splits.hpp"
#include "bmf/synthetic.hpp"

namespace bmf {

enum class Protocol { Convergence, CrossValidation, NestedCv, Noise, Sparsity, ModelSelection };

inline std::string protocol_name(Protocol p) {
    switch (p) {
    case Protocol::Convergence: return "convergence";
    case Protocol::CrossValidation: return "cross_validation";
    case Protocol::NestedCv: return "nested_cv";
    case Protocol::Noise: return "noise";
    case Protocol::Sparsity: return "sparsity";
    case Protocol::ModelSelection: return "model_selection";
    }
    return "?";
}

inline Protocol parse_protocol(const std::string& s) {
    for (auto p : {Protocol::Convergence, Protocol::CrossValidation, Protocol::NestedCv, Protocol::Noise,
                   Protocol::Sparsity, Protocol::ModelSelection})
        if (protocol_name(p) == s)
            return p;
    throw ConfigError("unknown protocol '" + s + "'");
}

inline const std::vector<int>& default_k_grid() {
    static const std::vector<int> grid{1, 2, 3, 4, 5, 6, 8, 10, 13, 16, 20};
    return grid;
}

/// A model to evaluate: a ModelSpec, or the row-average baseline when
/// `spec` is empty.
struct ModelEntry {
    std::string name;
    std::optional<ModelSpec> spec;

    static ModelEntry row_average() { return {"ROWAVG", std::nullopt}; }
    static ModelEntry of(const ModelSpec& s) { return {s.name(), s}; }
};

struct ExperimentPlan {
    Protocol protocol = Protocol::CrossValidation;
    std::vector<ModelSpec> models;
    std::vector<int> k_grid;            ///< nested_cv, model_selection
    std::vector<double> noise_levels;   ///< noise
    std::vector<double> fractions;      ///< sparsity: fraction of cells held out
    std::optional<int> k;               ///< fixed K; default 20 for convergence, else 5
    std::optional<int> n_repeats;       ///< default 10 for convergence/sparsity/model_selection, else 1
    std::optional<int> n_folds;         ///< default 10 for noise, else 5
    int inner_folds = 5;
    double holdout = 0.1;               ///< model_selection test fraction
    std::uint64_t seed = 0;
    SamplerConfig sampler;
    bool baselines = false;             ///< add ROWAVG (and NMF on nonnegative data)
    int jobs = 1;

    int fixed_k() const { return k.value_or(protocol == Protocol::Convergence ? 20 : 5); }
    int repeats() const {
        if (n_repeats)
            return *n_repeats;
        switch (protocol) {
        case Protocol::Convergence:
        case Protocol::Sparsity:
        case Protocol::ModelSelection:
            return 10;
        default:
            return 1;
        }
    }
    int folds() const { return n_folds.value_or(protocol == Protocol::Noise ? 10 : 5); }
    const std::vector<int>& grid() const {
        return k_grid.empty() && protocol == Protocol::NestedCv ? default_k_grid() : k_grid;
    }

    void validate() const {
        if (models.empty())
            throw ConfigError("experiment plan lists no models");
        if (repeats() < 1)
            throw ConfigError("n_repeats must be >= 1");
        if (folds() < 2 || inner_folds < 2)
            throw ConfigError("fold counts must be >= 2");
        if (fixed_k() < 1)
            throw ConfigError("K must be >= 1");
        if (jobs < 1)
            throw ConfigError("jobs must be >= 1");
        sampler.validate();
        switch (protocol) {
        case Protocol::NestedCv:
        case Protocol::ModelSelection:
            if (grid().empty())
                throw ConfigError(protocol_name(protocol) + " needs a non-empty K grid");
            for (int kk : grid())
                if (kk < 1)
                    throw ConfigError("K grid values must be >= 1");
            break;
        case Protocol::Noise:
            if (noise_levels.empty())
                throw ConfigError("noise protocol needs a non-empty list of noise levels");
            for (double v : noise_levels)
                if (!(v >= 0.0) || !std::isfinite(v))
                    throw ConfigError("noise levels must be >= 0");
            break;
        case Protocol::Sparsity:
            if (fractions.empty())
                throw ConfigError("sparsity protocol needs a non-empty list of fractions");
            for (double f : fractions)
                if (!(f > 0.0 && f < 1.0))
                    throw ConfigError("sparsity fractions must be in (0, 1)");
            break;
        default:
            break;
        }
        if (protocol == Protocol::ModelSelection && !(holdout > 0.0 && holdout < 1.0))
            throw ConfigError("holdout must be in (0, 1)");
    }
};

inline constexpr double na = std::numeric_limits<double>::quiet_NaN();

/// One evaluated (model, setting, repeat, fold). NaN marks a field that does
/// not apply (written as NA).
struct ExperimentRecord {
    std::string model;
    std::string setting;
    double setting_value = na;
    int repeat = 0;
    int fold = 0;
    std::uint64_t seed = 0;
    int chosen_k = 0;
    int n_train = 0;
    int n_test = 0;
    double train_mse = na;
    double test_mse = na;
    double variance_ratio = na;
    double wall_seconds = na;
};

struct ConvergenceCurve {
    std::string model;
    std::vector<double> mean_training_mse;
};

struct ExperimentResult {
    Protocol protocol = Protocol::CrossValidation;
    std::vector<ExperimentRecord> records;
    std::vector<ConvergenceCurve> curves; ///< convergence only
};

namespace detail {

struct Evaluation {
    double train_mse = na;
    double test_mse = na;
    double variance_ratio = na;
    double wall_seconds = 0.0;
};

inline MatrixXd row_average_prediction(const ObservedMatrix& train) {
    const double global = train.observed_mean();
    MatrixXd pred(train.rows(), train.cols());
    for (int i = 0; i < train.rows(); ++i) {
        const auto& e = train.row_entries(i);
        double m = global;
        if (!e.empty()) {
            m = 0.0;
            for (const auto& x : e)
                m += x.value;
            m /= static_cast<double>(e.size());
        }
        pred.row(i).setConstant(m);
    }
    return pred;
}

/// Fit `entry` on `train` and score it on the given test cells of `full`.
inline Evaluation evaluate(const ModelEntry& entry, int k, const ObservedMatrix& full, const ObservedMatrix& train,
                           const std::vector<int>& test_cells, SamplerConfig cfg, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    MatrixXd pred;
    if (entry.spec) {
        cfg.seed = seed;
        pred = fit(entry.spec->with_k(k), train, cfg).predictor.mean();
    } else {
        pred = row_average_prediction(train);
    }
    Evaluation ev;
    std::vector<double> p;
    std::vector<double> t;
    for (const auto& c : train.cells()) {
        p.push_back(pred(c.row, c.col));
        t.push_back(c.value);
    }
    ev.train_mse = mse(p, t);
    if (!test_cells.empty()) {
        p.clear();
        t.clear();
        for (int id : test_cells) {
            const auto& c = full.cells()[static_cast<std::size_t>(id)];
            p.push_back(pred(c.row, c.col));
            t.push_back(c.value);
        }
        ev.test_mse = mse(p, t);
        ev.variance_ratio = variance_ratio(t, p);
    }
    ev.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return ev;
}

inline bool is_nonnegative(const ObservedMatrix& m) {
    for (const auto& c : m.cells())
        if (c.value < 0.0)
            return false;
    return true;
}

inline std::vector<ModelEntry> model_entries(const ExperimentPlan& plan, const ObservedMatrix& data) {
    std::vector<ModelEntry> out;
    for (const auto& s : plan.models)
        out.push_back(ModelEntry::of(s));
    if (plan.baselines) {
        if (plan.protocol != Protocol::Convergence)
            out.push_back(ModelEntry::row_average());
        const bool has_nmf = std::any_of(plan.models.begin(), plan.models.end(),
                                         [](const ModelSpec& s) { return s.kind() == ModelKind::NMF; });
        if (!has_nmf && is_nonnegative(data))
            out.push_back(ModelEntry::of(ModelSpec(ModelKind::NMF, plan.fixed_k())));
    }
    return out;
}

/// Run independent jobs on up to `jobs` threads; results land in job order.
/// With more than one job thread, row-level parallelism inside fits is off.
inline void run_jobs(int n, int jobs, const std::function<void(int)>& job) {
#ifdef _OPENMP
    if (jobs > 1 && n > 1) {
        std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
        for (int i = 0; i < n; ++i) {
            try {
                job(i);
            } catch (...) {
#pragma omp critical(bmf_job_error)
                if (!error)
                    error = std::current_exception();
            }
        }
        if (error)
            std::rethrow_exception(error);
        return;
    }
#endif
    (void)jobs;
    for (int i = 0; i < n; ++i)
        job(i);
}

inline SamplerConfig job_sampler(const ExperimentPlan& plan) {
    SamplerConfig cfg = plan.sampler;
    if (plan.jobs > 1)
        cfg.parallel_rows = false;
    return cfg;
}

// Stream coordinates for seeds used by the protocols.
inline constexpr std::uint64_t kSplitTag = 21;
inline constexpr std::uint64_t kFitTag = 22;
inline constexpr std::uint64_t kNoiseTag = 23;
inline constexpr std::uint64_t kInnerTag = 24;

inline std::uint64_t fit_seed(std::uint64_t seed, std::uint64_t setting, std::uint64_t repeat, std::uint64_t fold) {
    return derive_seed(seed, {kFitTag, setting, repeat, fold});
}

/// Held-out evaluation of every model over a list of prepared splits.
struct SplitTask {
    std::string setting;
    double setting_value;
    int k;
    int repeat;
    int fold;
    std::uint64_t seed;
    const ObservedMatrix* data;
    const SplitPlan* plan;
};

inline std::vector<ExperimentRecord> run_split_tasks(const std::vector<ModelEntry>& models,
                                                     const std::vector<SplitTask>& tasks,
                                                     const ExperimentPlan& plan) {
    const int n = static_cast<int>(models.size() * tasks.size());
    std::vector<ExperimentRecord> out(static_cast<std::size_t>(n));
    const SamplerConfig cfg = job_sampler(plan);
    run_jobs(n, plan.jobs, [&](int job) {
        const auto& m = models[static_cast<std::size_t>(job) / tasks.size()];
        const auto& t = tasks[static_cast<std::size_t>(job) % tasks.size()];
        const auto train = t.data->restricted_to(t.plan->train_cells(t.fold));
        const auto test = t.plan->test_cells(t.fold);
        const auto ev = evaluate(m, t.k, *t.data, train, test, cfg, t.seed);
        ExperimentRecord r;
        r.model = m.name;
        r.setting = t.setting;
        r.setting_value = t.setting_value;
        r.repeat = t.repeat;
        r.fold = t.fold;
        r.seed = t.seed;
        r.chosen_k = m.spec ? t.k : 0;
        r.n_train = train.n_observed();
        r.n_test = static_cast<int>(test.size());
        r.train_mse = ev.train_mse;
        r.test_mse = ev.test_mse;
        r.variance_ratio = ev.variance_ratio;
        r.wall_seconds = ev.wall_seconds;
        out[static_cast<std::size_t>(job)] = std::move(r);
    });
    return out;
}

} // namespace detail

/// Mean training-MSE curve per model over n_repeats seeds at fixed K, fitted
/// on all observed cells.
inline ExperimentResult run_convergence(const ExperimentPlan& plan, const ObservedMatrix& data) {
    plan.validate();
    const auto models = detail::model_entries(plan, data);
    const int reps = plan.repeats();
    const int n = static_cast<int>(models.size()) * reps;
    std::vector<SamplerTrace> traces(static_cast<std::size_t>(n));
    std::vector<ExperimentRecord> records(static_cast<std::size_t>(n));
    SamplerConfig cfg = detail::job_sampler(plan);

    detail::run_jobs(n, plan.jobs, [&](int job) {
        const auto& m = models[static_cast<std::size_t>(job / reps)];
        const int rep = job % reps;
        SamplerConfig c = cfg;
        c.seed = detail::fit_seed(plan.seed, 0, static_cast<std::uint64_t>(rep), 0);
        const auto start = std::chrono::steady_clock::now();
        auto res = fit(m.spec->with_k(plan.fixed_k()), data, c);
        ExperimentRecord r;
        r.model = m.name;
        r.setting = "K";
        r.setting_value = plan.fixed_k();
        r.repeat = rep;
        r.seed = c.seed;
        r.chosen_k = plan.fixed_k();
        r.n_train = data.n_observed();
        r.train_mse = res.trace.training_mse.back();
        r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        records[static_cast<std::size_t>(job)] = std::move(r);
        traces[static_cast<std::size_t>(job)] = std::move(res.trace);
    });

    ExperimentResult out;
    out.protocol = plan.protocol;
    out.records = std::move(records);
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
        ConvergenceCurve curve{models[mi].name, std::vector<double>(static_cast<std::size_t>(plan.sampler.n_iterations), 0.0)};
        for (int rep = 0; rep < reps; ++rep) {
            const auto& tr = traces[mi * static_cast<std::size_t>(reps) + static_cast<std::size_t>(rep)];
            for (std::size_t t = 0; t < curve.mean_training_mse.size(); ++t)
                curve.mean_training_mse[t] += tr.training_mse[t];
        }
        for (double& v : curve.mean_training_mse)
            v /= reps;
        out.curves.push_back(std::move(curve));
    }
    return out;
}

/// Outer k-fold CV at fixed K, or, for nested_cv, with K chosen per outer
/// fold by an inner k-fold CV over the grid (smallest mean inner test MSE,
/// ties to the smaller K) and then refitted on the outer training set with
/// the same seed a plain CV fit of that fold would use.
inline ExperimentResult run_cross_validation(const ExperimentPlan& plan, const ObservedMatrix& data) {
    plan.validate();
    const bool nested = plan.protocol == Protocol::NestedCv;
    const auto models = detail::model_entries(plan, data);
    const int reps = plan.repeats();
    const int folds = plan.folds();

    std::vector<SplitPlan> splits;
    for (int rep = 0; rep < reps; ++rep)
        splits.push_back(make_kfold(data, folds, derive_seed(plan.seed, {detail::kSplitTag, 0,
                                                                         static_cast<std::uint64_t>(rep)})));

    ExperimentResult out;
    out.protocol = plan.protocol;
    if (!nested) {
        std::vector<detail::SplitTask> tasks;
        for (int rep = 0; rep < reps; ++rep)
            for (int f = 0; f < folds; ++f)
                tasks.push_back({"K", static_cast<double>(plan.fixed_k()), plan.fixed_k(), rep, f,
                                 detail::fit_seed(plan.seed, 0, static_cast<std::uint64_t>(rep),
                                                  static_cast<std::uint64_t>(f)),
                                 &data, &splits[static_cast<std::size_t>(rep)]});
        out.records = detail::run_split_tasks(models, tasks, plan);
        return out;
    }

    const auto& grid = plan.grid();
    const int per_model = reps * folds;
    const int n = static_cast<int>(models.size()) * per_model;
    out.records.resize(static_cast<std::size_t>(n));
    const SamplerConfig cfg = detail::job_sampler(plan);
    detail::run_jobs(n, plan.jobs, [&](int job) {
        const auto& m = models[static_cast<std::size_t>(job / per_model)];
        const int rep = (job % per_model) / folds;
        const int f = job % folds;
        const auto& split = splits[static_cast<std::size_t>(rep)];
        const auto outer_train = data.restricted_to(split.train_cells(f));
        const auto outer_test = split.test_cells(f);
        const auto seed = detail::fit_seed(plan.seed, 0, static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(f));

        int chosen = 0;
        if (m.spec) {
            if (grid.size() == 1) {
                chosen = grid.front();
            } else {
                const auto inner_seed = derive_seed(seed, {detail::kInnerTag});
                const auto inner = make_kfold(outer_train, plan.inner_folds, inner_seed);
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t g = 0; g < grid.size(); ++g) {
                    double total = 0.0;
                    for (int inf = 0; inf < plan.inner_folds; ++inf) {
                        const auto tr = outer_train.restricted_to(inner.train_cells(inf));
                        const auto ev = detail::evaluate(m, grid[g], outer_train, tr, inner.test_cells(inf), cfg,
                                                         derive_seed(inner_seed, {g, static_cast<std::uint64_t>(inf)}));
                        total += ev.test_mse;
                    }
                    const double mean_mse = total / plan.inner_folds;
                    if (mean_mse < best || (mean_mse == best && grid[g] < chosen)) {
                        best = mean_mse;
                        chosen = grid[g];
                    }
                }
            }
        }
        const auto ev = detail::evaluate(m, chosen, data, outer_train, outer_test, cfg, seed);
        ExperimentRecord r;
        r.model = m.name;
        r.setting = "nested";
        r.repeat = rep;
        r.fold = f;
        r.seed = seed;
        r.chosen_k = chosen;
        r.n_train = outer_train.n_observed();
        r.n_test = static_cast<int>(outer_test.size());
        r.train_mse = ev.train_mse;
        r.test_mse = ev.test_mse;
        r.variance_ratio = ev.variance_ratio;
        r.wall_seconds = ev.wall_seconds;
        out.records[static_cast<std::size_t>(job)] = std::move(r);
    });
    return out;
}

/// Per noise-to-signal level: perturb the data, then k-fold (default 10)
/// evaluation at fixed K (default 5), scored by the variance ratio.
inline ExperimentResult run_noise(const ExperimentPlan& plan, const ObservedMatrix& data) {
    plan.validate();
    const auto models = detail::model_entries(plan, data);
    const int reps = plan.repeats();
    const int folds = plan.folds();
    std::vector<ObservedMatrix> noisy;
    std::vector<SplitPlan> splits;
    for (std::size_t l = 0; l < plan.noise_levels.size(); ++l)
        noisy.push_back(add_noise(data, plan.noise_levels[l], derive_seed(plan.seed, {detail::kNoiseTag, l})));
    for (std::size_t l = 0; l < plan.noise_levels.size(); ++l)
        for (int rep = 0; rep < reps; ++rep)
            splits.push_back(make_kfold(noisy[l], folds,
                                        derive_seed(plan.seed, {detail::kSplitTag, l, static_cast<std::uint64_t>(rep)})));

    std::vector<detail::SplitTask> tasks;
    for (std::size_t l = 0; l < plan.noise_levels.size(); ++l)
        for (int rep = 0; rep < reps; ++rep)
            for (int f = 0; f < folds; ++f)
                tasks.push_back({"noise_to_signal", plan.noise_levels[l], plan.fixed_k(), rep, f,
                                 detail::fit_seed(plan.seed, l, static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(f)),
                                 &noisy[l], &splits[l * static_cast<std::size_t>(reps) + static_cast<std::size_t>(rep)]});
    ExperimentResult out;
    out.protocol = plan.protocol;
    out.records = detail::run_split_tasks(models, tasks, plan);
    return out;
}

/// Per held-out fraction: random holdout, fit at fixed K, n_repeats times.
inline ExperimentResult run_sparsity(const ExperimentPlan& plan, const ObservedMatrix& data) {
    plan.validate();
    const auto models = detail::model_entries(plan, data);
    const int reps = plan.repeats();
    std::vector<SplitPlan> splits;
    for (std::size_t l = 0; l < plan.fractions.size(); ++l)
        for (int rep = 0; rep < reps; ++rep)
            splits.push_back(make_holdout(data, plan.fractions[l],
                                          derive_seed(plan.seed, {detail::kSplitTag, l, static_cast<std::uint64_t>(rep)})));
    std::vector<detail::SplitTask> tasks;
    for (std::size_t l = 0; l < plan.fractions.size(); ++l)
        for (int rep = 0; rep < reps; ++rep)
            tasks.push_back({"fraction_unobserved", plan.fractions[l], plan.fixed_k(), rep, 0,
                             detail::fit_seed(plan.seed, l, static_cast<std::uint64_t>(rep), 0), &data,
                             &splits[l * static_cast<std::size_t>(reps) + static_cast<std::size_t>(rep)]});
    ExperimentResult out;
    out.protocol = plan.protocol;
    out.records = detail::run_split_tasks(models, tasks, plan);
    return out;
}

/// Per K in the grid: hold out `holdout` (default 10%) of the cells, fit,
/// and score, n_repeats times. Every K of a repeat shares the same split.
inline ExperimentResult run_model_selection(const ExperimentPlan& plan, const ObservedMatrix& data) {
    plan.validate();
    const auto models = detail::model_entries(plan, data);
    const int reps = plan.repeats();
    std::vector<SplitPlan> splits;
    for (int rep = 0; rep < reps; ++rep)
        splits.push_back(make_holdout(data, plan.holdout,
                                      derive_seed(plan.seed, {detail::kSplitTag, 0, static_cast<std::uint64_t>(rep)})));
    std::vector<detail::SplitTask> tasks;
    for (std::size_t g = 0; g < plan.grid().size(); ++g)
        for (int rep = 0; rep < reps; ++rep)
            tasks.push_back({"K", static_cast<double>(plan.grid()[g]), plan.grid()[g], rep, 0,
                             detail::fit_seed(plan.seed, 0, static_cast<std::uint64_t>(rep), 0), &data,
                             &splits[static_cast<std::size_t>(rep)]});
    ExperimentResult out;
    out.protocol = plan.protocol;
    out.records = detail::run_split_tasks(models, tasks, plan);
    return out;
}

inline ExperimentResult run_experiment(const ExperimentPlan& plan, const ObservedMatrix& data) {
    switch (plan.protocol) {
    case Protocol::Convergence: return run_convergence(plan, data);
    case Protocol::CrossValidation:
    case Protocol::NestedCv: return run_cross_validation(plan, data);
    case Protocol::Noise: return run_noise(plan, data);
    case Protocol::Sparsity: return run_sparsity(plan, data);
    case Protocol::ModelSelection: return run_model_selection(plan, data);
    }
    throw ConfigError("unknown protocol");
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline std::string format_field(double x) { return std::isnan(x) ? std::string("NA") : format_double(x); }

inline constexpr const char* records_header =
    "model,setting,setting_value,repeat,fold,seed,chosen_k,n_train,n_test,train_mse,test_mse,variance_ratio,"
    "wall_seconds";

/// One headered line per record. wall_seconds is NA unless `timings`.
inline void write_records(std::ostream& out, const ExperimentResult& res, bool timings) {
    out << records_header << '\n';
    for (const auto& r : res.records) {
        out << r.model << ',' << r.setting << ',' << format_field(r.setting_value) << ',' << r.repeat << ','
            << r.fold << ',' << r.seed << ',' << (r.chosen_k > 0 ? std::to_string(r.chosen_k) : std::string("NA"))
            << ',' << r.n_train << ',' << r.n_test << ',' << format_field(r.train_mse) << ','
            << format_field(r.test_mse) << ',' << format_field(r.variance_ratio) << ','
            << (timings ? format_field(r.wall_seconds) : std::string("NA")) << '\n';
    }
}

struct MeanSd {
    double mean = na;
    double sd = na;
};

/// Mean and sample standard deviation, accumulated in record order. NaN
/// values are skipped; sd needs two values.
inline MeanSd mean_sd(const std::vector<double>& xs) {
    double sum = 0.0;
    int n = 0;
    for (double x : xs)
        if (!std::isnan(x)) {
            sum += x;
            ++n;
        }
    MeanSd out;
    if (n == 0)
        return out;
    out.mean = sum / n;
    if (n > 1) {
        double ss = 0.0;
        for (double x : xs)
            if (!std::isnan(x))
                ss += (x - out.mean) * (x - out.mean);
        out.sd = std::sqrt(ss / (n - 1));
    }
    return out;
}

struct SummaryRow {
    std::string model;
    std::string setting;
    double setting_value = na;
    int n = 0;
    MeanSd train_mse;
    MeanSd test_mse;
    MeanSd variance_ratio;
    double mean_chosen_k = na;
};

/// Aggregate records per (model, setting, setting_value), in order of first
/// appearance.
inline std::vector<SummaryRow> summarise(const std::vector<ExperimentRecord>& records) {
    std::vector<SummaryRow> rows;
    std::vector<std::vector<const ExperimentRecord*>> groups;
    auto same_value = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
    for (const auto& r : records) {
        std::size_t g = 0;
        while (g < rows.size() && !(rows[g].model == r.model && rows[g].setting == r.setting &&
                                    same_value(rows[g].setting_value, r.setting_value)))
            ++g;
        if (g == rows.size()) {
            SummaryRow row;
            row.model = r.model;
            row.setting = r.setting;
            row.setting_value = r.setting_value;
            rows.push_back(std::move(row));
            groups.emplace_back();
        }
        groups[g].push_back(&r);
    }
    for (std::size_t g = 0; g < rows.size(); ++g) {
        std::vector<double> train;
        std::vector<double> test;
        std::vector<double> ratio;
        std::vector<double> ks;
        for (const auto* r : groups[g]) {
            train.push_back(r->train_mse);
            test.push_back(r->test_mse);
            ratio.push_back(r->variance_ratio);
            ks.push_back(r->chosen_k > 0 ? static_cast<double>(r->chosen_k) : na);
        }
        rows[g].n = static_cast<int>(groups[g].size());
        rows[g].train_mse = mean_sd(train);
        rows[g].test_mse = mean_sd(test);
        rows[g].variance_ratio = mean_sd(ratio);
        rows[g].mean_chosen_k = mean_sd(ks).mean;
    }
    return rows;
}

inline void write_summary(std::ostream& out, const ExperimentResult& res) {
    out << "model,setting,setting_value,n,train_mse_mean,train_mse_sd,test_mse_mean,test_mse_sd,"
           "variance_ratio_mean,variance_ratio_sd,chosen_k_mean\n";
    for (const auto& s : summarise(res.records)) {
        out << s.model << ',' << s.setting << ',' << format_field(s.setting_value) << ',' << s.n << ','
            << format_field(s.train_mse.mean) << ',' << format_field(s.train_mse.sd) << ','
            << format_field(s.test_mse.mean) << ',' << format_field(s.test_mse.sd) << ','
            << format_field(s.variance_ratio.mean) << ',' << format_field(s.variance_ratio.sd) << ','
            << format_field(s.mean_chosen_k) << '\n';
    }
}

/// Convergence curves in long form: iteration, model, mean training MSE.
inline void write_curves(std::ostream& out, const ExperimentResult& res) {
    out << "iteration,model,mean_training_MSE\n";
    for (const auto& c : res.curves)
        for (std::size_t t = 0; t < c.mean_training_mse.size(); ++t)
            out << (t + 1) << ',' << c.model << ',' << format_double(c.mean_training_mse[t]) << '\n';
}

} // namespace bmf
