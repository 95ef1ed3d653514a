#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "bmf/bmf.hpp"

using namespace bmf;

namespace {

ObservedMatrix synthetic(int rows, int cols, int k, Family family, double tau, std::uint64_t seed,
                         double fraction = 1.0) {
    return generate_synthetic(SyntheticSpec{rows, cols, k, family, tau, fraction, seed}).matrix;
}

ExperimentPlan small_plan(Protocol p, std::vector<ModelKind> kinds, int k = 2) {
    ExperimentPlan plan;
    plan.protocol = p;
    for (auto kind : kinds)
        plan.models.emplace_back(kind, k);
    plan.k = k;
    plan.sampler.n_iterations = 40;
    plan.sampler.burn_in = 20;
    plan.sampler.thinning = 2;
    plan.seed = 17;
    return plan;
}

std::size_t count_model(const ExperimentResult& r, const std::string& model) {
    std::size_t n = 0;
    for (const auto& rec : r.records)
        n += rec.model == model;
    return n;
}

} // namespace

TEST(Plan, Defaults) {
    ExperimentPlan p;
    p.protocol = Protocol::Convergence;
    EXPECT_EQ(p.fixed_k(), 20);
    EXPECT_EQ(p.repeats(), 10);
    p.protocol = Protocol::Noise;
    EXPECT_EQ(p.folds(), 10);
    EXPECT_EQ(p.fixed_k(), 5);
    EXPECT_EQ(p.repeats(), 1);
    p.protocol = Protocol::NestedCv;
    EXPECT_EQ(p.grid(), default_k_grid());
    EXPECT_EQ(p.folds(), 5);
}

TEST(Plan, Validation) {
    auto p = small_plan(Protocol::Noise, {ModelKind::GGG});
    EXPECT_THROW(p.validate(), ConfigError);
    p.noise_levels = {-0.1};
    EXPECT_THROW(p.validate(), ConfigError);
    p.noise_levels = {0.1};
    EXPECT_NO_THROW(p.validate());
    p.models.clear();
    EXPECT_THROW(p.validate(), ConfigError);
    auto s = small_plan(Protocol::Sparsity, {ModelKind::GGG});
    s.fractions = {1.0};
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_THROW(parse_protocol("bogus"), ConfigError);
}

TEST(Convergence, SingleRepeatCurveIsTheTrace) {
    const auto data = synthetic(12, 10, 2, Family::Gaussian, 4.0, 1);
    auto plan = small_plan(Protocol::Convergence, {ModelKind::GGG, ModelKind::GEE});
    plan.n_repeats = 1;
    const auto res = run_experiment(plan, data);
    ASSERT_EQ(res.curves.size(), 2u);
    SamplerConfig cfg = plan.sampler;
    cfg.seed = detail::fit_seed(plan.seed, 0, 0, 0);
    const auto direct = fit(ModelSpec(ModelKind::GGG, 2), data, cfg);
    EXPECT_EQ(res.curves[0].mean_training_mse, direct.trace.training_mse);
    EXPECT_EQ(res.curves[0].mean_training_mse.size(), 40u);
}

TEST(Convergence, CurveIsMeanOverRepeats) {
    const auto data = synthetic(10, 8, 2, Family::Gaussian, 4.0, 2);
    auto plan = small_plan(Protocol::Convergence, {ModelKind::GGG});
    plan.n_repeats = 3;
    const auto res = run_experiment(plan, data);
    std::vector<double> want(40, 0.0);
    for (int rep = 0; rep < 3; ++rep) {
        SamplerConfig cfg = plan.sampler;
        cfg.seed = detail::fit_seed(plan.seed, 0, static_cast<std::uint64_t>(rep), 0);
        const auto tr = fit(ModelSpec(ModelKind::GGG, 2), data, cfg).trace.training_mse;
        for (std::size_t t = 0; t < want.size(); ++t)
            want[t] += tr[t];
    }
    for (std::size_t t = 0; t < want.size(); ++t)
        EXPECT_NEAR(res.curves[0].mean_training_mse[t], want[t] / 3.0, 1e-12 * (1.0 + want[t]));
    EXPECT_EQ(res.records.size(), 3u);
}

TEST(CrossValidation, RecordCountsAndDisjointFolds) {
    const auto data = synthetic(12, 10, 2, Family::Gaussian, 4.0, 3);
    auto plan = small_plan(Protocol::CrossValidation, {ModelKind::GGG, ModelKind::GEE});
    const auto res = run_experiment(plan, data);
    EXPECT_EQ(count_model(res, "GGG"), 5u);
    EXPECT_EQ(count_model(res, "GEE"), 5u);
    int total_test = 0;
    for (const auto& r : res.records)
        if (r.model == "GGG") {
            total_test += r.n_test;
            EXPECT_EQ(r.n_test + r.n_train, data.n_observed());
        }
    EXPECT_EQ(total_test, data.n_observed());
}

TEST(NestedCv, TwoModelsFiveFolds) {
    const auto data = synthetic(12, 10, 2, Family::Gaussian, 4.0, 4);
    auto plan = small_plan(Protocol::NestedCv, {ModelKind::GGG, ModelKind::GGGA});
    plan.k_grid = {1, 2, 3};
    plan.inner_folds = 3;
    const auto res = run_experiment(plan, data);
    EXPECT_EQ(res.records.size(), 10u);
    for (const auto& r : res.records) {
        EXPECT_EQ(r.setting, "nested");
        EXPECT_TRUE(r.chosen_k == 1 || r.chosen_k == 2 || r.chosen_k == 3);
    }
    const auto again = run_experiment(plan, data);
    for (std::size_t i = 0; i < res.records.size(); ++i) {
        EXPECT_EQ(res.records[i].chosen_k, again.records[i].chosen_k);
        EXPECT_EQ(res.records[i].test_mse, again.records[i].test_mse);
    }
}

TEST(NestedCv, SingletonGridEqualsPlainCv) {
    const auto data = synthetic(12, 10, 2, Family::Gaussian, 4.0, 5);
    auto cv = small_plan(Protocol::CrossValidation, {ModelKind::GGG});
    auto nested = cv;
    nested.protocol = Protocol::NestedCv;
    nested.k_grid = {2};
    const auto a = run_experiment(cv, data);
    const auto b = run_experiment(nested, data);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].test_mse, b.records[i].test_mse);
        EXPECT_EQ(b.records[i].chosen_k, 2);
    }
}

TEST(Noise, NoiselessDataIsWellExplained) {
    const auto data = synthetic(20, 15, 2, Family::Gaussian, std::numeric_limits<double>::infinity(), 6);
    auto plan = small_plan(Protocol::Noise, {ModelKind::GGG});
    plan.noise_levels = {0.0, 0.5};
    plan.n_folds = 5;
    plan.baselines = true;
    plan.sampler.n_iterations = 200;
    plan.sampler.burn_in = 100;
    const auto res = run_experiment(plan, data);
    EXPECT_EQ(count_model(res, "GGG"), 10u);
    EXPECT_EQ(count_model(res, "ROWAVG"), 10u);
    EXPECT_EQ(count_model(res, "NMF"), 0u); // data has negative values
    std::map<std::pair<std::string, double>, std::vector<double>> ratios;
    for (const auto& r : res.records)
        ratios[{r.model, r.setting_value}].push_back(r.variance_ratio);
    const auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v)
            s += x;
        return s / static_cast<double>(v.size());
    };
    EXPECT_GT(mean(ratios[{"GGG", 0.0}]), 20.0);
    for (double level : {0.0, 0.5}) {
        const double rr = mean(ratios[{"ROWAVG", level}]);
        EXPECT_GT(rr, 0.5);
        EXPECT_LT(rr, 2.0);
    }
}

TEST(Sparsity, RecordsPerFraction) {
    const auto data = synthetic(12, 10, 2, Family::Gaussian, 4.0, 7);
    auto plan = small_plan(Protocol::Sparsity, {ModelKind::GGG});
    plan.fractions = {0.2, 0.5, 0.8};
    plan.n_repeats = 10;
    plan.sampler.n_iterations = 10;
    plan.sampler.burn_in = 5;
    plan.sampler.thinning = 1;
    const auto res = run_experiment(plan, data);
    EXPECT_EQ(res.records.size(), 30u);
    std::map<double, int> per;
    for (const auto& r : res.records)
        ++per[r.setting_value];
    EXPECT_EQ(per[0.2], 10);
    EXPECT_EQ(per[0.8], 10);
}

TEST(Sparsity, SingleTestCell) {
    const auto data = synthetic(12, 10, 2, Family::Gaussian, 4.0, 8);
    auto plan = small_plan(Protocol::Sparsity, {ModelKind::GGG});
    plan.fractions = {1.0 / 120.0};
    plan.n_repeats = 1;
    plan.baselines = true;
    const auto res = run_experiment(plan, data);
    for (const auto& r : res.records)
        EXPECT_EQ(r.n_test, 1);
    // ROWAVG: recompute the single squared error from the split.
    const auto split = make_holdout(data, plan.fractions[0], derive_seed(plan.seed, {detail::kSplitTag, 0, 0}));
    const auto train = data.restricted_to(split.train_cells(0));
    const auto pred = detail::row_average_prediction(train);
    const auto& cell = data.cells()[static_cast<std::size_t>(split.test_cells(0).front())];
    const double err = (pred(cell.row, cell.col) - cell.value) * (pred(cell.row, cell.col) - cell.value);
    for (const auto& r : res.records)
        if (r.model == "ROWAVG") {
            EXPECT_DOUBLE_EQ(r.test_mse, err);
        }
}

TEST(ModelSelection, UnderfitAtKOne) {
    const double tau = 4.0;
    const auto data = synthetic(30, 25, 3, Family::Gaussian, tau, 9);
    auto plan = small_plan(Protocol::ModelSelection, {ModelKind::GGG});
    plan.k_grid = {1, 3};
    plan.n_repeats = 2;
    plan.sampler.n_iterations = 200;
    plan.sampler.burn_in = 100;
    const auto res = run_experiment(plan, data);
    EXPECT_EQ(res.records.size(), 4u);
    for (const auto& r : res.records) {
        EXPECT_EQ(r.setting, "K");
        if (r.chosen_k == 1) {
            EXPECT_GT(r.test_mse, 1.0 / tau);
        }
    }
}

TEST(Baselines, NmfAddedOnNonnegativeData) {
    const auto data = synthetic(12, 10, 2, Family::Nonnegative, 4.0, 10);
    auto plan = small_plan(Protocol::CrossValidation, {ModelKind::GEE});
    plan.baselines = true;
    const auto res = run_experiment(plan, data);
    EXPECT_EQ(count_model(res, "NMF"), 5u);
    EXPECT_EQ(count_model(res, "ROWAVG"), 5u);
    for (const auto& r : res.records)
        if (r.model == "ROWAVG") {
            EXPECT_EQ(r.chosen_k, 0);
        }
}

TEST(Jobs, ParallelJobsMatchSerial) {
    const auto data = synthetic(12, 10, 2, Family::Gaussian, 4.0, 11);
    auto plan = small_plan(Protocol::CrossValidation, {ModelKind::GGG, ModelKind::GEE});
    plan.sampler.parallel_rows = false;
    const auto serial = run_experiment(plan, data);
    plan.jobs = 3;
    const auto par = run_experiment(plan, data);
    ASSERT_EQ(serial.records.size(), par.records.size());
    for (std::size_t i = 0; i < serial.records.size(); ++i)
        EXPECT_EQ(serial.records[i].test_mse, par.records[i].test_mse);
}

TEST(Summary, RecomputedFromRecords) {
    const auto data = synthetic(12, 10, 2, Family::Gaussian, 4.0, 12);
    auto plan = small_plan(Protocol::CrossValidation, {ModelKind::GGG});
    plan.baselines = true;
    const auto res = run_experiment(plan, data);
    const auto rows = summarise(res.records);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].model, "GGG");
    std::vector<double> xs;
    for (const auto& r : res.records)
        if (r.model == "GGG")
            xs.push_back(r.test_mse);
    double mean = 0.0;
    for (double x : xs)
        mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs)
        ss += (x - mean) * (x - mean);
    EXPECT_NEAR(rows[0].test_mse.mean, mean, 1e-12 * mean);
    EXPECT_NEAR(rows[0].test_mse.sd, std::sqrt(ss / (static_cast<double>(xs.size()) - 1.0)), 1e-12 * mean);
    EXPECT_EQ(rows[0].n, 5);
    EXPECT_DOUBLE_EQ(rows[0].mean_chosen_k, 2.0);
    EXPECT_TRUE(std::isnan(rows[1].mean_chosen_k));
}

TEST(Output, RecordsAreReproducible) {
    const auto data = synthetic(12, 10, 2, Family::Gaussian, 4.0, 13);
    auto plan = small_plan(Protocol::CrossValidation, {ModelKind::GGG});
    std::ostringstream a, b, sa, sb;
    const auto r1 = run_experiment(plan, data);
    const auto r2 = run_experiment(plan, data);
    write_records(a, r1, false);
    write_records(b, r2, false);
    write_summary(sa, r1);
    write_summary(sb, r2);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(a.str().substr(0, a.str().find('\n')), records_header);
    EXPECT_NE(a.str().find(",NA\n"), std::string::npos);
}
