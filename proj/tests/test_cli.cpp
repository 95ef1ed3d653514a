#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bmf/matrix_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string err;
};

class Cli : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("bmf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    Outcome run(const std::string& args) const {
        const auto err = dir_ / "stderr.txt";
        const std::string cmd = "cd '" + dir_.string() + "' && '" BMF_EXE "' " + args + " >/dev/null 2>'" +
                                err.string() + "'";
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
    }

    std::string slurp(const fs::path& p) const {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    std::string read(const std::string& rel) const { return slurp(dir_ / rel); }

    void write(const std::string& rel, const std::string& text) const {
        std::ofstream out(dir_ / rel, std::ios::binary);
        out << text;
    }

    static std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

    static std::size_t count_prefix(const std::string& csv, const std::string& prefix) {
        std::istringstream in(csv);
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line))
            n += line.rfind(prefix, 0) == 0;
        return n;
    }

    fs::path dir_;
};

const char* quick = " --iterations 30 --burn-in 10 --thinning 2";

} // namespace

TEST_F(Cli, SynthWritesFullMatrix) {
    ASSERT_EQ(run("synth --rows 50 --cols 40 --k 5 --family gaussian --seed 1 -o m.csv").code, 0);
    bmf::LoadOptions opts{1};
    const auto m = bmf::load_matrix((dir_ / "m.csv").string(), opts);
    EXPECT_EQ(m.matrix.n_observed(), 2000);
    const auto manifest = nlohmann::json::parse(read("m.csv.json"));
    EXPECT_EQ(manifest["rows"], 50);
    EXPECT_EQ(manifest["matrix"], "m.csv");
}

TEST_F(Cli, SynthFractionAndManifestRegeneration) {
    ASSERT_EQ(run("synth --rows 50 --cols 40 --k 5 --family nonnegative --fraction 0.8 --seed 3 -o a.csv").code, 0);
    bmf::LoadOptions opts{1};
    const auto m = bmf::load_matrix((dir_ / "a.csv").string(), opts);
    EXPECT_LE(std::abs(m.meta.fraction_observed - 0.8), 1.0 / 2000.0);
    ASSERT_EQ(run("synth --from-manifest a.csv.json -o b.csv").code, 0);
    EXPECT_EQ(read("a.csv"), read("b.csv"));
}

TEST_F(Cli, SynthRejectsBadFamily) {
    EXPECT_EQ(run("synth --rows 5 --cols 4 --k 2 --family cauchy -o x.csv").code, 2);
}

TEST_F(Cli, FitIsByteDeterministic) {
    ASSERT_EQ(run("synth --rows 20 --cols 15 --k 3 --family gaussian --fraction 0.8 --seed 2 -o m.csv").code, 0);
    const std::string args = std::string("fit --model GGG --k 5 --data m.csv --seed 7 -o out") + quick;
    ASSERT_EQ(run(args).code, 0);
    const auto trace = read("out/trace.csv");
    const auto preds = read("out/predictions.csv");
    const auto cfg = read("out/resolved_config.json");
    ASSERT_EQ(run(args).code, 0);
    EXPECT_EQ(trace, read("out/trace.csv"));
    EXPECT_EQ(preds, read("out/predictions.csv"));
    EXPECT_EQ(cfg, read("out/resolved_config.json"));
    EXPECT_EQ(lines(trace), 31u);
    EXPECT_EQ(lines(preds), 1u + 20u * 15u);
}

TEST_F(Cli, PoissonOnRealValuedDataIsDataError) {
    write("m.csv", "1,2,3\n4,5.5,6\n7,8,9\n");
    const auto r = run(std::string("fit --model PGG --k 1 --data m.csv -o out") + quick);
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("cell (1, 1)"), std::string::npos) << r.err;
}

TEST_F(Cli, VolumeModelNeedsGamma) {
    write("m.csv", "1,2,3\n4,5,6\n7,8,10\n");
    EXPECT_EQ(run(std::string("fit --model GVG --k 2 --data m.csv -o out") + quick).code, 2);
    EXPECT_EQ(run(std::string("fit --model GVG --k 2 --gamma 0.5 --data m.csv -o out") + quick).code, 0);
}

TEST_F(Cli, ConfigErrors) {
    write("m.csv", "1,2,3\n4,5,6\n7,8,10\n");
    EXPECT_EQ(run("fit --model NOPE --data m.csv").code, 2);
    EXPECT_EQ(run("fit --model GGG --data m.csv --bogus-flag").code, 2);
    write("bad.json", R"({"model": "GGG", "data": "m.csv", "colour": 1})");
    EXPECT_EQ(run("fit --config bad.json").code, 2);
    write("broken.json", "{ not json");
    EXPECT_EQ(run("fit --config broken.json").code, 2);
    EXPECT_EQ(run(std::string("fit --model GGG --data m.csv --hyper nope=1") + quick).code, 2);
}

TEST_F(Cli, DataErrors) {
    EXPECT_EQ(run("fit --model GGG --data missing.csv").code, 3);
    write("ragged.csv", "1,2,3\n4,5\n");
    EXPECT_EQ(run("fit --model GGG --data ragged.csv").code, 3);
}

TEST_F(Cli, FlagsOverrideConfigFile) {
    write("m.csv", "1,2,3,4\n4,5,6,7\n7,8,10,1\n2,2,2,3\n");
    write("run.json", R"({"model": "GGG", "data": "m.csv", "k": 3, "sampler": {"n_iterations": 30, "burn_in": 10, "seed": 4}})");
    ASSERT_EQ(run("fit --config run.json --k 2 -o out").code, 0);
    const auto cfg = nlohmann::json::parse(read("out/resolved_config.json"));
    EXPECT_EQ(cfg["k"], 2);
    EXPECT_EQ(cfg["sampler"]["seed"], 4);
    EXPECT_EQ(cfg["sampler"]["n_iterations"], 30);
    // the resolved copy reproduces the run
    const auto preds = read("out/predictions.csv");
    fs::copy_file(dir_ / "out/resolved_config.json", dir_ / "again.json");
    ASSERT_EQ(run("fit --config again.json").code, 0);
    EXPECT_EQ(preds, read("out/predictions.csv"));
}

TEST_F(Cli, PredictSelectedCells) {
    write("m.csv", "1,2,3,4\n4,5,6,7\n7,8,10,1\n2,2,2,3\n");
    write("cells.csv", "0,0\n3,2\n");
    ASSERT_EQ(run(std::string("fit --model GEE --k 2 --data m.csv --predict cells.csv -o out") + quick).code, 0);
    EXPECT_EQ(lines(read("out/predictions.csv")), 3u);
    write("far.csv", "9,9\n");
    EXPECT_EQ(run(std::string("fit --model GEE --k 2 --data m.csv --predict far.csv -o out") + quick).code, 3);
}

TEST_F(Cli, NestedExperimentRecords) {
    ASSERT_EQ(run("synth --rows 12 --cols 10 --k 2 --family gaussian --seed 5 -o m.csv").code, 0);
    ASSERT_EQ(run(std::string("experiment --protocol nested_cv --models GGG,GEE --k-grid 1,2 --data m.csv -o out --folds 5") +
                  quick + " --hyper lambda=0.1")
                  .code,
              0);
    const auto recs = read("out/records.csv");
    EXPECT_EQ(lines(recs), 11u);
    EXPECT_EQ(count_prefix(recs, "GGG,"), 5u);
}

TEST_F(Cli, SparsityExperimentAndSummaryDeterminism) {
    ASSERT_EQ(run("synth --rows 12 --cols 10 --k 2 --family gaussian --seed 6 -o m.csv").code, 0);
    const std::string args =
        "experiment --protocol sparsity --fractions 0.2,0.5,0.8 --repeats 10 --models GGG --data m.csv -o out "
        "--iterations 10 --burn-in 5 --thinning 1 --k 2";
    ASSERT_EQ(run(args).code, 0);
    const auto summary = read("out/summary.csv");
    EXPECT_EQ(count_prefix(read("out/records.csv"), "GGG,"), 30u);
    ASSERT_EQ(run(args + " --jobs 2").code, 0);
    EXPECT_EQ(summary, read("out/summary.csv"));
}

TEST_F(Cli, ConvergenceWritesCurves) {
    ASSERT_EQ(run("synth --rows 12 --cols 10 --k 2 --family nonnegative --seed 7 -o m.csv").code, 0);
    ASSERT_EQ(run(std::string("experiment --protocol convergence --models GGG,GEE --repeats 2 --k 2 --data m.csv -o out") +
                  quick)
                  .code,
              0);
    EXPECT_EQ(lines(read("out/curves.csv")), 1u + 2u * 30u);
}

TEST_F(Cli, ExperimentNeedsSettings) {
    ASSERT_EQ(run("synth --rows 12 --cols 10 --k 2 --family gaussian --seed 5 -o m.csv").code, 0);
    EXPECT_EQ(run("experiment --protocol noise --models GGG --data m.csv -o out").code, 2);
    EXPECT_EQ(run("experiment --protocol wrong --models GGG --data m.csv -o out").code, 2);
}

TEST_F(Cli, Selftest) { EXPECT_EQ(run("selftest").code, 0); }
