#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>
#include <sstream>
#include <string>

#include "qksa/config.hpp"

namespace fs = std::filesystem;

namespace {

fs::path fixture(const std::string& name) { return fs::path(QKSA_FIXTURE_DIR) / name; }

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Result
{
    int code = -1;
    std::string err;
};

class Cli : public ::testing::Test
{
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() /
               ("qksa_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    Result run(const std::string& args, const std::string& env_prefix = "unset QKSA_SEED; ")
    {
        fs::path const err = dir_ / "stderr.txt";
        std::string const cmd = env_prefix + "'" + std::string(QKSA_CLI) + "' " + args + " > '" +
                                (dir_ / "stdout.txt").string() + "' 2> '" + err.string() + "'";
        int const status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.err = slurp(err);
        return r;
    }

    std::string q(const fs::path& p) const { return "'" + p.string() + "'"; }

    fs::path dir_;
};

std::string report_value(const fs::path& report, const std::string& key)
{
    return qksa::KeyValueFile::load(report).require(key).value;
}

} // namespace

TEST_F(Cli, TomoQstExactIsExact)
{
    auto const r = run("tomo --method qst --env " + q(fixture("id1q.cfg")) + " --shots exact --out " + q(dir_ / "o"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(report_value(dir_ / "o/report.txt", "method"), "qst");
    EXPECT_EQ(report_value(dir_ / "o/report.txt", "settings_count"), "3");
    EXPECT_LE(std::stod(report_value(dir_ / "o/report.txt", "trace_distance")), 1e-6);
    std::string const csv = slurp(dir_ / "o/trace_distance.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "shots,trace_distance");
}

TEST_F(Cli, TomoSqptSettingsCount)
{
    auto const r = run("tomo --method sqpt --env " + q(fixture("h1q.cfg")) + " --shots 10000 --out " + q(dir_ / "o"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(report_value(dir_ / "o/report.txt", "settings_count"), "18");
    EXPECT_EQ(report_value(dir_ / "o/report.txt", "shots_per_setting"), "10000");
    EXPECT_EQ(report_value(dir_ / "o/report.txt", "matrix_dim"), "4");
}

TEST_F(Cli, TomoIsDeterministicAndSeedable)
{
    std::string const base = "tomo --method sqpt --env " + q(fixture("h1q.cfg")) + " --shots 100 --out ";
    ASSERT_EQ(run(base + q(dir_ / "a")).code, 0);
    ASSERT_EQ(run(base + q(dir_ / "b")).code, 0);
    EXPECT_EQ(slurp(dir_ / "a/report.txt"), slurp(dir_ / "b/report.txt"));
    ASSERT_EQ(run(base + q(dir_ / "c") + " --seed 5").code, 0);
    EXPECT_NE(slurp(dir_ / "a/report.txt"), slurp(dir_ / "c/report.txt"));
    ASSERT_EQ(run(base + q(dir_ / "d"), "QKSA_SEED=5 ").code, 0);
    EXPECT_EQ(slurp(dir_ / "c/report.txt"), slurp(dir_ / "d/report.txt"));
    // the flag wins over the variable
    ASSERT_EQ(run(base + q(dir_ / "e") + " --seed 5", "QKSA_SEED=6 ").code, 0);
    EXPECT_EQ(slurp(dir_ / "c/report.txt"), slurp(dir_ / "e/report.txt"));
}

TEST_F(Cli, MissingConfigWritesNothing)
{
    auto const r = run("tomo --method qst --env " + q(dir_ / "missing.cfg") + " --out " + q(dir_ / "o"));
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(r.err.empty());
    EXPECT_FALSE(fs::exists(dir_ / "o"));
    EXPECT_EQ(run("run --config " + q(dir_ / "missing.cfg") + " --out " + q(dir_ / "r")).code, 2);
    EXPECT_FALSE(fs::exists(dir_ / "r"));
}

TEST_F(Cli, UsageErrors)
{
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("tomo --method nope --env " + q(fixture("id1q.cfg")) + " --out " + q(dir_ / "o")).code, 2);
    EXPECT_EQ(run("tomo --method qst --env " + q(fixture("id1q.cfg")) + " --shots -3 --out " + q(dir_ / "o")).code, 2);
    EXPECT_EQ(run("tomo --method eapt --env " + q(fixture("x1q.cfg")) + " --out " + q(dir_ / "o")).code, 2);
    EXPECT_EQ(run("tomo --method qst --env " + q(fixture("id1q.cfg")) + " --out " + q(dir_ / "o"), "QKSA_SEED=abc ")
                  .code,
              2);
    EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, RunMatchesGoldenFiles)
{
    auto const r = run("run --config " + q(fixture("acceptance_run.cfg")) + " --out " + q(dir_ / "run"));
    ASSERT_EQ(r.code, 0) << r.err;
    fs::path const golden = fixture("golden/acceptance_run");
    std::size_t files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(golden)) {
        if (!entry.is_regular_file())
            continue;
        fs::path const rel = fs::relative(entry.path(), golden);
        ASSERT_TRUE(fs::exists(dir_ / "run" / rel)) << rel;
        EXPECT_EQ(slurp(entry.path()), slurp(dir_ / "run" / rel)) << rel;
        ++files;
    }
    std::size_t produced = 0;
    for (const auto& entry : fs::recursive_directory_iterator(dir_ / "run"))
        produced += entry.is_regular_file();
    EXPECT_EQ(files, produced);
    EXPECT_GT(files, 4u);
}

TEST_F(Cli, RunZeroStepsLeavesEmptyLogs)
{
    auto const r = run("run --config " + q(fixture("acceptance_run.cfg")) + " --out " + q(dir_ / "run") + " --steps 0");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(dir_ / "run/events.csv"), "agent_id,t,action,prediction,percept,r_t,R_t,c_est_star,event\n");
    EXPECT_EQ(slurp(dir_ / "run/summary.csv"), "step,alive,best_R,mean_c_est\n");
    EXPECT_EQ(slurp(dir_ / "run/rejections.csv"), "step,parent_id,reason,gene_file\n");
}

TEST_F(Cli, RunSeedOverrides)
{
    std::string const base = "run --config " + q(fixture("acceptance_run.cfg")) + " --out ";
    ASSERT_EQ(run(base + q(dir_ / "a") + " --seed 9").code, 0);
    ASSERT_EQ(run(base + q(dir_ / "b"), "QKSA_SEED=9 ").code, 0);
    EXPECT_EQ(slurp(dir_ / "a/events.csv"), slurp(dir_ / "b/events.csv"));
    EXPECT_NE(slurp(dir_ / "a/events.csv"), slurp(fixture("golden/acceptance_run/events.csv")));
}

TEST_F(Cli, RunBadGeneExpressionReportsLocation)
{
    auto const r = run("run --config " + q(fixture("bad_expr_run.cfg")) + " --out " + q(dir_ / "run"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("bad_expr.gene:11:80"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir_ / "run"));
}

TEST_F(Cli, ValidateAcceptsCleanFiles)
{
    for (const char* f : {"seed.gene", "acceptance_run.cfg", "id1q.cfg", "h1q.cfg", "x1q.cfg", "bitflip1q.cfg"})
        EXPECT_EQ(run("validate " + q(fixture(f))).code, 0) << f;
}

TEST_F(Cli, ValidateRejectsViolations)
{
    auto r = run("validate " + q(fixture("noncptp1q.cfg")));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("Kraus"), std::string::npos) << r.err;

    r = run("validate " + q(fixture("bad_thresholds.gene")));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("R_D"), std::string::npos) << r.err;

    r = run("validate " + q(fixture("bad_expr.gene")));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(":11:80"), std::string::npos) << r.err;

    EXPECT_EQ(run("validate " + q(dir_ / "missing.cfg")).code, 2);
    std::ofstream(dir_ / "odd.cfg") << "colour = blue\n";
    EXPECT_EQ(run("validate " + q(dir_ / "odd.cfg")).code, 2);
}
