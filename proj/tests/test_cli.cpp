#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "mmmc/mmmc.hpp"

using namespace mmmc;
namespace fs = std::filesystem;

namespace {

struct Result {
    int status;
    std::string out;
};

// Runs the CLI and returns its exit status with stdout and stderr merged.
Result cli(const std::string& args) {
    const std::string cmd = std::string(MMMC_CLI_PATH) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) throw std::runtime_error("popen failed");
    std::string out;
    char buf[4096];
    while (const std::size_t n = fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    const int st = pclose(p);
    return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("mmmc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write(const std::string& name, const std::string& text) {
        const auto p = dir_ / name;
        std::ofstream(p) << text;
        return p;
    }

    fs::path dir_;
};

const char* kLinear = R"([model]
type = linear
[numerics]
J = 300
T = 0.05
seed = 4
[macro]
moments = centralized
L = 2
include_mean = true
[policy]
dt0 = 2e-4
adaptive = false
[experiment]
initial = normal
qoi = second-moment
)";

} // namespace

TEST_F(Cli, RunIdentityMatchesPureMicroscopic) {
    const auto cfg_path = write("lin.ini", kLinear);
    const auto r = cli("run --config " + cfg_path.string() + " --out " + (dir_ / "a").string());
    ASSERT_EQ(r.status, 0) << r.out;
    const std::string csv = slurp(dir_ / "a" / "trajectory.csv");

    // Pure microscopic reference from the library, same seed.
    const auto cfg = load_config(cfg_path.string());
    LinearModel m = cfg.linear_model();
    Ensemble e = sample_standard_normal(cfg.J, cfg.seed);
    std::vector<std::string> qoi{format_double(make_qoi(cfg)(e))};
    for (int k = 0; k < 250; ++k) {
        e = evolve_ensemble(m, e, 1, cfg.dt);
        qoi.push_back(format_double(make_qoi(cfg)(e)));
    }
    std::istringstream in(csv);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("time", 0) == 0) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
        ASSERT_LT(row, qoi.size());
        EXPECT_EQ(f[3], qoi[row]) << "row " << row;
        ++row;
    }
    EXPECT_EQ(row, qoi.size());
    EXPECT_NE(csv.find("# config_hash=" + config_hash(cfg)), std::string::npos);
    EXPECT_NE(csv.find("# seed=4"), std::string::npos);
    auto snap = load_config((dir_ / "a" / "trajectory.csv.ini").string());
    snap.out_dir = cfg.out_dir;
    EXPECT_EQ(snap, cfg);
}

TEST_F(Cli, RerunIsByteIdenticalAndSeedOverrideChangesIt) {
    const auto cfg_path = write("lin.ini", kLinear);
    ASSERT_EQ(cli("run --config " + cfg_path.string() + " --out " + (dir_ / "a").string()).status, 0);
    ASSERT_EQ(cli("run --config " + cfg_path.string() + " --out " + (dir_ / "b").string()).status, 0);
    ASSERT_EQ(cli("run --config " + cfg_path.string() + " --seed 5 --out " + (dir_ / "c").string()).status, 0);
    EXPECT_EQ(slurp(dir_ / "a" / "trajectory.csv"), slurp(dir_ / "b" / "trajectory.csv"));
    EXPECT_NE(slurp(dir_ / "a" / "trajectory.csv"), slurp(dir_ / "c" / "trajectory.csv"));
}

TEST_F(Cli, ReplicateIndependentOfWorkers) {
    const auto cfg_path = write("lin.ini", kLinear);
    const auto base = "replicate --config " + cfg_path.string() + " --replicates 6";
    ASSERT_EQ(cli(base + " --workers 1 --out " + (dir_ / "a").string()).status, 0);
    ASSERT_EQ(cli(base + " --workers 3 --out " + (dir_ / "b").string()).status, 0);
    const auto a = slurp(dir_ / "a" / "replicates.csv");
    EXPECT_EQ(a, slurp(dir_ / "b" / "replicates.csv"));
    EXPECT_NE(a.find("time,mean,std\n"), std::string::npos);
    EXPECT_NE(a.find("# replicates=6"), std::string::npos);
}

TEST_F(Cli, StabilityFirstOrder) {
    const auto r = cli("stability --pe 1 --beta 0.8");
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("verdict=stable"), std::string::npos);
    EXPECT_NE(r.out.find(" 1"), std::string::npos);
    EXPECT_NE(r.out.find("0.8"), std::string::npos);
    const auto w = cli("stability --pe 2 --beta 0.5 --beta 0.9 --out " + dir_.string());
    ASSERT_EQ(w.status, 0);
    EXPECT_NE(slurp(dir_ / "stability.csv").find("p_e,beta,re,im,modulus,verdict"), std::string::npos);
}

TEST_F(Cli, KsOnSampleFiles) {
    const auto a = write("a.txt", "x\n1\n2\n3\n");
    const auto b = write("b.txt", "# comment\n4\n5\n6\n");
    const auto r = cli("ks " + a.string() + " " + b.string());
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("D=1 "), std::string::npos) << r.out;
}

TEST_F(Cli, ConfigErrorExitsOneWithKeyAndLine) {
    const auto p = write("bad.ini", "[numerics]\nJ = 20\ndt = oops\n");
    const auto r = cli("run --config " + p.string());
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.out.find("error: kind=config line=3 key=\"numerics.dt\""), std::string::npos) << r.out;
}

TEST_F(Cli, NumericalFailureExitsTwoWithSeed) {
    // A violent flow with a huge inner step: no trial move is ever admissible.
    const auto p = write("boom.ini", "[model]\nkappa = constant(1000)\n[numerics]\ndt = 0.5\nJ = 4\nT = 1\nseed = 77\n"
                                     "[policy]\ndt0 = 0.5\ndt_max = 0.5\n");
    const auto r = cli("run --config " + p.string() + " --out " + dir_.string());
    EXPECT_EQ(r.status, 2) << r.out;
    EXPECT_NE(r.out.find("error: kind=numerical seed=77"), std::string::npos) << r.out;
}

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(cli("").status, 1);
    EXPECT_EQ(cli("frobnicate").status, 1);
    EXPECT_EQ(cli("stability --pe 1").status, 1);
    EXPECT_EQ(cli("--help").status, 0);
}
