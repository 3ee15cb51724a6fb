#include "statgeo/io.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace statgeo;
using namespace statgeo::testing;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("statgeo_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  RunResult run(const std::string& args, const std::string& env = "") const {
    const std::string err_file = path("stderr.txt");
    const std::string cmd = "cd " + dir_.string() + " && " + env + " " + STATGEO_CLI_PATH + " " + args + " 2>" + err_file;
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = read_text(err_file);
    return r;
  }

  std::string file(const std::string& name) const { return read_text(path(name)); }

  static std::size_t line_count(const std::string& text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  }

  std::filesystem::path dir_;
};

}  // namespace

TEST_F(Cli, ToygenNoiselessCircleAndDeterminism) {
  ASSERT_EQ(run("toygen --n 200 --noise 0 --seed 1 --out a.csv").code, 0);
  const Mat codes = load_codes(path("a.csv"));
  ASSERT_EQ(codes.rows(), 200);
  for (Eigen::Index i = 0; i < 200; ++i) EXPECT_NEAR(codes.row(i).norm(), 1.0, 1e-12);
  ASSERT_EQ(run("toygen --n 200 --seed 1 --out b.csv").code, 0);
  ASSERT_EQ(run("toygen --n 200 --seed 1 --out c.csv").code, 0);
  EXPECT_EQ(file("b.csv"), file("c.csv"));
  const double mean_radius = load_codes(path("b.csv")).rowwise().norm().mean();
  EXPECT_GE(mean_radius, 0.85);
  EXPECT_LE(mean_radius, 1.15);
  const RunResult stdout_run = run("toygen --n 200 --seed 1");
  EXPECT_EQ(stdout_run.out, file("b.csv"));
}

TEST_F(Cli, SeedIsRequiredForStochasticCommands) {
  const RunResult r = run("toygen --n 5");
  EXPECT_EQ(r.code, 1);
  const Json err = parse_json(r.err);
  EXPECT_TRUE(err.contains("error"));
  EXPECT_TRUE(err.contains("message"));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("no-such-command").code, 1);
  EXPECT_EQ(run("kl --decoder d.json --z1 0,1").code, 1);
  EXPECT_EQ(run("kl --decoder missing.json --z1 0,1 --z2 0,1").code, 1);
  EXPECT_EQ(run("toygen --n 5 --seed 1 --bogus").code, 1);
}

TEST_F(Cli, KlNormalIdentityExample) {
  save_decoder(path("id.json"), identity_normal_decoder());
  const RunResult r = run("kl --decoder id.json --z1 0,1 --z2 0.1,1");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = parse_json(r.out);
  EXPECT_NEAR(j["kl"].get<double>(), 0.005, 1e-15);
  EXPECT_NEAR(j["quadratic_approx"].get<double>(), 0.005, 1e-15);
  EXPECT_LT(j["gap"].get<double>(), 1e-12);
  const Json z = parse_json(run("kl --decoder id.json --z1 0.3,2 --z2 0.3,2").out);
  EXPECT_EQ(z["kl"].get<double>(), 0.0);
  EXPECT_EQ(z["quadratic_approx"].get<double>(), 0.0);
  EXPECT_EQ(z["gap"].get<double>(), 0.0);
}

TEST_F(Cli, KlGapShrinksForBeta) {
  ASSERT_EQ(run("toy-decoder --family beta --seed 3 --out beta.json").code, 0);
  double prev = std::numeric_limits<double>::infinity();
  for (double h : {0.2, 0.05, 0.0125}) {
    std::ostringstream args;
    args << "kl --decoder beta.json --z1 0.1,0.2 --z2 " << format_double(0.1 + h) << "," << format_double(0.2 - h);
    const Json j = parse_json(run(args.str()).out);
    const double ratio = j["gap"].get<double>() / (2 * h * h);
    EXPECT_LT(ratio, prev);
    prev = ratio;
  }
}

TEST_F(Cli, GeodesicRowsAndEnergy) {
  ASSERT_EQ(run("toygen --n 200 --seed 1 --out codes.csv").code, 0);
  ASSERT_EQ(run("toy-decoder --family normal --codes codes.csv --seed 1 --out dec.json").code, 0);
  const RunResult r = run("geodesic --decoder dec.json --from 1,0 --to -1,0 --samples 50 --seed 4 --out geo.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = parse_json(r.out);
  EXPECT_LE(j["energy"].get<double>(), j["straight_energy"].get<double>());
  const std::string csv = file("geo.csv");
  EXPECT_EQ(line_count(csv), 52u);  // header + 51 samples
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,z0,z1,eta0,eta1,eta2,eta3,eta4,eta5,segment_kl");
  const RunResult again = run("geodesic --decoder dec.json --from 1,0 --to -1,0 --samples 50 --seed 4 --out geo2.csv");
  EXPECT_EQ(file("geo2.csv"), csv);
}

TEST_F(Cli, GeodesicDegenerateAndBatch) {
  save_decoder(path("id.json"), identity_normal_decoder());
  const RunResult r = run("geodesic --decoder id.json --from 0.5,1 --to 0.5,1 --samples 4 --seed 1 --out g.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(parse_json(r.out)["energy"].get<double>(), 0.0);
  ASSERT_EQ(run("toygen --n 10 --seed 2 --noise 0 --out codes.csv").code, 0);
  // Variances at z1 must stay positive for the identity map: shift codes up.
  Mat codes = load_codes(path("codes.csv"));
  codes.col(1).array() += 2.0;
  save_codes(path("codes.csv"), codes);
  const RunResult b = run("geodesic --decoder id.json --codes codes.csv --pairs \"0,1;2,3\" --samples 10 --seed 1 --out b.csv");
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(parse_json(b.out)["geodesics"].size(), 2u);
  EXPECT_EQ(line_count(file("b.csv")), 23u);
}

TEST_F(Cli, MetricGridPullbackAndProbe) {
  save_decoder(path("id.json"), identity_normal_decoder());
  const RunResult r = run("metric-grid --decoder id.json --lower -1,0.5 --upper 1,2 --resolution 5,7 --out grid.json");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json g = parse_json(file("grid.json"));
  ASSERT_EQ(g["tensors"].size(), 35u);
  const Mat pts = matrix_from_json(g["points"]);
  for (std::size_t s = 0; s < 35; ++s) {
    const Vec M = vector_from_json(g["tensors"][s]);  // row-major
    const double v = pts(static_cast<Eigen::Index>(s), 1);
    EXPECT_NEAR(M[0], 1.0 / v, 1e-6);
    EXPECT_NEAR(M[3], 0.5 / (v * v), 1e-6);
    EXPECT_NEAR(M[1], 0.0, 1e-6);
  }
  ASSERT_EQ(run("toygen --n 200 --seed 1 --out codes.csv").code, 0);
  ASSERT_EQ(run("toy-decoder --family normal --codes codes.csv --seed 1 --out dec.json").code, 0);
  // Patch of the unit ring, where the codes live.
  const RunResult p = run("metric-grid --decoder dec.json --mode kl-probe --lower 0.85,-0.3 --upper 1.15,0.3 --resolution 4,4 --seed 1");
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_LT(parse_json(p.out)["mean_validation_error"].get<double>(), 0.01);
}

TEST_F(Cli, ExpAndLogOnIdentityMetric) {
  const RunResult e = run("exp --identity --z 0.5,0.5 --v 1,-2 --steps 10");
  ASSERT_EQ(e.code, 0) << e.err;
  const Vec end = vector_from_json(parse_json(e.out)["endpoint"]);
  EXPECT_LT((end - Eigen::Vector2d(1.5, -1.5)).norm(), 1e-12);
  const RunResult l = run("log --identity --z 0.5,0.5 --y 1.5,-1.5 --seed 1");
  ASSERT_EQ(l.code, 0) << l.err;
  const Vec v = vector_from_json(parse_json(l.out)["v"]);
  EXPECT_LT((v - Eigen::Vector2d(1.0, -2.0)).norm(), 1e-9);
}

TEST_F(Cli, LandIdentityMetricAndDensity) {
  Rng rng(5);
  Mat pts(200, 2);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) << 1.0 + rng.normal(), -0.5 + rng.normal();
  save_codes(path("pts.csv"), pts);
  const std::string args =
      "land --identity --codes pts.csv --seed 3 --max-iters 20 --density dens.csv --density-resolution 40,40 "
      "--density-lower -5,-6.5 --density-upper 7,5.5 --out land.json";
  const RunResult r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = parse_json(file("land.json"));
  EXPECT_LT((vector_from_json(j["mean"]) - pts.colwise().mean().transpose()).norm(), 0.1);
  EXPECT_GE(j["lattice_sum"].get<double>(), 0.9);
  EXPECT_LE(j["lattice_sum"].get<double>(), 1.1);
  EXPECT_EQ(line_count(file("dens.csv")), 1601u);
  ASSERT_EQ(run(args + "2").code, 0);
  EXPECT_EQ(file("land.json"), file("land.json2"));
}

TEST_F(Cli, ConfigFileAndExplicitOverride) {
  {
    std::ofstream cfg(path("cfg.json"));
    cfg << R"({"n": 7, "noise": 0.0, "seed": 9})";
  }
  ASSERT_EQ(run("toygen --config cfg.json --out a.csv").code, 0);
  EXPECT_EQ(load_codes(path("a.csv")).rows(), 7);
  ASSERT_EQ(run("toygen --config cfg.json --n 3 --out b.csv").code, 0);
  EXPECT_EQ(load_codes(path("b.csv")).rows(), 3);
}

TEST_F(Cli, ThreadsEnvironmentAndProfile) {
  ASSERT_EQ(run("toygen --n 50 --seed 1 --out codes.csv").code, 0);
  ASSERT_EQ(run("toy-decoder --family gamma --seed 2 --out dec.json").code, 0);
  const std::string args = "metric-grid --decoder dec.json --lower -1,-1 --upper 1,1 --resolution 6,6 --mode kl-probe --seed 1";
  const RunResult one = run(args);
  const RunResult many = run(args + " --profile", "STATGEO_THREADS=3");
  ASSERT_EQ(one.code, 0);
  ASSERT_EQ(many.code, 0);
  EXPECT_EQ(one.out, many.out);
  EXPECT_TRUE(parse_json(many.err).contains("profile"));
  EXPECT_EQ(run(args, "STATGEO_THREADS=abc").code, 1);
}

TEST_F(Cli, NumericalFailureExitsWithTwo) {
  const DecoderMap bad(2, 1, FamilyKind::Normal,
                       {Head{"mean", {linear(Mat::Constant(1, 2, 1e308), Vec::Zero(1))}},
                        Head{"variance", {linear(Mat::Zero(1, 2), Vec::Ones(1))}}});
  save_decoder(path("bad.json"), bad);
  const RunResult r = run("geodesic --decoder bad.json --from 0,0 --to 5,5 --seed 1 --out g.csv");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(parse_json(r.err)["error"].get<std::string>(), "NonFiniteEnergy");
}
