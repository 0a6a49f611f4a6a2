#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace twoscale;
namespace fs = std::filesystem;

namespace {

json parse(const char* s) { return json::parse(s); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("twoscale_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(TWOSCALE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(RateFit, ExactPowerLaw) {
  std::vector<long> ks;
  std::vector<double> ys;
  for (long k : geometric_checkpoints(100000)) {
    ks.push_back(k);
    ys.push_back(k == 0 ? 7.0 : 3.5 * std::pow(static_cast<double>(k), -0.67));
  }
  RateFit f = rate_fit(ks, ys, default_fit_window(ks));
  EXPECT_NEAR(f.slope, -0.67, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(3.5), 1e-10);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  EXPECT_EQ(f.window, std::make_pair(10000L, 100000L));
  EXPECT_EQ(f.points, 9);
  RateFit all = rate_fit(ks, ys, {0, 100000});
  EXPECT_NEAR(all.slope, -0.67, 1e-12);
}

TEST(RateFit, Errors) {
  std::vector<long> ks{1, 2, 3, 4, 5, 6};
  std::vector<double> ys{1, 1, 1, -1, 1, 1};
  EXPECT_THROW(rate_fit(ks, ys, {1, 6}), NonPositiveValue);
  EXPECT_THROW(rate_fit(ks, ys, {1, 3}), InsufficientPoints);
  EXPECT_THROW(rate_fit(ks, {1.0, 2.0}, {1, 6}), DimensionMismatch);
}

TEST(Csv, RoundTripIsBitwise) {
  MomentSeries s;
  s.checkpoints = {0, 1, 10, 100};
  s.m_theta = {1.0 / 3.0, 2e-300, 5.5, 1e10};
  s.m_w = {0.1, 0.2, 0.3, std::numeric_limits<double>::infinity()};
  s.m_track = {1, 2, 3, 4};
  s.stderr_theta = {0.1, 0.1, 0.1, 0.1};
  s.stderr_w = {0, 0, 0, 0};
  s.stderr_track = {1e-17, 2, 3, 4};
  StepSchedule sched = StepSchedule::polynomial(1, 3, 1, 7, 0.67);
  CurveTable t = normalized_curves(s, sched, {0.5, 0.25, std::nextafter(0.125, 1.0), 0.0625});
  std::stringstream ss;
  write_csv(ss, t);
  const std::string first = ss.str();
  CurveTable back = read_csv(ss);
  std::stringstream again;
  write_csv(again, back);
  EXPECT_EQ(first, again.str());
  EXPECT_EQ(back.m_theta, t.m_theta);
  EXPECT_EQ(back.I_k, t.I_k);
  EXPECT_EQ(back.k, t.k);
  EXPECT_DOUBLE_EQ(t.m_theta_norm[2], 5.5 / sched.beta_at(10));
  CurveTable nan_ik = normalized_curves(s, sched);
  EXPECT_TRUE(std::isnan(nan_ik.I_k[0]));
  std::stringstream bad("k,m_theta\n1,2\n");
  EXPECT_THROW(read_csv(bad), ConfigError);
}

TEST(Json, SystemAndScheduleRoundTrip) {
  ToyInstance t = random_toy_instance(3, 2);
  LinearSystem s = system_from_json(json::parse(to_json(t.sys).dump()));
  EXPECT_EQ(s.A12, t.sys.A12);
  EXPECT_EQ(s.b2, t.sys.b2);
  for (const StepSchedule& sc : {StepSchedule::polynomial(1, 2, 3, 4, 0.75), StepSchedule::constant_steps(0.1, 0.2),
                                 StepSchedule::piecewise({5}, {{0.2, 0.3}, {0.1, 0.2}})}) {
    StepSchedule r = schedule_from_json(json::parse(to_json(sc).dump()));
    for (long k : {0L, 4L, 5L, 1000L}) EXPECT_EQ(r.eval(k), sc.eval(k));
  }
  EXPECT_THROW(schedule_from_json(parse(R"({"kind":"exotic"})")), ConfigError);
  EXPECT_THROW(schedule_from_json(parse(R"({"kind":"constant","beta":0.1,"gamma":0.1,"x":1})")), ConfigError);
  EXPECT_THROW(schedule_from_json(parse(R"({"kind":"constant","beta":-0.1,"gamma":0.1})")), NonPositiveRate);
  EXPECT_THROW(system_from_json(parse(R"({"b1":[1],"b2":[1],"A11":[[1]],"A12":[[1,2]],"A21":[[1]],"A22":[[1]]})")),
               DimensionMismatch);
}

TEST(Config, DefaultsAndValidation) {
  ExperimentConfig c = config_from_json(parse(R"({"problem":{"toy":{}}})"));
  EXPECT_EQ(c.source, ProblemSource::toy);
  EXPECT_EQ(c.toy_d, 10);
  EXPECT_EQ(c.regime, NoiseRegime::martingale);
  ExperimentConfig g = config_from_json(parse(R"({"problem":{"garnet":{"seed":4}},"K":1000,"checkpoints":[0,10,1000]})"));
  EXPECT_EQ(g.regime, NoiseRegime::markov);
  EXPECT_EQ(g.garnet.seed, 4u);
  EXPECT_EQ(g.resolved_checkpoints().back(), 1000);

  const char* bad[] = {
      R"([])",
      R"({"problem":{}})",
      R"({"problem":{"toy":{},"garnet":{}}})",
      R"({"problem":{"toy":{}},"extra":1})",
      R"({"problem":{"toy":{"d":0}}})",
      R"({"problem":{"toy":{}},"noise":{"regime":"markov"}})",
      R"({"problem":{"garnet":{}},"noise":{"regime":"martingale"}})",
      R"({"problem":{"toy":{}},"K":10,"checkpoints":[0,100]})",
      R"({"problem":{"toy":{}},"checkpoints":[5,1]})",
      R"({"problem":{"toy":{}},"K":0})",
      R"({"problem":{"garnet":{"branching":99}}})",
      R"({"problem":{"toy":{}},"fit_window":[10,1]})",
      R"({"problem":{"toy":{}},"noise":{"scale_V":-1}})",
  };
  for (const char* b : bad) EXPECT_THROW(config_from_json(parse(b)), ConfigError) << b;
}

TEST(Cli, MalformedConfigExitsTwoWithoutOutputs) {
  fs::path d = fresh_dir("bad");
  fs::path cfg = d / "cfg.json";
  std::ofstream(cfg) << "{\"problem\": {\"toy\": {}}, \"K\": ";
  fs::path out = d / "out";
  EXPECT_EQ(run_cli("simulate --config " + cfg.string() + " --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
  std::ofstream(cfg, std::ios::trunc) << R"({"problem": {"toy": {}}, "bogus": 1})";
  EXPECT_EQ(run_cli("simulate --config " + cfg.string() + " --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
  fs::remove_all(d);
}

TEST(Cli, SameSeedGivesIdenticalCsv) {
  fs::path d = fresh_dir("seed");
  fs::path cfg = d / "cfg.json";
  std::ofstream(cfg) << R"({"problem": {"toy": {"d": 3, "seed": 5}}, "K": 2000, "R": 8,
    "schedule": {"kind": "polynomial", "c_beta": 0.5, "k0_beta": 50, "c_gamma": 0.5, "k0_gamma": 10, "sigma": 0.67}})";
  const std::string base = "simulate --config " + cfg.string();
  ASSERT_EQ(run_cli(base + " --seed 3 --out " + (d / "a").string()), 0);
  ASSERT_EQ(run_cli(base + " --seed 3 --threads 4 --out " + (d / "b").string()), 0);
  ASSERT_EQ(run_cli(base + " --seed 4 --out " + (d / "c").string()), 0);
  const std::string a = slurp(d / "a" / "moments.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(d / "b" / "moments.csv"));
  EXPECT_NE(a, slurp(d / "c" / "moments.csv"));
  ASSERT_EQ(run_cli("rates --config " + cfg.string() + " --out " + (d / "a").string()), 0);
  json r = json::parse(slurp(d / "a" / "rates.json"));
  EXPECT_TRUE(r.is_object());
  fs::remove_all(d);
}
