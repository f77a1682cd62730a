#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dstls/cli.hpp"
#include "test_util.hpp"

using namespace dstls;

namespace {

struct CliResult {
  int code = 0;
  std::string out, err;
};

CliResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const char* kSmallConfig =
    "harness.trips = 2\n"
    "harness.trials = 2\n"
    "etre.d = 10,30\n"
    "sim.z0 = 0.9\n"
    "sim.z_end = 0.82\n";

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"eval", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run({"estimate", "--method", "lms", "--trip", "x.csv"}).code, 2);
  EXPECT_EQ(run({"match", "--speed", "x.csv"}).code, 2);
  const CliResult r = run({"gen-trips"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--out-dir"), std::string::npos);
}

TEST(Cli, HelpSucceeds) {
  const CliResult r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("gen-trips"), std::string::npos);
}

TEST(Cli, RuntimeErrorsExitOne) {
  CliResult r = run({"print-config", "--config", "/nonexistent/file.cfg"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
  EXPECT_EQ(run({"match", "--expr", "any", "--speed", "/nonexistent.csv"}).code, 1);
  test::TempDir dir("cli_err");
  write_file(dir.file("s.csv"), "t,v\n0,20\n1,20\n");
  EXPECT_EQ(run({"match", "--expr", "tube(20,", "--speed", dir.file("s.csv")}).code, 1);
}

TEST(Cli, PrintConfigRoundTrips) {
  const CliResult def = run({"print-config"});
  ASSERT_EQ(def.code, 0);
  EXPECT_EQ(def.out, config_to_text(ExperimentConfig{}));
  test::TempDir dir("cli_cfg");
  write_file(dir.file("a.cfg"), def.out);
  EXPECT_EQ(run({"print-config", "--config", dir.file("a.cfg")}).out, def.out);
}

TEST(Cli, MatchPrintsIntervalsAndTimes) {
  test::TempDir dir("cli_match");
  write_file(dir.file("s.csv"), "t,v\n10,20\n10.5,21\n11,34\n11.5,20\n");
  const CliResult r = run({"match", "--expr", "tube(20,1)+ within [1,1]", "--speed", dir.file("s.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "0,2,10,11\n");
  write_file(dir.file("e.txt"), "tube(20,1)\n");
  const CliResult f = run({"match", "--expr-file", dir.file("e.txt"), "--speed", dir.file("s.csv")});
  EXPECT_EQ(f.out, "0,1,10,10.5\n1,2,10.5,11\n3,4,11.5,12\n");
  const CliResult b = run({"match", "--expr", "any+", "--speed", dir.file("s.csv"), "--max-len", "1"});
  EXPECT_EQ(b.out, "0,1,10,10.5\n1,2,10.5,11\n2,3,11,11.5\n3,4,11.5,12\n");
  write_file(dir.file("bad.csv"), "t,v\n0,20\n1,20\n3,20\n");
  EXPECT_EQ(run({"match", "--expr", "any", "--speed", dir.file("bad.csv")}).code, 1);
}

TEST(Cli, GenTripsWritesTripsAndManifest) {
  test::TempDir dir("cli_gen");
  write_file(dir.file("small.cfg"), kSmallConfig);
  const std::string out = dir.file("trips");
  ASSERT_EQ(run({"gen-trips", "--config", dir.file("small.cfg"), "--out-dir", out}).code, 0);
  const CsvTable manifest = read_csv(out + "/manifest.csv");
  EXPECT_EQ(manifest.header, (std::vector<std::string>{"trip", "seed", "samples", "transitions"}));
  ASSERT_EQ(manifest.rows(), 2u);
  const SampledSignal speed = load_signal_csv(out + "/trip01.csv", "v");
  EXPECT_EQ(static_cast<double>(speed.size()), manifest.column("samples")[0]);
  const CsvTable cells = read_csv(out + "/trip02_cells.csv");
  for (const char* c : {"t", "i", "v", "z"}) EXPECT_TRUE(cells.has_column(c)) << c;
  EXPECT_EQ(static_cast<double>(cells.rows()), manifest.column("samples")[1]);

  const std::string noisy = dir.file("noisy");
  ASSERT_EQ(run({"gen-trips", "--config", dir.file("small.cfg"), "--out-dir", noisy, "--noisy"}).code, 0);
  EXPECT_EQ(slurp(out + "/trip01.csv"), slurp(noisy + "/trip01.csv"));
  EXPECT_NE(slurp(out + "/trip01_cells.csv"), slurp(noisy + "/trip01_cells.csv"));
}

TEST(Cli, EstimateDsTlsWithoutTransitionsUpdatesOnce) {
  test::TempDir dir("cli_est");
  const EcmParamMap map = EcmParamMap::default_map();
  const SampledSignal speed(0.0, 1.0, std::vector<double>(400, 20.0));
  const CellTrace t = simulate_cell(map, current_from_speed(speed, VehiclePack{}, map, 0.9, 50.0), 0.9, 50.0, 1.0);
  const auto i_noisy = add_gaussian_noise(t.current, 0.02, 1);
  const auto v_noisy = add_gaussian_noise(t.terminal_voltage, 0.002, 2);
  save_cell_trace_csv(dir.file("cells.csv"), t, 0.0, i_noisy, v_noisy);
  save_signal_csv(dir.file("speed.csv"), speed, "v");

  const std::string est = dir.file("est.csv");
  const CliResult r = run({"estimate", "--method", "ds-tls", "--trip", dir.file("cells.csv"), "--speed",
                     dir.file("speed.csv"), "--d", "30", "--out", est, "--segments-out", dir.file("seg.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const CsvTable tab = read_csv(est);
  EXPECT_EQ(tab.header, (std::vector<std::string>{"t", "theta1_hat", "theta2_hat", "theta3_hat", "updated"}));
  ASSERT_EQ(tab.rows(), 400u);
  for (std::size_t k = 0; k < 400; ++k) EXPECT_EQ(tab.column("updated")[k], k == 119 ? 1.0 : 0.0) << k;
  EXPECT_EQ(read_segments_csv(dir.file("seg.csv")), (std::vector<IndexInterval>{{0, 120}}));

  EXPECT_EQ(run({"estimate", "--method", "ds-tls", "--trip", dir.file("cells.csv")}).code, 1);
  const CliResult rls = run({"estimate", "--method", "rls", "--trip", dir.file("cells.csv")});
  ASSERT_EQ(rls.code, 0);
  std::istringstream rls_out(rls.out);
  EXPECT_EQ(read_csv(rls_out).rows(), 400u);
}

TEST(Cli, EstimateTlsDefaultsToLmax) {
  test::TempDir dir("cli_tls");
  const EcmParamMap map = EcmParamMap::default_map();
  const CellTrace t = simulate_cell(map, test::exciting_current(300, 5), 0.9, 50.0, 1.0);
  save_cell_trace_csv(dir.file("cells.csv"), t);
  const CliResult r = run({"estimate", "--method", "tls", "--trip", dir.file("cells.csv"), "--d", "10"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  const CsvTable tab = read_csv(in);
  // l_max = 80 at d = 10: updates at 79, 159, 239.
  std::vector<std::size_t> updates;
  for (std::size_t k = 0; k < tab.rows(); ++k)
    if (tab.column("updated")[k] == 1.0) updates.push_back(k);
  EXPECT_EQ(updates, (std::vector<std::size_t>{79, 159, 239}));
}

TEST(Cli, EvalWritesResultsAndSegments) {
  test::TempDir dir("cli_eval");
  write_file(dir.file("small.cfg"), kSmallConfig);
  const CliResult r = run({"eval", "--config", dir.file("small.cfg"), "--out", dir.file("a.csv"), "--segments-dir",
                     dir.file("seg")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string results = slurp(dir.file("a.csv"));
  EXPECT_EQ(results.rfind("method,d,mape1_mean,", 0), 0u);
  EXPECT_EQ(std::count(results.begin(), results.end(), '\n'), 6);
  const auto segs = read_segments_csv(dir.file("seg") + "/trip02_d30_trial01_segments.csv");
  ASSERT_FALSE(segs.empty());
  EXPECT_EQ(segs.front(), (IndexInterval{0, 120}));
  EXPECT_EQ(read_csv(dir.file("seg") + "/manifest.csv").rows(), 2u);

  const CliResult again = run({"eval", "--config", dir.file("small.cfg")});
  EXPECT_EQ(again.out, slurp(dir.file("a.csv")));
}
