// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dstls/cli.hpp"
#include "dstls/eval.hpp"
#include "random_expr.hpp"
#include "test_util.hpp"

using namespace dstls;

namespace {

// Tolerances and budgets.
constexpr int kMatcherCases = 1000;
constexpr std::size_t kMatcherMaxLen = 200;
constexpr double kMatcherBudgetS = 60.0;
constexpr double kTlsRelTol = 1e-9;
constexpr double kRlsRelTol = 1e-6;
constexpr std::size_t kRlsSteps = 200;
constexpr double kSvdTol = 1e-10;
constexpr int kSvdCases = 100;
constexpr int kSegmentTrips = 20;
constexpr double kMonteCarloBudgetS = 300.0;
constexpr double kDuLow = 3.0;
constexpr double kDuHigh = 15.0;
constexpr double kDuRecomputeTol = 1e-9;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

Outcome ac1_matcher() {
  const auto t0 = std::chrono::steady_clock::now();
  test::RandomEtre gen(2024);
  int mismatches = 0;
  for (int i = 0; i < kMatcherCases; ++i) {
    const auto e = gen.expr();
    const auto s = gen.signal(kMatcherMaxLen);
    if (etre::match_all(*e, s) != etre::brute_force_match(*e, s)) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < kMatcherBudgetS,
          std::to_string(mismatches) + "/" + std::to_string(kMatcherCases) + " mismatches, " + fmt("%.1f s", secs)};
}

double max_rel(const Eigen::Vector3d& got, const Eigen::Vector3d& want) {
  return ((got - want).cwiseAbs().array() / want.cwiseAbs().array()).maxCoeff();
}

Outcome ac2_identification() {
  const ArxTheta ref = arx_from_ecm(1e-3, 0.5e-3, 1e4, 1.0);
  double tls_worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto i = test::exciting_current(60, seed);
    const auto v = test::arx_response(ref, i);
    tls_worst = std::max(tls_worst, max_rel(to_vector(tls_solve(build_regression(v, i))), to_vector(ref)));
  }

  double rls_worst = 0.0;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int stream = 0; stream < 10; ++stream) {
    const Eigen::Vector3d p0 = Eigen::Vector3d::Constant(1e6);
    const Eigen::Vector3d theta0(0.2, -0.1, 0.05);
    RlsState s = RlsState::initial(to_theta(theta0), p0);
    Eigen::Matrix3d a = p0.cwiseInverse().asDiagonal();
    Eigen::Vector3d b = p0.cwiseInverse().cwiseProduct(theta0);
    for (std::size_t k = 0; k < kRlsSteps; ++k) {
      const Eigen::Vector3d phi(g(rng), g(rng), g(rng));
      const double y = phi.dot(Eigen::Vector3d(0.9, 0.5, -0.3)) + 0.1 * g(rng);
      s = rls_step(s, y, phi, 1.0);
      a += phi * phi.transpose();
      b += phi * y;
      rls_worst = std::max(rls_worst, max_rel(s.theta_hat, a.colPivHouseholderQr().solve(b)));
    }
  }
  return {tls_worst <= kTlsRelTol && rls_worst <= kRlsRelTol,
          "TLS worst rel " + fmt("%.2e", tls_worst) + ", RLS worst rel " + fmt("%.2e", rls_worst)};
}

Outcome ac3_svd() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> rows(5, 200);
  std::normal_distribution<double> g(0.0, 1.0);
  double recon = 0.0, ortho = 0.0;
  for (int c = 0; c < kSvdCases; ++c) {
    const int m = rows(rng);
    Eigen::MatrixXd h(m, 4);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < 4; ++j) h(i, j) = g(rng);
    const SvdResult s = svd(h);
    const Eigen::MatrixXd r = s.u * s.sigma.asDiagonal() * s.v.transpose();
    recon = std::max(recon, (r - h).norm() / h.norm());
    const Eigen::MatrixXd i4 = Eigen::MatrixXd::Identity(4, 4);
    ortho = std::max({ortho, (s.u.transpose() * s.u - i4).cwiseAbs().maxCoeff(),
                      (s.v.transpose() * s.v - i4).cwiseAbs().maxCoeff()});
  }
  return {recon <= kSvdTol && ortho <= kSvdTol,
          "reconstruction " + fmt("%.2e", recon) + ", orthonormality " + fmt("%.2e", ortho)};
}

Outcome ac4_segment_law(const ExperimentConfig& cfg) {
  const EcmParamMap map = cfg.param_map();
  int violations = 0, few_transitions = 0;
  std::size_t checked = 0;
  for (int id = 1; id <= kSegmentTrips; ++id) {
    const SimulatedTrip trip = simulate_trip(cfg, map, id);
    if (trip.n_transitions < 2) ++few_transitions;
    const Measurements meas = measure(cfg, trip, 0);
    for (double d : cfg.etre.d) {
      const SelectorConfig sel = make_selector_config(cfg.etre.v_h, cfg.etre.dv_h, cfg.etre.v_m, cfg.etre.dv_m, d,
                                                      cfg.etre.d_tmax, cfg.sim.period, cfg.etre.window);
      const LBounds lb = sel.bounds();
      const EstimateTrace tr = ds_tls_run(trip.speed, meas, map, sel, cfg.theta0());
      const auto& segs = tr.selected_segments;
      for (std::size_t j = 0; j < segs.size(); ++j) {
        const bool init = segs[j] == IndexInterval{0, lb.l_max};
        if (!init) {
          ++checked;
          if (segs[j].size() < lb.l_min || segs[j].size() > lb.l_max) ++violations;
        }
        if (j > 0 && segs[j].begin < segs[j - 1].begin + lb.l_max) ++violations;
      }
    }
  }
  return {violations == 0 && few_transitions == 0 && checked > 0,
          std::to_string(checked) + " segments checked, " + std::to_string(violations) + " violations, " +
              std::to_string(few_transitions) + " trips with < 2 transitions"};
}

const ResultsRow* find_row(const MonteCarloResult& res, Method m, std::optional<double> d) {
  for (const auto& r : res.rows)
    if (r.method == m && r.d == d) return &r;
  return nullptr;
}

Outcome ac5_orderings(const MonteCarloResult& res, double secs) {
  const ResultsRow* rls = find_row(res, Method::Rls, std::nullopt);
  std::ostringstream detail;
  bool ok = rls != nullptr && secs < kMonteCarloBudgetS;
  for (double d : {10.0, 30.0, 60.0}) {
    const ResultsRow* tls = find_row(res, Method::Tls, d);
    const ResultsRow* ds = find_row(res, Method::DsTls, d);
    if (!rls || !tls || !ds) return {false, "missing results row for d=" + format_double(d)};
    const bool a = ds->mape[0].mean < rls->mape[0].mean && ds->mape[0].mean < tls->mape[0].mean;
    const bool b = ds->mape[2].mean < rls->mape[2].mean;
    ok = ok && a && b;
    detail << "d=" << d << " th1 DS " << fmt("%.2f", ds->mape[0].mean) << " TLS " << fmt("%.2f", tls->mape[0].mean)
           << " th3 DS " << fmt("%.2f", ds->mape[2].mean) << "; ";
    if (d == 10.0) {
      const bool c = tls->mape[0].std > ds->mape[0].std;
      ok = ok && c;
      detail << "std th1 TLS " << fmt("%.2f", tls->mape[0].std) << " DS " << fmt("%.2f", ds->mape[0].std) << "; ";
    }
  }
  detail << "RLS th1 " << fmt("%.2f", rls->mape[0].mean) << " th3 " << fmt("%.2f", rls->mape[2].mean) << "; "
         << fmt("%.1f s", secs);
  return {ok, detail.str()};
}

Outcome ac6_data_usage(const ExperimentConfig& cfg, const MonteCarloResult& res) {
  test::TempDir dir("acceptance_segments");
  std::ostringstream detail;
  bool ok = true;
  for (double d : cfg.etre.d) {
    const ResultsRow* ds = find_row(res, Method::DsTls, d);
    if (!ds || !ds->data_usage) return {false, "missing DS-TLS row for d=" + format_double(d)};
    // Per trip: mean over trials of DU recomputed from the written CSVs.
    std::vector<double> per_trip(static_cast<std::size_t>(cfg.harness.trips), 0.0);
    for (const auto& s : res.segments) {
      if (s.d != d) continue;
      const std::string path = dir.file("t" + std::to_string(s.trip) + "_" + std::to_string(s.trial) + ".csv");
      write_segments_csv(path, s.segments);
      const auto back = read_segments_csv(path);
      std::size_t used = 0;
      for (const auto& iv : back) used += iv.end - iv.begin;
      per_trip[static_cast<std::size_t>(s.trip - 1)] +=
          100.0 * static_cast<double>(used) / static_cast<double>(s.k_total) / cfg.harness.trials;
    }
    const double recomputed = mean_std(per_trip).mean;
    const double du = ds->data_usage->mean;
    const bool in_band = du >= kDuLow && du <= kDuHigh;
    const bool agrees = std::abs(recomputed - du) <= kDuRecomputeTol;
    ok = ok && in_band && agrees;
    detail << "d=" << d << " " << fmt("%.2f%%", du) << (agrees ? "" : " (recomputed " + fmt("%.4f", recomputed) + ")")
           << "; ";
  }
  return {ok, detail.str()};
}

Outcome ac7_metrics() {
  int failures = 0;
  auto check = [&](bool c) { failures += c ? 0 : 1; };
  const std::vector<double> vt{9, 9, 1, 2, 3, 4}, vp{0, 0, 1, 2, 3, 0};
  check(rmse(vt, vp, 2) == 2.0);
  const std::vector<ArxTheta> th{{1, 1, 1}, {0.5, 2, -4}, {0.5, 2, -4}};
  const std::vector<ArxTheta> eh{{7, 7, 7}, {0.55, 1, -4}, {0.45, 3, -2}};
  check(std::abs(mape(th, eh, 1, 0) - 10.0) < 1e-12);
  check(std::abs(mape(th, eh, 1, 1) - 50.0) < 1e-12);
  check(std::abs(mape(th, eh, 1, 2) - 25.0) < 1e-12);
  check(data_usage(std::vector<IndexInterval>{{0, 100}}, 1000) == 10.0);
  check(data_usage(std::vector<IndexInterval>{}, 1000) == 0.0);
  check(data_usage(std::vector<IndexInterval>{{0, 60}, {600, 660}}, 1200) == 10.0);
  check(l_tls_from_segments(std::vector<IndexInterval>{{0, 60}, {100, 190}}) == 75);
  check(l_tls_from_segments(std::vector<IndexInterval>{{0, 100}}) == 100);
  check(l_tls_from_segments(std::vector<IndexInterval>{{0, 60}, {100, 161}}) == 61);
  bool threw = false;
  try {
    data_usage(std::vector<IndexInterval>{{0, 60}, {50, 100}}, 1000);
  } catch (const std::invalid_argument&) {
    threw = true;
  }
  check(threw);
  return {failures == 0, std::to_string(failures) + " fixture failures"};
}

Outcome ac8_determinism() {
  test::TempDir dir("acceptance_eval");
  std::ostringstream out, err;
  const int a = cli::dispatch({"eval", "--out", dir.file("a.csv")}, out, err);
  const int b = cli::dispatch({"eval", "--out", dir.file("b.csv")}, out, err);
  if (a != 0 || b != 0) return {false, "eval failed: " + err.str()};
  const std::string ta = cli::detail::read_text(dir.file("a.csv"));
  const std::string tb = cli::detail::read_text(dir.file("b.csv"));
  return {!ta.empty() && ta == tb, std::to_string(ta.size()) + " bytes, " + (ta == tb ? "identical" : "differ")};
}

}  // namespace

int main() {
  const ExperimentConfig cfg;
  int failed = 0;
  auto report = [&](const char* id, const char* what, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %s %s: %s\n", o.pass ? "PASS" : "FAIL", id, what, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  };

  report("AC1", "matcher equals brute force", ac1_matcher);
  report("AC2", "noiseless identification", ac2_identification);
  report("AC3", "SVD contract", ac3_svd);
  report("AC4", "segment length and spacing law", [&] { return ac4_segment_law(cfg); });

  MonteCarloResult res;
  double mc_secs = 0.0;
  std::string mc_error;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    res = run_monte_carlo(cfg);
    mc_secs = seconds_since(t0);
  } catch (const std::exception& e) {
    mc_error = e.what();
  }
  auto need_mc = [&](auto f) {
    return [&, f]() -> Outcome {
      if (!mc_error.empty()) return {false, "Monte Carlo failed: " + mc_error};
      return f();
    };
  };
  report("AC5", "method ordering (20 trips x 10 trials)", need_mc([&] { return ac5_orderings(res, mc_secs); }));
  report("AC6", "data usage band and recomputation", need_mc([&] { return ac6_data_usage(cfg, res); }));
  report("AC7", "metric fixtures", ac7_metrics);
  report("AC8", "eval determinism", ac8_determinism);

  std::printf("%s: %d of 8 criteria failed\n", failed ? "FAILED" : "OK", failed);
  return failed ? 1 : 0;
}
