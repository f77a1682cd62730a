#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dstls/battery.hpp"
#include "dstls/config.hpp"
#include "dstls/drive.hpp"
#include "dstls/pipeline.hpp"
#include "dstls/signal.hpp"

namespace dstls {

// ---------------------------------------------------------------------------
// Metrics

// One-step-ahead terminal voltage prediction V_oc,k + theta_hat_k . phi_k,
// phi_k from measured vbar_{k-1}, I_k, I_{k-1}.
inline std::vector<double> predicted_voltage(std::span<const ArxTheta> theta_hat, std::span<const double> current,
                                             std::span<const double> vbar_measured, std::span<const double> v_oc) {
  const std::size_t n = theta_hat.size();
  if (current.size() != n || vbar_measured.size() != n || v_oc.size() != n)
    throw std::invalid_argument("predicted_voltage: length mismatch");
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double vbar_prev = k ? vbar_measured[k - 1] : 0.0;
    const double i_prev = k ? current[k - 1] : current[k];
    out[k] = v_oc[k] + theta_hat[k].predict(vbar_prev, current[k], i_prev);
  }
  return out;
}

// RMSE over samples l_max .. K-1 (the first l_max samples are excluded).
inline double rmse(std::span<const double> v_true, std::span<const double> v_pred, std::size_t l_max) {
  if (v_true.size() != v_pred.size()) throw std::invalid_argument("rmse: length mismatch");
  if (v_true.size() <= l_max) throw std::invalid_argument("rmse: series not longer than l_max");
  double acc = 0.0;
  for (std::size_t k = l_max; k < v_true.size(); ++k) {
    const double e = v_true[k] - v_pred[k];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(v_true.size() - l_max));
}

// Mean absolute percentage error of parameter i (0-based) over samples l_max .. K-1.
inline double mape(std::span<const ArxTheta> theta_true, std::span<const ArxTheta> theta_hat, std::size_t l_max,
                   std::size_t i) {
  if (theta_true.size() != theta_hat.size()) throw std::invalid_argument("mape: length mismatch");
  if (theta_true.size() <= l_max) throw std::invalid_argument("mape: series not longer than l_max");
  if (i > 2) throw std::out_of_range("mape: parameter index");
  double acc = 0.0;
  for (std::size_t k = l_max; k < theta_true.size(); ++k) {
    const double t = theta_true[k][i];
    if (t == 0.0) throw std::domain_error("mape: zero true parameter value");
    acc += std::abs((t - theta_hat[k][i]) / t);
  }
  return 100.0 * acc / static_cast<double>(theta_true.size() - l_max);
}

inline double data_usage(std::span<const IndexInterval> segments, std::size_t k_total) {
  if (k_total == 0) throw std::invalid_argument("data_usage: empty trip");
  std::vector<IndexInterval> sorted(segments.begin(), segments.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t used = 0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    if (sorted[j].end > k_total || sorted[j].begin > sorted[j].end)
      throw std::invalid_argument("data_usage: segment outside trip");
    if (j > 0 && sorted[j].begin < sorted[j - 1].end) throw std::invalid_argument("data_usage: overlapping segments");
    used += sorted[j].size();
  }
  return 100.0 * static_cast<double>(used) / static_cast<double>(k_total);
}

// Mean segment length rounded to the nearest integer, halves away from zero.
inline std::size_t l_tls_from_segments(std::span<const IndexInterval> segments) {
  if (segments.empty()) throw std::invalid_argument("l_tls_from_segments: no segments");
  double total = 0.0;
  for (const auto& s : segments) total += static_cast<double>(s.size());
  return static_cast<std::size_t>(std::lround(total / static_cast<double>(segments.size())));
}

struct Metrics {
  double rmse_v = 0.0;                 // V
  std::array<double, 3> mape{};        // percent
  std::optional<double> data_usage;    // percent, DS-TLS only
};

inline Metrics evaluate(const EstimateTrace& est, const CellTrace& truth, const Measurements& meas,
                        const EcmParamMap& map, std::size_t l_max) {
  const auto vbar = overpotential_from_measurement(meas.voltage, meas.soc, map);
  const auto v_hat = predicted_voltage(est.theta_hat, meas.current, vbar, truth.v_oc);
  Metrics m;
  m.rmse_v = rmse(truth.terminal_voltage, v_hat, l_max);
  for (std::size_t i = 0; i < 3; ++i) m.mape[i] = mape(truth.theta_true, est.theta_hat, l_max, i);
  if (est.method == Method::DsTls) m.data_usage = data_usage(est.selected_segments, est.size());
  return m;
}

// ---------------------------------------------------------------------------
// Aggregation: average over trials per trip, then mean and std across trips.

struct Stat {
  double mean = 0.0;
  double std = 0.0;
};

inline Stat mean_std(std::span<const double> xs) {
  if (xs.empty()) return {};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

struct ResultsRow {
  Method method = Method::Rls;
  std::optional<double> d;
  std::array<Stat, 3> mape{};
  Stat rmse_mv;
  std::optional<Stat> data_usage;
};

// per_trip[trip][trial]
inline ResultsRow aggregate(Method method, std::optional<double> d,
                            const std::vector<std::vector<Metrics>>& per_trip) {
  ResultsRow row;
  row.method = method;
  row.d = d;
  std::array<std::vector<double>, 3> mape_trip;
  std::vector<double> rmse_trip, du_trip;
  bool has_du = !per_trip.empty();
  for (const auto& trials : per_trip) {
    if (trials.empty()) throw std::invalid_argument("aggregate: trip without trials");
    const double n = static_cast<double>(trials.size());
    std::array<double, 3> mp{};
    double r = 0.0, du = 0.0;
    for (const auto& m : trials) {
      for (std::size_t i = 0; i < 3; ++i) mp[i] += m.mape[i];
      r += m.rmse_v;
      if (m.data_usage) du += *m.data_usage;
      else has_du = false;
    }
    for (std::size_t i = 0; i < 3; ++i) mape_trip[i].push_back(mp[i] / n);
    rmse_trip.push_back(1000.0 * r / n);
    du_trip.push_back(du / n);
  }
  for (std::size_t i = 0; i < 3; ++i) row.mape[i] = mean_std(mape_trip[i]);
  row.rmse_mv = mean_std(rmse_trip);
  if (has_du) row.data_usage = mean_std(du_trip);
  return row;
}

// ---------------------------------------------------------------------------
// Monte Carlo harness

enum Channel : std::uint64_t { kSpeedChannel = 0, kCurrentNoise = 1, kVoltageNoise = 2 };

struct SimulatedTrip {
  int id = 0;  // 1-based
  std::uint64_t seed = 0;
  SampledSignal speed;
  CellTrace truth;
  int n_transitions = 0;
};

inline SimulatedTrip simulate_trip(const ExperimentConfig& cfg, const EcmParamMap& map, int id) {
  SimulatedTrip t;
  t.id = id;
  t.seed = derive_seed(cfg.harness.seed, static_cast<std::uint64_t>(id), 0, kSpeedChannel);
  Trip trip = generate_soc_window_trip(cfg.trip_spec(t.seed), cfg.vehicle, map, cfg.sim.capacity_ah);
  t.speed = std::move(trip.speed);
  t.n_transitions = trip.n_transitions;
  t.truth = simulate_cell(map, trip.current, cfg.sim.z0, cfg.sim.capacity_ah, cfg.sim.period);
  if (t.truth.saturated) throw std::runtime_error("trip " + std::to_string(id) + ": SOC clamped at a limit");
  return t;
}

// Noisy current/voltage for one trial; SOC is the known true trajectory.
inline Measurements measure(const ExperimentConfig& cfg, const SimulatedTrip& trip, int trial) {
  const auto id = static_cast<std::uint64_t>(trip.id);
  const auto tr = static_cast<std::uint64_t>(trial);
  Measurements m;
  m.current = add_gaussian_noise(trip.truth.current, cfg.noise.sigma_i,
                                 derive_seed(cfg.harness.seed, id, tr, kCurrentNoise));
  m.voltage = add_gaussian_noise(trip.truth.terminal_voltage, cfg.noise.sigma_v,
                                 derive_seed(cfg.harness.seed, id, tr, kVoltageNoise));
  m.soc = trip.truth.soc;
  return m;
}

struct SegmentRecord {
  int trip = 0;
  int trial = 0;
  double d = 0.0;
  std::size_t k_total = 0;
  std::vector<IndexInterval> segments;
  double data_usage = 0.0;
};

struct MonteCarloResult {
  std::vector<ResultsRow> rows;  // RLS, then TLS and DS-TLS per d
  std::vector<SegmentRecord> segments;
  std::vector<std::size_t> trip_lengths;
  std::vector<std::uint64_t> trip_seeds;
};

namespace detail {

// Metrics of one trip, [method row][trial].
struct TripOutcome {
  std::vector<std::vector<Metrics>> per_row;
  std::vector<SegmentRecord> segments;
  std::size_t length = 0;
  std::uint64_t seed = 0;
};

inline TripOutcome run_trip(const ExperimentConfig& cfg, const EcmParamMap& map, int id) {
  const SimulatedTrip trip = simulate_trip(cfg, map, id);
  const std::size_t nd = cfg.etre.d.size();
  TripOutcome out;
  out.length = trip.truth.size();
  out.seed = trip.seed;
  out.per_row.resize(1 + 2 * nd);

  std::vector<SelectorConfig> selectors;
  std::vector<std::vector<IndexInterval>> detected;
  std::size_t rls_l_max = 0;
  for (double d : cfg.etre.d) {
    selectors.push_back(make_selector_config(cfg.etre.v_h, cfg.etre.dv_h, cfg.etre.v_m, cfg.etre.dv_m, d,
                                             cfg.etre.d_tmax, cfg.sim.period, cfg.etre.window));
    detected.push_back(detect_segments(trip.speed, selectors.back()));
    rls_l_max = std::max(rls_l_max, selectors.back().bounds().l_max);
  }

  const Eigen::Vector3d p0(cfg.rls.p0[0], cfg.rls.p0[1], cfg.rls.p0[2]);
  const ArxTheta theta0 = cfg.theta0();
  for (int trial = 0; trial < cfg.harness.trials; ++trial) {
    auto where = [&](const std::string& method) {
      return "trip " + std::to_string(id) + ", trial " + std::to_string(trial) + ", " + method;
    };
    const Measurements meas = measure(cfg, trip, trial);
    try {
      const auto rls = rls_run(meas, map, cfg.rls.lambda, theta0, p0);
      out.per_row[0].push_back(evaluate(rls, trip.truth, meas, map, rls_l_max));
    } catch (const std::exception& e) {
      throw std::runtime_error(where("RLS") + ": " + e.what());
    }
    for (std::size_t j = 0; j < nd; ++j) {
      const double d = cfg.etre.d[j];
      const std::size_t l_max = selectors[j].bounds().l_max;
      const std::string dtag = "d=" + format_double(d);
      EstimateTrace ds;
      try {
        if (meas.size() <= l_max) throw std::runtime_error("trip shorter than l_max");
        ds = ds_tls_run(detected[j], meas, map, theta0);
        out.per_row[2 + 2 * j].push_back(evaluate(ds, trip.truth, meas, map, l_max));
      } catch (const std::exception& e) {
        throw std::runtime_error(where("DS-TLS " + dtag) + ": " + e.what());
      }
      out.segments.push_back({id, trial, d, meas.size(), ds.selected_segments,
                              *out.per_row[2 + 2 * j].back().data_usage});
      try {
        std::vector<IndexInterval> chosen;
        for (const auto& s : ds.selected_segments)
          if (!(s.begin == 0 && s.end == l_max)) chosen.push_back(s);
        const std::size_t l_tls = chosen.empty() ? l_max : l_tls_from_segments(chosen);
        const auto tls = tls_fixed_run(meas, map, l_tls, theta0);
        out.per_row[1 + 2 * j].push_back(evaluate(tls, trip.truth, meas, map, l_max));
      } catch (const std::exception& e) {
        throw std::runtime_error(where("TLS " + dtag) + ": " + e.what());
      }
    }
  }
  return out;
}

}  // namespace detail

inline MonteCarloResult run_monte_carlo(const ExperimentConfig& cfg) {
  cfg.validate();
  const EcmParamMap map = cfg.param_map();
  const int n_trips = cfg.harness.trips;
  std::vector<detail::TripOutcome> outcomes(static_cast<std::size_t>(n_trips));

  unsigned workers = cfg.harness.threads > 0 ? static_cast<unsigned>(cfg.harness.threads)
                                             : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(n_trips));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (int i = next++; i < n_trips; i = next++) {
      try {
        outcomes[static_cast<std::size_t>(i)] = detail::run_trip(cfg, map, i + 1);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n_trips;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  MonteCarloResult res;
  const std::size_t nd = cfg.etre.d.size();
  auto gather = [&](std::size_t row) {
    std::vector<std::vector<Metrics>> per_trip;
    for (const auto& o : outcomes) per_trip.push_back(o.per_row[row]);
    return per_trip;
  };
  res.rows.push_back(aggregate(Method::Rls, std::nullopt, gather(0)));
  for (std::size_t j = 0; j < nd; ++j) {
    res.rows.push_back(aggregate(Method::Tls, cfg.etre.d[j], gather(1 + 2 * j)));
    res.rows.push_back(aggregate(Method::DsTls, cfg.etre.d[j], gather(2 + 2 * j)));
  }
  for (auto& o : outcomes) {
    res.trip_lengths.push_back(o.length);
    res.trip_seeds.push_back(o.seed);
    for (auto& s : o.segments) res.segments.push_back(std::move(s));
  }
  return res;
}

// Results CSV; RMSE in millivolts, '-' where a column does not apply.
inline void write_results_csv(std::ostream& out, std::span<const ResultsRow> rows) {
  out << "method,d,mape1_mean,mape1_std,mape2_mean,mape2_std,mape3_mean,mape3_std,rmse_mv_mean,rmse_mv_std,"
         "du_mean,du_std\n";
  auto num = [](double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << to_string(r.method) << ',' << (r.d ? format_double(*r.d) : "-");
    for (const auto& m : r.mape) out << ',' << num(m.mean) << ',' << num(m.std);
    out << ',' << num(r.rmse_mv.mean) << ',' << num(r.rmse_mv.std);
    if (r.data_usage) out << ',' << num(r.data_usage->mean) << ',' << num(r.data_usage->std);
    else out << ",-,-";
    out << '\n';
  }
}

inline void write_segments_csv(const std::string& path, std::span<const IndexInterval> segments) {
  std::vector<double> b, e;
  for (const auto& s : segments) {
    b.push_back(static_cast<double>(s.begin));
    e.push_back(static_cast<double>(s.end));
  }
  write_csv(path, {"begin", "end"}, {b, e});
}

inline std::vector<IndexInterval> read_segments_csv(const std::string& path) {
  const auto table = read_csv(path);
  const auto& b = table.column("begin");
  const auto& e = table.column("end");
  std::vector<IndexInterval> out;
  for (std::size_t i = 0; i < b.size(); ++i)
    out.push_back({static_cast<std::size_t>(b[i]), static_cast<std::size_t>(e[i])});
  return out;
}

}  // namespace dstls
