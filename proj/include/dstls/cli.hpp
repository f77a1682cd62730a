#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dstls/config.hpp"
#include "dstls/eval.hpp"

namespace dstls::cli {

namespace detail {

inline std::string two_digit(int n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", n);
  return buf;
}

inline ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  return f;
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Cell-trace CSV; the time axis is checked for uniform spacing.
struct CellCsv {
  SampledSignal current;
  std::vector<double> voltage;
  std::vector<double> soc;
};

inline CellCsv load_cell_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  for (const char* c : {"t", "i", "v", "z"})
    if (!table.has_column(c)) throw CsvError(path + ": missing column '" + c + "'");
  return {signal_from_table(table, "i", path), table.column("v"), table.column("z")};
}

struct GenTripsArgs {
  std::string config, out_dir;
  bool noisy = false;
};

inline int gen_trips(const GenTripsArgs& a, std::ostream& out) {
  const ExperimentConfig cfg = config_or_default(a.config);
  const EcmParamMap map = cfg.param_map();
  const std::filesystem::path dir(a.out_dir);
  std::filesystem::create_directories(dir);
  std::vector<std::string> manifest_rows;
  for (int id = 1; id <= cfg.harness.trips; ++id) {
    const SimulatedTrip trip = simulate_trip(cfg, map, id);
    const std::string stem = "trip" + two_digit(id);
    save_signal_csv((dir / (stem + ".csv")).string(), trip.speed, "v");
    if (a.noisy) {
      const Measurements m = measure(cfg, trip, 0);
      save_cell_trace_csv((dir / (stem + "_cells.csv")).string(), trip.truth, 0.0, m.current, m.voltage);
    } else {
      save_cell_trace_csv((dir / (stem + "_cells.csv")).string(), trip.truth);
    }
    manifest_rows.push_back(std::to_string(id) + "," + std::to_string(trip.seed) + "," +
                            std::to_string(trip.speed.size()) + "," + std::to_string(trip.n_transitions));
  }
  auto f = open_out((dir / "manifest.csv").string());
  f << "trip,seed,samples,transitions\n";
  for (const auto& r : manifest_rows) f << r << '\n';
  out << "wrote " << cfg.harness.trips << " trips to " << dir.string() << '\n';
  return 0;
}

struct MatchArgs {
  std::string expr, expr_file, speed, column = "v";
  std::size_t max_len = 0;
};

inline int match(const MatchArgs& a, std::ostream& out) {
  const std::string text = a.expr_file.empty() ? a.expr : read_text(a.expr_file);
  const etre::ExprPtr expr = etre::parse_etre(text);
  const SampledSignal speed = load_signal_csv(a.speed, a.column);
  if (speed.empty()) throw std::runtime_error(a.speed + ": no samples");
  const etre::MatchSet ms =
      a.max_len == 0 ? etre::match_all(*expr, speed) : etre::match_bounded(*expr, speed, a.max_len);
  for (const auto& m : ms)
    out << m.begin << ',' << m.end << ',' << format_double(speed.time_at(m.begin)) << ','
        << format_double(speed.time_at(m.end)) << '\n';
  return 0;
}

struct EstimateArgs {
  std::string method, trip, speed, config, out, segments_out;
  std::optional<double> d;
  std::size_t l_tls = 0;
};

inline int estimate(const EstimateArgs& a, std::ostream& out) {
  const ExperimentConfig cfg = config_or_default(a.config);
  const EcmParamMap map = cfg.param_map();
  const CellCsv cells = load_cell_csv(a.trip);
  const Measurements meas{std::vector<double>(cells.current.values().begin(), cells.current.values().end()),
                          cells.voltage, cells.soc};
  const double d = a.d.value_or(cfg.etre.d.front());
  const SelectorConfig sel = make_selector_config(cfg.etre.v_h, cfg.etre.dv_h, cfg.etre.v_m, cfg.etre.dv_m, d,
                                                  cfg.etre.d_tmax, cells.current.period(), cfg.etre.window);
  const ArxTheta theta0 = cfg.theta0();

  EstimateTrace tr;
  if (a.method == "rls") {
    tr = rls_run(meas, map, cfg.rls.lambda, theta0, {cfg.rls.p0[0], cfg.rls.p0[1], cfg.rls.p0[2]});
  } else if (a.method == "tls") {
    tr = tls_fixed_run(meas, map, a.l_tls ? a.l_tls : sel.bounds().l_max, theta0);
  } else {
    if (a.speed.empty()) throw std::runtime_error("ds-tls needs --speed");
    const SampledSignal speed = load_signal_csv(a.speed, "v");
    if (std::abs(speed.period() - cells.current.period()) > kSpacingTolerance)
      throw std::runtime_error("speed and cell traces have different sample periods");
    tr = ds_tls_run(speed, meas, map, sel, theta0);
  }

  std::vector<std::vector<double>> cols(5, std::vector<double>(tr.size()));
  for (std::size_t k = 0; k < tr.size(); ++k) {
    cols[0][k] = cells.current.time_at(k);
    for (std::size_t i = 0; i < 3; ++i) cols[i + 1][k] = tr.theta_hat[k][i];
    cols[4][k] = tr.updated[k];
  }
  const std::vector<std::string> header{"t", "theta1_hat", "theta2_hat", "theta3_hat", "updated"};
  if (a.out.empty() || a.out == "-") {
    write_csv(out, header, cols);
  } else {
    auto f = open_out(a.out);
    write_csv(f, header, cols);
  }
  if (!a.segments_out.empty()) write_segments_csv(a.segments_out, tr.selected_segments);
  return 0;
}

struct EvalArgs {
  std::string config, out, segments_dir;
};

inline int eval(const EvalArgs& a, std::ostream& out) {
  const ExperimentConfig cfg = config_or_default(a.config);
  const MonteCarloResult res = run_monte_carlo(cfg);
  if (a.out.empty() || a.out == "-") {
    write_results_csv(out, res.rows);
  } else {
    auto f = open_out(a.out);
    write_results_csv(f, res.rows);
    if (!f.flush()) throw std::runtime_error("failed writing " + a.out);
  }
  if (!a.segments_dir.empty()) {
    const std::filesystem::path dir(a.segments_dir);
    std::filesystem::create_directories(dir);
    for (const auto& s : res.segments) {
      const std::string name = "trip" + two_digit(s.trip) + "_d" + format_double(s.d) + "_trial" +
                               two_digit(s.trial) + "_segments.csv";
      write_segments_csv((dir / name).string(), s.segments);
    }
    auto f = open_out((dir / "manifest.csv").string());
    f << "trip,seed,samples\n";
    for (std::size_t j = 0; j < res.trip_lengths.size(); ++j)
      f << j + 1 << ',' << res.trip_seeds[j] << ',' << res.trip_lengths[j] << '\n';
  }
  return 0;
}

}  // namespace detail

// Runs one subcommand. `args` excludes the program name.
// Exit codes: 0 success, 1 runtime error, 2 usage error.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Data-selective battery parameter identification", "dstls"};
  app.require_subcommand(1);

  std::string config_path;
  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", config_path, "config file (defaults if omitted)"); };

  detail::GenTripsArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-trips", "simulate trips and write speed and cell-trace CSVs");
  add_config(gen_cmd);
  gen_cmd->add_option("--out-dir", gen.out_dir, "output directory")->required();
  gen_cmd->add_flag("--noisy", gen.noisy, "write trial-0 measurement noise into the cell traces");

  detail::MatchArgs mt;
  auto* match_cmd = app.add_subcommand("match", "print all matches of an expression on a speed CSV");
  auto* expr_opt = match_cmd->add_option("--expr", mt.expr, "expression text");
  auto* file_opt = match_cmd->add_option("--expr-file", mt.expr_file, "file holding the expression");
  expr_opt->excludes(file_opt);
  match_cmd->add_option("--speed", mt.speed, "speed CSV with columns t,v")->required();
  match_cmd->add_option("--column", mt.column, "value column")->capture_default_str();
  match_cmd->add_option("--max-len", mt.max_len, "longest match in samples, 0 = unbounded")->capture_default_str();

  detail::EstimateArgs est;
  auto* est_cmd = app.add_subcommand("estimate", "estimate ARX parameters from a cell trace");
  add_config(est_cmd);
  est_cmd->add_option("--method", est.method, "rls | tls | ds-tls")
      ->required()
      ->check(CLI::IsMember({"rls", "tls", "ds-tls"}));
  est_cmd->add_option("--trip", est.trip, "cell-trace CSV (t,i,v,z,...)")->required();
  est_cmd->add_option("--speed", est.speed, "speed CSV, required for ds-tls");
  est_cmd->add_option("--d", est.d, "hold duration d in seconds (default: first etre.d)");
  est_cmd->add_option("--l-tls", est.l_tls, "segment length for tls (default: l_max)");
  est_cmd->add_option("--out", est.out, "estimate CSV (stdout if omitted)");
  est_cmd->add_option("--segments-out", est.segments_out, "segments CSV");

  detail::EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "run the Monte Carlo comparison and write the results table");
  add_config(eval_cmd);
  eval_cmd->add_option("--out", ev.out, "results CSV (stdout if omitted)");
  eval_cmd->add_option("--segments-dir", ev.segments_dir, "write DS-TLS segments per trip, d and trial");

  auto* print_cmd = app.add_subcommand("print-config", "print the fully resolved config");
  add_config(print_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  if (match_cmd->parsed() && mt.expr.empty() && mt.expr_file.empty()) {
    err << "error: match needs --expr or --expr-file\n\n" << match_cmd->help();
    return 2;
  }

  try {
    if (gen_cmd->parsed()) {
      gen.config = config_path;
      return detail::gen_trips(gen, out);
    }
    if (match_cmd->parsed()) return detail::match(mt, out);
    if (est_cmd->parsed()) {
      est.config = config_path;
      return detail::estimate(est, out);
    }
    if (eval_cmd->parsed()) {
      ev.config = config_path;
      return detail::eval(ev, out);
    }
    if (print_cmd->parsed()) {
      out << config_to_text(detail::config_or_default(config_path));
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace dstls::cli
