#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dstls/battery.hpp"
#include "dstls/csv.hpp"
#include "dstls/drive.hpp"

namespace dstls {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Everything needed to reproduce an experiment run.
struct ExperimentConfig {
  struct Etre {
    double v_h = 20.0;
    double dv_h = 5.0;
    double v_m = 34.0;
    double dv_m = 10.0;
    std::vector<double> d{10.0, 30.0, 60.0, 120.0, 180.0, 240.0, 300.0};
    double d_tmax = 60.0;
    std::size_t window = 0;  // 0 = l_max
  } etre;

  struct Rls {
    std::vector<double> theta0{0.0, 0.0, 0.0};
    std::vector<double> p0{1e6, 1e6, 1e6};
    double lambda = 0.999;
  } rls;

  struct Noise {
    double sigma_i = 0.02;   // A
    double sigma_v = 0.002;  // V
  } noise;

  struct Sim {
    double period = 1.0;
    double z0 = 0.95;
    double z_end = 0.05;
    double capacity_ah = 50.0;
  } sim;

  VehiclePack vehicle;

  struct TripShape {
    int min_transitions = 4;
    double highway_speed = 20.0;
    double motorway_speed = 34.0;
    double hold_min = 2000.0;
    double hold_max = 5000.0;
    double short_hold_prob = 0.6;
    double short_hold_min = 20.0;
    double short_hold_max = 120.0;
    double ramp_accel = 1.0;
    double jitter_sigma = 0.3;
    double jitter_tau = 20.0;
  } trip;

  struct Harness {
    int trips = 20;
    int trials = 10;
    std::uint64_t seed = 20250101;
    int threads = 0;  // 0 = hardware concurrency
  } harness;

  struct Paths {
    std::string param_map;  // empty = built-in synthetic map
  } paths;

  TripSpec trip_spec(std::uint64_t seed) const {
    TripSpec s;
    s.n_transitions = trip.min_transitions;
    s.highway_speed = trip.highway_speed;
    s.motorway_speed = trip.motorway_speed;
    s.hold_min = trip.hold_min;
    s.hold_max = trip.hold_max;
    s.short_hold_prob = trip.short_hold_prob;
    s.short_hold_min = trip.short_hold_min;
    s.short_hold_max = trip.short_hold_max;
    s.ramp_accel = trip.ramp_accel;
    s.jitter_sigma = trip.jitter_sigma;
    s.jitter_tau = trip.jitter_tau;
    s.z_start = sim.z0;
    s.z_end = sim.z_end;
    s.period = sim.period;
    s.seed = seed;
    return s;
  }

  EcmParamMap param_map() const {
    return paths.param_map.empty() ? EcmParamMap::default_map() : load_param_map_csv(paths.param_map);
  }

  ArxTheta theta0() const { return {rls.theta0.at(0), rls.theta0.at(1), rls.theta0.at(2)}; }

  void validate() const;
};

namespace detail {

struct ConfigKey {
  std::string name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

inline double to_double(const std::string& s) {
  try {
    return parse_double(s);
  } catch (const CsvError&) {
    throw ConfigError("not a number: '" + s + "'");
  }
}

inline long long to_integer(const std::string& s) {
  const double v = to_double(s);
  if (v != static_cast<double>(static_cast<long long>(v))) throw ConfigError("not an integer: '" + s + "'");
  return static_cast<long long>(v);
}

inline std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ConfigError("not an unsigned integer: '" + s + "'");
  return v;
}

inline std::vector<double> to_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& f : split_fields(s)) out.push_back(to_double(f));
  return out;
}

inline std::string from_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

template <typename Field>
ConfigKey real_key(std::string name, Field field) {
  return {std::move(name), [field](const ExperimentConfig& c) { return format_double(field(c)); },
          [field](ExperimentConfig& c, const std::string& v) { field(c) = to_double(v); }};
}

template <typename Field>
ConfigKey int_key(std::string name, Field field) {
  return {std::move(name), [field](const ExperimentConfig& c) { return std::to_string(field(c)); },
          [field](ExperimentConfig& c, const std::string& v) {
            using T = std::remove_cvref_t<decltype(field(c))>;
            field(c) = static_cast<T>(to_integer(v));
          }};
}

template <typename Field>
ConfigKey list_key(std::string name, Field field) {
  return {std::move(name), [field](const ExperimentConfig& c) { return from_list(field(c)); },
          [field](ExperimentConfig& c, const std::string& v) { field(c) = to_list(v); }};
}

inline const std::vector<ConfigKey>& config_keys() {
  using C = ExperimentConfig;
  static const std::vector<ConfigKey> keys = {
      real_key("etre.v_h", [](auto& c) -> auto& { return c.etre.v_h; }),
      real_key("etre.dv_h", [](auto& c) -> auto& { return c.etre.dv_h; }),
      real_key("etre.v_m", [](auto& c) -> auto& { return c.etre.v_m; }),
      real_key("etre.dv_m", [](auto& c) -> auto& { return c.etre.dv_m; }),
      list_key("etre.d", [](auto& c) -> auto& { return c.etre.d; }),
      real_key("etre.d_tmax", [](auto& c) -> auto& { return c.etre.d_tmax; }),
      int_key("etre.window", [](auto& c) -> auto& { return c.etre.window; }),
      list_key("rls.theta0", [](auto& c) -> auto& { return c.rls.theta0; }),
      list_key("rls.p0", [](auto& c) -> auto& { return c.rls.p0; }),
      real_key("rls.lambda", [](auto& c) -> auto& { return c.rls.lambda; }),
      real_key("noise.sigma_i", [](auto& c) -> auto& { return c.noise.sigma_i; }),
      real_key("noise.sigma_v", [](auto& c) -> auto& { return c.noise.sigma_v; }),
      real_key("sim.period", [](auto& c) -> auto& { return c.sim.period; }),
      real_key("sim.z0", [](auto& c) -> auto& { return c.sim.z0; }),
      real_key("sim.z_end", [](auto& c) -> auto& { return c.sim.z_end; }),
      real_key("sim.capacity_ah", [](auto& c) -> auto& { return c.sim.capacity_ah; }),
      int_key("sim.series_cells", [](auto& c) -> auto& { return c.vehicle.series_cells; }),
      int_key("sim.parallel_cells", [](auto& c) -> auto& { return c.vehicle.parallel_cells; }),
      real_key("vehicle.mass", [](auto& c) -> auto& { return c.vehicle.mass; }),
      real_key("vehicle.cd_a", [](auto& c) -> auto& { return c.vehicle.drag_area_cd_a; }),
      real_key("vehicle.c_rr", [](auto& c) -> auto& { return c.vehicle.rolling_coeff; }),
      real_key("vehicle.drivetrain_eff", [](auto& c) -> auto& { return c.vehicle.drivetrain_eff; }),
      real_key("vehicle.regen_eff", [](auto& c) -> auto& { return c.vehicle.regen_eff; }),
      real_key("vehicle.aux_power", [](auto& c) -> auto& { return c.vehicle.aux_power; }),
      int_key("trip.min_transitions", [](auto& c) -> auto& { return c.trip.min_transitions; }),
      real_key("trip.highway_speed", [](auto& c) -> auto& { return c.trip.highway_speed; }),
      real_key("trip.motorway_speed", [](auto& c) -> auto& { return c.trip.motorway_speed; }),
      real_key("trip.hold_min", [](auto& c) -> auto& { return c.trip.hold_min; }),
      real_key("trip.hold_max", [](auto& c) -> auto& { return c.trip.hold_max; }),
      real_key("trip.short_hold_prob", [](auto& c) -> auto& { return c.trip.short_hold_prob; }),
      real_key("trip.short_hold_min", [](auto& c) -> auto& { return c.trip.short_hold_min; }),
      real_key("trip.short_hold_max", [](auto& c) -> auto& { return c.trip.short_hold_max; }),
      real_key("trip.ramp_accel", [](auto& c) -> auto& { return c.trip.ramp_accel; }),
      real_key("trip.jitter_sigma", [](auto& c) -> auto& { return c.trip.jitter_sigma; }),
      real_key("trip.jitter_tau", [](auto& c) -> auto& { return c.trip.jitter_tau; }),
      int_key("harness.trips", [](auto& c) -> auto& { return c.harness.trips; }),
      int_key("harness.trials", [](auto& c) -> auto& { return c.harness.trials; }),
      {"harness.seed", [](const C& c) { return std::to_string(c.harness.seed); },
       [](C& c, const std::string& v) { c.harness.seed = to_u64(v); }},
      int_key("harness.threads", [](auto& c) -> auto& { return c.harness.threads; }),
      {"paths.param_map", [](const C& c) { return c.paths.param_map; },
       [](C& c, const std::string& v) { c.paths.param_map = v; }},
  };
  return keys;
}

}  // namespace detail

inline void ExperimentConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(etre.dv_h >= 0 && etre.dv_m >= 0 && etre.v_h >= 0 && etre.v_m >= 0, "etre: speeds and deltas must be >= 0");
  require(!etre.d.empty(), "etre.d: need at least one value");
  for (double d : etre.d) require(d > 0, "etre.d: values must be positive");
  require(etre.d_tmax >= 0, "etre.d_tmax must be >= 0");
  require(rls.theta0.size() == 3, "rls.theta0 needs 3 values");
  require(rls.p0.size() == 3, "rls.p0 needs 3 values");
  for (double p : rls.p0) require(p > 0, "rls.p0 values must be positive");
  require(rls.lambda > 0 && rls.lambda <= 1, "rls.lambda must be in (0, 1]");
  require(noise.sigma_i >= 0 && noise.sigma_v >= 0, "noise sigmas must be >= 0");
  require(sim.period > 0, "sim.period must be positive");
  require(sim.z0 <= 1 && sim.z_end >= 0 && sim.z0 > sim.z_end, "sim: need 1 >= z0 > z_end >= 0");
  require(sim.capacity_ah > 0, "sim.capacity_ah must be positive");
  require(harness.trips > 0 && harness.trials > 0, "harness: trips and trials must be positive");
  require(harness.threads >= 0, "harness.threads must be >= 0");
  vehicle.validate();
  trip_spec(0).validate();
}

inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : detail::config_keys())
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

// `section.key = value` lines; '#' starts a comment.
inline ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(cfg, detail::trim(std::string_view(text).substr(0, eq)),
                       detail::trim(std::string_view(text).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

inline std::string config_to_text(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& k : detail::config_keys()) {
    const std::string sec = k.name.substr(0, k.name.find('.'));
    if (sec != section) {
      if (!section.empty()) out += '\n';
      section = sec;
    }
    out += k.name + " = " + k.get(cfg) + '\n';
  }
  return out;
}

}  // namespace dstls
