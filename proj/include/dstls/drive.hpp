#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "dstls/battery.hpp"
#include "dstls/signal.hpp"

namespace dstls {

// Synthetic trip alternating highway and motorway holds.
struct TripSpec {
  int n_transitions = 2;
  double highway_speed = 20.0;   // m/s
  double motorway_speed = 34.0;  // m/s
  double hold_min = 300.0;       // s
  double hold_max = 600.0;       // s
  // With probability short_hold_prob a hold is drawn from the short range
  // instead (brief stints between junctions).
  double short_hold_prob = 0.0;
  double short_hold_min = 30.0;  // s
  double short_hold_max = 300.0; // s
  double ramp_accel = 1.0;       // m/s^2
  double jitter_sigma = 0.5;     // m/s, stationary std of the speed jitter
  double jitter_tau = 0.0;       // s, jitter correlation time; 0 = white
  double z_start = 0.95;
  double z_end = 0.05;
  double period = 1.0;           // s
  std::uint64_t seed = 0;

  double ramp_duration() const { return std::abs(motorway_speed - highway_speed) / ramp_accel; }
  double shortest_hold() const { return short_hold_prob > 0.0 ? std::min(short_hold_min, hold_min) : hold_min; }

  void validate() const {
    if (n_transitions < 0) throw std::invalid_argument("trip: negative transition count");
    if (!(highway_speed >= 0.0 && motorway_speed >= 0.0)) throw std::invalid_argument("trip: negative speed");
    if (!(hold_min > 0.0 && hold_min <= hold_max)) throw std::invalid_argument("trip: invalid hold duration range");
    if (!(short_hold_prob >= 0.0 && short_hold_prob <= 1.0))
      throw std::invalid_argument("trip: short hold probability outside [0, 1]");
    if (short_hold_prob > 0.0 && !(short_hold_min > 0.0 && short_hold_min <= short_hold_max))
      throw std::invalid_argument("trip: invalid short hold range");
    if (!(jitter_sigma >= 0.0 && jitter_tau >= 0.0)) throw std::invalid_argument("trip: negative jitter");
    if (!(period > 0.0)) throw std::invalid_argument("trip: period must be positive");
    if (!(z_start > z_end)) throw std::invalid_argument("trip: SOC window must be decreasing");
    if (n_transitions > 0) {
      if (!(ramp_accel > 0.0)) throw std::invalid_argument("trip: ramp acceleration must be positive");
      if (ramp_duration() > shortest_hold()) throw std::invalid_argument("trip: ramp longer than hold budget");
    }
  }
};

namespace detail {

class SpeedJitter {
public:
  SpeedJitter(double sigma, double tau, double period) : sigma_(sigma) {
    rho_ = tau > 0.0 ? std::exp(-period / tau) : 0.0;
    innov_ = sigma * std::sqrt(1.0 - rho_ * rho_);
  }

  double next(std::mt19937_64& rng) {
    if (sigma_ == 0.0) return 0.0;
    const double e = unit_(rng);
    state_ = started_ ? rho_ * state_ + innov_ * e : sigma_ * e;
    started_ = true;
    return state_;
  }

private:
  double sigma_, rho_ = 0.0, innov_ = 0.0, state_ = 0.0;
  bool started_ = false;
  std::normal_distribution<double> unit_{0.0, 1.0};
};

// Also reports the first sample index after each hold (where a ramp begins).
inline SampledSignal generate_trip(const TripSpec& spec, std::vector<std::size_t>* ramp_starts) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> hold_dist(spec.hold_min, spec.hold_max);
  std::uniform_real_distribution<double> short_dist(spec.short_hold_min, spec.short_hold_max);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  auto draw_hold = [&] {
    if (spec.short_hold_prob > 0.0 && coin(rng) < spec.short_hold_prob)
      return spec.short_hold_min == spec.short_hold_max ? spec.short_hold_min : short_dist(rng);
    return spec.hold_min == spec.hold_max ? spec.hold_min : hold_dist(rng);
  };
  SpeedJitter jitter(spec.jitter_sigma, spec.jitter_tau, spec.period);

  std::vector<double> v;
  auto push = [&](double base) { v.push_back(std::max(0.0, base + jitter.next(rng))); };

  double level = spec.highway_speed;
  for (int seg = 0; seg <= spec.n_transitions; ++seg) {
    const double hold = draw_hold();
    const auto hold_samples = std::max<long>(1, std::lround(hold / spec.period));
    for (long i = 0; i < hold_samples; ++i) push(level);
    if (seg == spec.n_transitions) break;
    if (ramp_starts) ramp_starts->push_back(v.size());
    const double target = level == spec.highway_speed ? spec.motorway_speed : spec.highway_speed;
    const double step = spec.ramp_accel * spec.period;
    const auto ramp_samples = static_cast<long>(std::ceil(std::abs(target - level) / step - 1e-9));
    const double dir = target > level ? 1.0 : -1.0;
    for (long i = 1; i < ramp_samples; ++i) push(level + dir * step * static_cast<double>(i));
    level = target;
  }
  return SampledSignal(0.0, spec.period, std::move(v));
}

}  // namespace detail

// Holds and ramps are drawn in order from one stream, so a trip with more
// transitions extends a shorter one with the same seed.
inline SampledSignal generate_trip(const TripSpec& spec) { return detail::generate_trip(spec, nullptr); }

// Longitudinal vehicle and pack topology.
struct VehiclePack {
  double mass = 2000.0;          // kg
  double drag_area_cd_a = 0.7;   // m^2
  double rolling_coeff = 0.01;
  double drivetrain_eff = 0.9;
  double regen_eff = 0.6;
  double aux_power = 500.0;      // W
  int series_cells = 120;
  int parallel_cells = 4;

  void validate() const {
    if (!(mass > 0.0 && drag_area_cd_a > 0.0 && rolling_coeff > 0.0 && drivetrain_eff > 0.0 && regen_eff > 0.0))
      throw std::invalid_argument("vehicle: parameters must be positive");
    if (drivetrain_eff > 1.0 || regen_eff > 1.0) throw std::invalid_argument("vehicle: efficiency above 1");
    if (aux_power < 0.0) throw std::invalid_argument("vehicle: negative auxiliary power");
    if (series_cells <= 0 || parallel_cells <= 0) throw std::invalid_argument("vehicle: empty pack");
  }
};

inline constexpr double kAirDensity = 1.2;  // kg/m^3
inline constexpr double kGravity = 9.81;    // m/s^2

struct PowertrainSample {
  double accel = 0.0;          // m/s^2
  double force = 0.0;          // N
  double wheel_power = 0.0;    // W
  double battery_power = 0.0;  // W, including auxiliaries
  double pack_voltage = 0.0;   // V
  double cell_current = 0.0;   // A, positive = discharge
  double soc = 0.0;            // after this step
};

inline std::vector<PowertrainSample> powertrain_from_speed(const SampledSignal& speed, const VehiclePack& vp,
                                                           const EcmParamMap& map, double z0, double capacity_ah) {
  vp.validate();
  if (!(capacity_ah > 0.0)) throw std::invalid_argument("capacity must be positive");
  if (!(z0 >= 0.0 && z0 <= 1.0)) throw std::out_of_range("initial SOC outside [0, 1]");
  const double period = speed.period();
  std::vector<PowertrainSample> out(speed.size());
  double z = z0;
  bool clamped = false;
  for (std::size_t k = 0; k < speed.size(); ++k) {
    const double v = speed[k];
    if (!(v >= 0.0)) throw std::invalid_argument("speed must be non-negative");
    const double v_prev = k == 0 ? v : speed[k - 1];
    auto& s = out[k];
    s.accel = (v - v_prev) / period;
    s.force = vp.mass * s.accel + 0.5 * kAirDensity * vp.drag_area_cd_a * v * v + vp.rolling_coeff * vp.mass * kGravity;
    s.wheel_power = s.force * v;
    s.battery_power = (s.wheel_power >= 0.0 ? s.wheel_power / vp.drivetrain_eff : s.wheel_power * vp.regen_eff) +
                      vp.aux_power;
    s.pack_voltage = vp.series_cells * map.v_oc(z);
    if (!(s.pack_voltage > 0.0)) throw std::runtime_error("non-positive pack voltage; check the OCV map");
    s.cell_current = s.battery_power / s.pack_voltage / vp.parallel_cells;
    z = coulomb_step(z, s.cell_current, period, capacity_ah, clamped);
    s.soc = z;
  }
  return out;
}

inline std::vector<double> current_from_speed(const SampledSignal& speed, const VehiclePack& vp,
                                              const EcmParamMap& map, double z0, double capacity_ah) {
  const auto pt = powertrain_from_speed(speed, vp, map, z0, capacity_ah);
  std::vector<double> i(pt.size());
  for (std::size_t k = 0; k < pt.size(); ++k) i[k] = pt[k].cell_current;
  return i;
}

struct Trip {
  SampledSignal speed;
  std::vector<double> current;  // per cell
  int n_transitions = 0;        // ramps contained in the (truncated) speed profile
};

// Extends the trip with further transitions until the SOC, starting at
// spec.z_start, reaches spec.z_end; truncates at that sample.
inline Trip generate_soc_window_trip(TripSpec spec, const VehiclePack& vp, const EcmParamMap& map,
                                     double capacity_ah, int max_transitions = 4096) {
  spec.validate();
  int n = std::max(spec.n_transitions, 1);
  for (;;) {
    spec.n_transitions = n;
    std::vector<std::size_t> ramp_starts;
    SampledSignal speed = detail::generate_trip(spec, &ramp_starts);
    const auto pt = powertrain_from_speed(speed, vp, map, spec.z_start, capacity_ah);
    for (std::size_t k = 0; k < pt.size(); ++k) {
      if (pt[k].soc <= spec.z_end) {
        Trip trip;
        trip.speed = speed.slice({0, k + 1});
        trip.current.resize(k + 1);
        for (std::size_t j = 0; j <= k; ++j) trip.current[j] = pt[j].cell_current;
        trip.n_transitions = static_cast<int>(
            std::count_if(ramp_starts.begin(), ramp_starts.end(), [k](std::size_t r) { return r <= k; }));
        return trip;
      }
    }
    if (n >= max_transitions) throw std::runtime_error("trip never reaches the target SOC");
    n *= 2;
  }
}

}  // namespace dstls
