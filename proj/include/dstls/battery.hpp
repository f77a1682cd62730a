#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dstls/csv.hpp"

namespace dstls {

// Parameters of the 1RC equivalent circuit at one SOC.
struct EcmParams {
  double v_oc = 0.0;  // V
  double r0 = 0.0;    // ohm
  double r1 = 0.0;    // ohm
  double c1 = 0.0;    // F
};

struct EcmBreakpoint {
  double z = 0.0;
  EcmParams params;
};

// SOC-dependent circuit parameters, piecewise-linear between breakpoints.
class EcmParamMap {
public:
  explicit EcmParamMap(std::vector<EcmBreakpoint> breakpoints) : bp_(std::move(breakpoints)) {
    if (bp_.size() < 2) throw std::invalid_argument("parameter map needs at least two breakpoints");
    if (bp_.front().z != 0.0 || bp_.back().z != 1.0)
      throw std::invalid_argument("parameter map breakpoints must span [0, 1]");
    for (std::size_t i = 0; i < bp_.size(); ++i) {
      const auto& p = bp_[i].params;
      if (!(p.r0 > 0.0 && p.r1 > 0.0 && p.c1 > 0.0) || !std::isfinite(p.r0) || !std::isfinite(p.r1) ||
          !std::isfinite(p.c1) || !std::isfinite(p.v_oc))
        throw std::invalid_argument("R0, R1, C1 must be positive and finite at every breakpoint");
      if (i > 0) {
        if (!(bp_[i].z > bp_[i - 1].z)) throw std::invalid_argument("SOC breakpoints must be strictly increasing");
        if (!(p.v_oc > bp_[i - 1].params.v_oc)) throw std::invalid_argument("OCV must be strictly increasing in SOC");
      }
    }
  }

  // Synthetic prismatic-cell map: z in {0, 0.1, ..., 1},
  //   V_oc = 3.0 + z + 0.2 z^2            [V]
  //   R0   = 1.0 mOhm * (1 + 0.5 (1 - z))
  //   R1   = 0.5 mOhm * (1 + 0.5 (1 - z))
  //   C1   = 10 kF
  static EcmParamMap default_map() {
    std::vector<EcmBreakpoint> bp;
    for (int i = 0; i <= 10; ++i) {
      const double z = i / 10.0;
      const double scale = 1.0 + 0.5 * (1.0 - z);
      bp.push_back({z, {3.0 + z + 0.2 * z * z, 1.0e-3 * scale, 0.5e-3 * scale, 1.0e4}});
    }
    return EcmParamMap(std::move(bp));
  }

  const std::vector<EcmBreakpoint>& breakpoints() const { return bp_; }

  EcmParams lookup(double z) const {
    if (!(z >= 0.0 && z <= 1.0)) throw std::out_of_range("SOC " + format_double(z) + " outside [0, 1]");
    auto hi = std::lower_bound(bp_.begin(), bp_.end(), z, [](const EcmBreakpoint& b, double v) { return b.z < v; });
    if (hi->z == z) return hi->params;
    auto lo = hi - 1;
    const double w = (z - lo->z) / (hi->z - lo->z);
    auto lerp = [w](double a, double b) { return a + w * (b - a); };
    return {lerp(lo->params.v_oc, hi->params.v_oc), lerp(lo->params.r0, hi->params.r0),
            lerp(lo->params.r1, hi->params.r1), lerp(lo->params.c1, hi->params.c1)};
  }

  double v_oc(double z) const { return lookup(z).v_oc; }

private:
  std::vector<EcmBreakpoint> bp_;
};

inline EcmParams lookup_params(const EcmParamMap& map, double z) { return map.lookup(z); }

inline EcmParamMap load_param_map_csv(const std::string& path) {
  const auto table = read_csv(path);
  const auto& z = table.column("z");
  const auto& v = table.column("v_oc");
  const auto& r0 = table.column("r0");
  const auto& r1 = table.column("r1");
  const auto& c1 = table.column("c1");
  std::vector<EcmBreakpoint> bp;
  for (std::size_t i = 0; i < z.size(); ++i) bp.push_back({z[i], {v[i], r0[i], r1[i], c1[i]}});
  return EcmParamMap(std::move(bp));
}

inline void save_param_map_csv(const std::string& path, const EcmParamMap& map) {
  std::vector<std::vector<double>> cols(5);
  for (const auto& b : map.breakpoints()) {
    cols[0].push_back(b.z);
    cols[1].push_back(b.params.v_oc);
    cols[2].push_back(b.params.r0);
    cols[3].push_back(b.params.r1);
    cols[4].push_back(b.params.c1);
  }
  write_csv(path, {"z", "v_oc", "r0", "r1", "c1"}, cols);
}

// theta for vbar_k = theta1 vbar_{k-1} + theta2 I_k + theta3 I_{k-1}.
struct ArxTheta {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double theta3 = 0.0;

  double operator[](std::size_t i) const {
    switch (i) {
      case 0: return theta1;
      case 1: return theta2;
      case 2: return theta3;
    }
    throw std::out_of_range("ArxTheta index");
  }

  double predict(double vbar_prev, double current, double current_prev) const {
    return theta1 * vbar_prev + theta2 * current + theta3 * current_prev;
  }

  friend bool operator==(const ArxTheta&, const ArxTheta&) = default;
};

// Bilinear discretization of the 1RC overpotential at sample interval t.
inline ArxTheta arx_from_ecm(double r0, double r1, double c1, double t) {
  if (!(r0 > 0.0 && r1 > 0.0 && c1 > 0.0 && t > 0.0))
    throw std::invalid_argument("arx_from_ecm: R0, R1, C1 and T must be positive");
  const double tau2 = 2.0 * r1 * c1;
  const double den = tau2 + t;
  return {(tau2 - t) / den, r0 + r1 * t / den, ((r0 + r1) * t - 2.0 * r0 * r1 * c1) / den};
}

inline ArxTheta arx_from_ecm(const EcmParams& p, double t) { return arx_from_ecm(p.r0, p.r1, p.c1, t); }

// Ground-truth trajectories of one cell. Positive current discharges.
struct CellTrace {
  double period = 1.0;
  double capacity_ah = 0.0;
  std::vector<double> current;
  std::vector<double> terminal_voltage;
  std::vector<double> overpotential;
  std::vector<double> soc;
  std::vector<double> v_oc;
  std::vector<ArxTheta> theta_true;
  bool saturated = false;  // SOC hit 0 or 1 and was clamped

  std::size_t size() const { return current.size(); }
};

// One coulomb-counting step; returns the clamped SOC and reports clamping.
inline double coulomb_step(double z, double current, double period, double capacity_ah, bool& clamped) {
  double next = z - period * current / (3600.0 * capacity_ah);
  if (next < 0.0 || next > 1.0) {
    clamped = true;
    next = std::clamp(next, 0.0, 1.0);
  }
  return next;
}

inline CellTrace simulate_cell(const EcmParamMap& map, std::span<const double> current, double z0,
                               double capacity_ah, double period) {
  if (current.empty()) throw std::invalid_argument("simulate_cell: empty current series");
  if (!(capacity_ah > 0.0)) throw std::invalid_argument("simulate_cell: capacity must be positive");
  if (!(period > 0.0)) throw std::invalid_argument("simulate_cell: period must be positive");
  if (!(z0 >= 0.0 && z0 <= 1.0)) throw std::out_of_range("simulate_cell: initial SOC outside [0, 1]");

  CellTrace tr;
  tr.period = period;
  tr.capacity_ah = capacity_ah;
  tr.current.assign(current.begin(), current.end());
  const std::size_t n = current.size();
  tr.terminal_voltage.resize(n);
  tr.overpotential.resize(n);
  tr.soc.resize(n);
  tr.v_oc.resize(n);
  tr.theta_true.resize(n);

  double z = z0;
  double vbar_prev = 0.0;
  double i_prev = current[0];
  for (std::size_t k = 0; k < n; ++k) {
    const double i_k = current[k];
    if (!std::isfinite(i_k)) throw std::invalid_argument("simulate_cell: non-finite current");
    z = coulomb_step(z, i_k, period, capacity_ah, tr.saturated);
    const EcmParams p = map.lookup(z);
    const ArxTheta th = arx_from_ecm(p, period);
    const double v = p.v_oc + th.predict(vbar_prev, i_k, i_prev);
    // Store V - V_oc (exact), so both V = V_oc + vbar and vbar = V - V_oc(z) hold bitwise.
    const double vbar = v - p.v_oc;
    tr.soc[k] = z;
    tr.v_oc[k] = p.v_oc;
    tr.theta_true[k] = th;
    tr.terminal_voltage[k] = v;
    tr.overpotential[k] = vbar;
    vbar_prev = vbar;
    i_prev = i_k;
  }
  return tr;
}

inline std::vector<double> overpotential_from_measurement(std::span<const double> voltage, std::span<const double> soc,
                                                          const EcmParamMap& map) {
  if (voltage.size() != soc.size()) throw std::invalid_argument("overpotential: voltage/SOC length mismatch");
  std::vector<double> out(voltage.size());
  for (std::size_t k = 0; k < voltage.size(); ++k) out[k] = voltage[k] - map.v_oc(soc[k]);
  return out;
}

// Cell-trace CSV: t,i,v,z,v_oc,vbar,theta1,theta2,theta3
inline void save_cell_trace_csv(const std::string& path, const CellTrace& tr, double t0 = 0.0,
                                std::span<const double> current_override = {},
                                std::span<const double> voltage_override = {}) {
  const std::size_t n = tr.size();
  std::vector<std::vector<double>> cols(9, std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    cols[0][k] = t0 + static_cast<double>(k) * tr.period;
    cols[1][k] = current_override.empty() ? tr.current[k] : current_override[k];
    cols[2][k] = voltage_override.empty() ? tr.terminal_voltage[k] : voltage_override[k];
    cols[3][k] = tr.soc[k];
    cols[4][k] = tr.v_oc[k];
    cols[5][k] = tr.overpotential[k];
    cols[6][k] = tr.theta_true[k].theta1;
    cols[7][k] = tr.theta_true[k].theta2;
    cols[8][k] = tr.theta_true[k].theta3;
  }
  write_csv(path, {"t", "i", "v", "z", "v_oc", "vbar", "theta1", "theta2", "theta3"}, cols);
}

}  // namespace dstls
