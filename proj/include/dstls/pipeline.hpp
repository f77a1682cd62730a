#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dstls/battery.hpp"
#include "dstls/estimators.hpp"
#include "dstls/etre.hpp"
#include "dstls/signal.hpp"

namespace dstls {

struct LBounds {
  std::size_t l_min = 0;
  std::size_t l_max = 0;
};

inline std::size_t whole_samples(double duration, double period, const char* what) {
  const double count = duration / period;
  const double rounded = std::round(count);
  if (std::abs(count - rounded) > 1e-9 * std::max(1.0, std::abs(count)))
    throw std::invalid_argument(std::string(what) + " is not a whole number of samples");
  return static_cast<std::size_t>(rounded);
}

// Segment length bounds for the transition expression: 2d and 2d + d_tmax.
inline LBounds l_bounds(double d, double d_tmax, double period) {
  if (!(d >= 0.0 && d_tmax >= 0.0)) throw std::invalid_argument("l_bounds: negative duration");
  if (!(period > 0.0)) throw std::invalid_argument("l_bounds: period must be positive");
  return {whole_samples(2.0 * d, period, "2d"), whole_samples(2.0 * d + d_tmax, period, "2d + d_tmax")};
}

struct SelectorConfig {
  etre::ExprPtr expr;
  std::size_t window_len = 0;  // W, samples
  double d = 0.0;
  double d_tmax = 0.0;
  double period = 1.0;

  LBounds bounds() const { return l_bounds(d, d_tmax, period); }
};

// Transition selector; window_len 0 means W = l_max.
inline SelectorConfig make_selector_config(double v_h, double dv_h, double v_m, double dv_m, double d, double d_tmax,
                                           double period, std::size_t window_len = 0) {
  SelectorConfig cfg{etre::build_transition_expr(v_h, dv_h, v_m, dv_m, d, d_tmax), window_len, d, d_tmax, period};
  const LBounds lb = cfg.bounds();
  if (cfg.window_len == 0) cfg.window_len = lb.l_max;
  if (cfg.window_len < lb.l_max) throw std::invalid_argument("observation window shorter than l_max");
  return cfg;
}

enum class Method { Rls, Tls, DsTls };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Rls: return "RLS";
    case Method::Tls: return "TLS";
    case Method::DsTls: return "DS-TLS";
  }
  return "?";
}

struct EstimateTrace {
  Method method = Method::Rls;
  std::vector<ArxTheta> theta_hat;
  std::vector<unsigned char> updated;  // 1 where a new estimate was produced
  std::vector<IndexInterval> selected_segments;

  std::size_t size() const { return theta_hat.size(); }
};

// Measured cell data, aligned sample by sample.
struct Measurements {
  std::vector<double> current;
  std::vector<double> voltage;
  std::vector<double> soc;

  std::size_t size() const { return current.size(); }

  void validate() const {
    if (voltage.size() != current.size() || soc.size() != current.size())
      throw std::invalid_argument("measurement series length mismatch");
  }
};

// ---------------------------------------------------------------------------
// Segment selection

// `window` holds the samples [k + 1 - window.size(), k]. Returns the longest
// match ending at k, in absolute indices.
inline std::optional<IndexInterval> select_segment(const SampledSignal& window, const SelectorConfig& cfg,
                                                   std::size_t k) {
  if (window.empty() || window.size() > k + 1) return std::nullopt;
  const std::size_t offset = k + 1 - window.size();
  const etre::MatchSet matches = etre::match_all(*cfg.expr, window);
  std::optional<IndexInterval> best;
  for (const auto& m : matches)
    if (m.end == window.size() && m.begin < m.end && (!best || m.begin < best->begin)) best = m;
  if (!best) return std::nullopt;
  return IndexInterval{best->begin + offset, best->end + offset};
}

namespace detail {

// Walks the trip applying initialization, cooldown and window rules.
// find(k, window_begin) returns the chosen match ending at k inside
// [window_begin, k], if any.
template <typename Finder>
std::vector<IndexInterval> walk_selection(std::size_t n, const SelectorConfig& cfg, Finder&& find) {
  const LBounds lb = cfg.bounds();
  const std::size_t l_max = lb.l_max;
  std::vector<IndexInterval> out;
  if (l_max == 0 || n < l_max) return out;
  out.push_back({0, l_max});
  std::size_t floor = l_max;        // earliest admissible start of the next segment
  std::size_t k = 2 * l_max;        // cooldown after the initialization update
  while (k < n) {
    const std::size_t w_begin = std::max(k + 1 >= cfg.window_len ? k + 1 - cfg.window_len : 0, floor);
    if (w_begin <= k) {
      if (auto seg = find(k, w_begin)) {
        out.push_back(*seg);
        floor = seg->begin + l_max;
        k += l_max + 1;
        continue;
      }
    }
    ++k;
  }
  return out;
}

}  // namespace detail

// Initialization segment [0, l_max) followed by the detected transition
// segments. Uses a single bounded match over the whole trip.
inline std::vector<IndexInterval> detect_segments(const SampledSignal& speed, const SelectorConfig& cfg) {
  const std::size_t n = speed.size();
  std::vector<std::vector<std::size_t>> begins_by_end(n + 1);
  if (n > 0)
    for (const auto& m : etre::match_bounded(*cfg.expr, speed, cfg.window_len))
      if (m.end > m.begin) begins_by_end[m.end].push_back(m.begin);  // ascending by construction
  return detail::walk_selection(n, cfg, [&](std::size_t k, std::size_t w_begin) -> std::optional<IndexInterval> {
    const auto& begins = begins_by_end[k + 1];
    auto it = std::lower_bound(begins.begin(), begins.end(), w_begin);
    if (it == begins.end()) return std::nullopt;
    return IndexInterval{*it, k + 1};
  });
}

// Same result as detect_segments, re-matching the observation window at every
// sample through select_segment.
inline std::vector<IndexInterval> detect_segments_windowed(const SampledSignal& speed, const SelectorConfig& cfg) {
  return detail::walk_selection(speed.size(), cfg, [&](std::size_t k, std::size_t w_begin) {
    return select_segment(speed.slice({w_begin, k + 1}), cfg, k);
  });
}

// ---------------------------------------------------------------------------
// Estimation runs

namespace detail {

inline EstimateTrace held_trace(Method m, std::size_t n, const ArxTheta& theta0) {
  EstimateTrace tr;
  tr.method = m;
  tr.theta_hat.assign(n, theta0);
  tr.updated.assign(n, 0);
  return tr;
}

// TLS update per segment in order; failed solves keep the previous estimate.
inline void apply_segment_updates(EstimateTrace& tr, std::span<const IndexInterval> segments,
                                  std::span<const double> vbar, std::span<const double> current) {
  const std::size_t n = tr.size();
  std::size_t filled = 0;
  ArxTheta current_theta = n ? tr.theta_hat.front() : ArxTheta{};
  for (const auto& seg : segments) {
    if (seg.end > n || seg.size() < kMinSegmentLength) continue;
    const std::size_t k = seg.end - 1;
    for (; filled < k; ++filled) tr.theta_hat[filled] = current_theta;
    try {
      current_theta = tls_solve(build_regression(vbar.subspan(seg.begin, seg.size()),
                                                 current.subspan(seg.begin, seg.size())));
      tr.updated[k] = 1;
      tr.selected_segments.push_back(seg);
    } catch (const UninformativeSegment&) {
    }
  }
  for (; filled < n; ++filled) tr.theta_hat[filled] = current_theta;
}

}  // namespace detail

// DS-TLS on pre-detected segments (first entry is the initialization segment).
inline EstimateTrace ds_tls_run(std::span<const IndexInterval> detected, const Measurements& meas,
                                const EcmParamMap& map, const ArxTheta& theta0 = {}) {
  meas.validate();
  const auto vbar = overpotential_from_measurement(meas.voltage, meas.soc, map);
  EstimateTrace tr = detail::held_trace(Method::DsTls, meas.size(), theta0);
  detail::apply_segment_updates(tr, detected, vbar, meas.current);
  return tr;
}

inline EstimateTrace ds_tls_run(const SampledSignal& speed, const Measurements& meas, const EcmParamMap& map,
                                const SelectorConfig& cfg, const ArxTheta& theta0 = {}) {
  meas.validate();
  if (speed.size() != meas.size()) throw std::invalid_argument("speed and cell series length mismatch");
  if (meas.size() < cfg.bounds().l_max) throw std::invalid_argument("trip shorter than l_max");
  const auto detected = detect_segments(speed, cfg);
  return ds_tls_run(detected, meas, map, theta0);
}

inline EstimateTrace rls_run(const Measurements& meas, const EcmParamMap& map, double lambda, const ArxTheta& theta0,
                             const Eigen::Vector3d& p0_diag) {
  meas.validate();
  const auto vbar = overpotential_from_measurement(meas.voltage, meas.soc, map);
  EstimateTrace tr = detail::held_trace(Method::Rls, meas.size(), theta0);
  RlsState state = RlsState::initial(theta0, p0_diag);
  for (std::size_t k = 1; k < meas.size(); ++k) {
    const Eigen::Vector3d phi(vbar[k - 1], meas.current[k], meas.current[k - 1]);
    state = rls_step(state, vbar[k], phi, lambda);
    tr.theta_hat[k] = to_theta(state.theta_hat);
    tr.updated[k] = 1;
  }
  return tr;
}

// Plain TLS on consecutive disjoint segments of l_tls samples.
inline EstimateTrace tls_fixed_run(const Measurements& meas, const EcmParamMap& map, std::size_t l_tls,
                                   const ArxTheta& theta0 = {}) {
  meas.validate();
  if (l_tls < kMinSegmentLength) throw std::invalid_argument("TLS segment length below minimum");
  if (l_tls > meas.size()) throw std::invalid_argument("TLS segment length exceeds trip length");
  const auto vbar = overpotential_from_measurement(meas.voltage, meas.soc, map);
  std::vector<IndexInterval> segments;
  for (std::size_t b = 0; b + l_tls <= meas.size(); b += l_tls) segments.push_back({b, b + l_tls});
  EstimateTrace tr = detail::held_trace(Method::Tls, meas.size(), theta0);
  detail::apply_segment_updates(tr, segments, vbar, meas.current);
  return tr;
}

}  // namespace dstls
