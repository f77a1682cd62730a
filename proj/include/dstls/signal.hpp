#pragma once

#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dstls/csv.hpp"

namespace dstls {

// Half-open sample index range [begin, end).
struct IndexInterval {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }

  friend auto operator<=>(const IndexInterval&, const IndexInterval&) = default;
};

// Uniformly sampled real-valued series. Immutable after construction.
class SampledSignal {
public:
  SampledSignal() = default;

  SampledSignal(double t0, double period, std::vector<double> values)
      : t0_(t0), period_(period), values_(std::move(values)) {
    if (!(period_ > 0.0) || !std::isfinite(period_))
      throw std::invalid_argument("sample period must be positive");
  }

  double t0() const { return t0_; }
  double period() const { return period_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  double time_at(std::size_t i) const { return t0_ + static_cast<double>(i) * period_; }
  double duration(IndexInterval iv) const { return static_cast<double>(iv.size()) * period_; }

  // Sub-signal over [iv.begin, iv.end), keeping absolute timing.
  SampledSignal slice(IndexInterval iv) const {
    if (iv.begin > iv.end || iv.end > values_.size()) throw std::out_of_range("slice outside signal");
    return SampledSignal(time_at(iv.begin), period_,
                         std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(iv.begin),
                                             values_.begin() + static_cast<std::ptrdiff_t>(iv.end)));
  }

  friend bool operator==(const SampledSignal&, const SampledSignal&) = default;

private:
  double t0_ = 0.0;
  double period_ = 1.0;
  std::vector<double> values_;
};

inline constexpr double kSpacingTolerance = 1e-6;

// Infers the period from the `t` column; spacing must be uniform within kSpacingTolerance.
inline SampledSignal signal_from_table(const CsvTable& table, const std::string& column,
                                       const std::string& source = "<table>") {
  const auto& t = table.column("t");
  const auto& v = table.column(column);
  if (t.size() < 2) throw CsvError(source + ": fewer than 2 rows");
  const double period = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(period > 0.0)) throw CsvError(source + ": timestamps not strictly increasing");
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double dt = t[i] - t[i - 1];
    if (!(dt > 0.0)) throw CsvError(source + ": timestamps not strictly increasing at row " + std::to_string(i + 1));
    if (std::abs(dt - period) > kSpacingTolerance * period)
      throw CsvError(source + ": non-uniform spacing at row " + std::to_string(i + 1));
  }
  return SampledSignal(t.front(), period, v);
}

inline SampledSignal load_signal_csv(const std::string& path, const std::string& column) {
  return signal_from_table(read_csv(path), column, path);
}

inline void save_signal_csv(const std::string& path, const SampledSignal& signal, const std::string& column) {
  std::vector<double> t(signal.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = signal.time_at(i);
  write_csv(path, {"t", column}, {t, std::vector<double>(signal.values().begin(), signal.values().end())});
}

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Sub-seed for one (trip, trial, channel) cell of an experiment.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t trip, std::uint64_t trial,
                                 std::uint64_t channel) {
  std::uint64_t s = mix64(master);
  s = mix64(s ^ trip);
  s = mix64(s ^ (trial + 0x1000003ULL));
  s = mix64(s ^ (channel + 0x2000007ULL));
  return s;
}

inline std::vector<double> add_gaussian_noise(std::span<const double> values, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be non-negative");
  std::vector<double> out(values.begin(), values.end());
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& x : out) x += noise(rng);
  return out;
}

inline SampledSignal add_gaussian_noise(const SampledSignal& signal, double sigma, std::uint64_t seed) {
  return SampledSignal(signal.t0(), signal.period(), add_gaussian_noise(signal.values(), sigma, seed));
}

}  // namespace dstls
