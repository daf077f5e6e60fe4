#pragma once

// TWA deviation, theta-averaged deviation, grid-coarsening error and the
// convexity (trivial-transition) test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kerr/params.hpp"
#include "kerr/phasespace.hpp"

namespace kerr::metrics {

struct TimeSeries {
  std::vector<double> times;
  std::vector<double> values;
  std::string label;

  void validate() const {
    if (times.size() != values.size()) throw InvalidArgument("TimeSeries '" + label + "': times and values differ in length");
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1])) throw InvalidArgument("TimeSeries '" + label + "': times must be strictly increasing");
  }

  [[nodiscard]] std::size_t size() const { return times.size(); }

  /// Index of the largest value (first on ties) among samples with t in [lo, hi].
  [[nodiscard]] std::optional<std::size_t> argmax(double lo, double hi) const {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < times.size(); ++i)
      if (times[i] >= lo && times[i] <= hi && (!best || values[i] > values[*best])) best = i;
    return best;
  }

  [[nodiscard]] double max_in(double lo, double hi) const {
    const auto i = argmax(lo, hi);
    if (!i) throw InvalidArgument("TimeSeries '" + label + "': no samples in window");
    return values[*i];
  }
};

inline std::vector<double> uniform_times(double t0, double t1, int count) {
  if (count < 2 || !(t1 > t0)) throw InvalidArgument("uniform_times: need count >= 2 and t1 > t0");
  std::vector<double> t(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) t[static_cast<std::size_t>(i)] = t0 + (t1 - t0) * i / (count - 1);
  return t;
}

/// `count` equally spaced angles on [0, 2 pi), rotated by `offset`.
inline std::vector<double> theta_grid(int count = 20, double offset = 0.0) {
  if (count < 1) throw InvalidArgument("theta_grid: count must be >= 1");
  std::vector<double> th(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    double v = std::fmod(offset + 2.0 * pi * i / count, 2.0 * pi);
    if (v < 0.0) v += 2.0 * pi;
    th[static_cast<std::size_t>(i)] = v;
  }
  return th;
}

/// <X_theta^n>(t) for a list of angles (rows) on a shared time grid.
struct MomentGrid {
  int n = 1;
  std::vector<double> thetas;
  std::vector<double> times;
  std::vector<double> values;  // theta-major

  MomentGrid() = default;
  MomentGrid(int n_, std::vector<double> th, std::vector<double> t)
      : n(n_), thetas(std::move(th)), times(std::move(t)), values(thetas.size() * times.size(), 0.0) {}

  double& at(std::size_t i_theta, std::size_t i_t) { return values[i_theta * times.size() + i_t]; }
  [[nodiscard]] double at(std::size_t i_theta, std::size_t i_t) const { return values[i_theta * times.size() + i_t]; }

  [[nodiscard]] TimeSeries series(std::size_t i_theta, std::string label = {}) const {
    TimeSeries s{times, {}, std::move(label)};
    s.values.reserve(times.size());
    for (std::size_t j = 0; j < times.size(); ++j) s.values.push_back(at(i_theta, j));
    return s;
  }

  [[nodiscard]] bool compatible(const MomentGrid& o) const { return n == o.n && thetas == o.thetas && times == o.times; }
};

/// Pointwise exact - twa.
inline TimeSeries deviation(const TimeSeries& exact, const TimeSeries& twa) {
  exact.validate();
  twa.validate();
  if (exact.times != twa.times) throw InvalidArgument("deviation: series live on different time grids");
  TimeSeries d{exact.times, {}, "deviation"};
  d.values.resize(exact.size());
  for (std::size_t i = 0; i < exact.size(); ++i) d.values[i] = exact.values[i] - twa.values[i];
  return d;
}

/// (1 / alpha0^n) mean_theta |exact - twa| at each time.
inline TimeSeries averaged_deviation(const MomentGrid& exact, const MomentGrid& twa, double alpha0) {
  if (!exact.compatible(twa)) throw InvalidArgument("averaged_deviation: moment grids differ");
  if (exact.thetas.empty()) throw InvalidArgument("averaged_deviation: no angles");
  TimeSeries out{exact.times, std::vector<double>(exact.times.size(), 0.0), "mean_deviation"};
  const double scale = std::pow(alpha0, exact.n);
  for (std::size_t i = 0; i < exact.thetas.size(); ++i)
    for (std::size_t j = 0; j < exact.times.size(); ++j) out.values[j] += std::abs(exact.at(i, j) - twa.at(i, j));
  for (auto& v : out.values) v /= double(exact.thetas.size()) * scale;
  return out;
}

inline constexpr double grid_error_floor = 1e-24;

struct GridError {
  double value = 0.0;  // floored
  bool defined = true;
  std::string diagnostic;
};

/// int_window |coarse - ref| dt / int_window |ref| dt by the trapezoid rule
/// on the shared sample grid, floored at 1e-24.
inline GridError grid_error(const TimeSeries& coarse, const TimeSeries& reference, double t_min, double t_max) {
  coarse.validate();
  reference.validate();
  if (coarse.times != reference.times) throw InvalidArgument("grid_error: coarse and reference grids differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 1; i < coarse.size(); ++i) {
    const double a = coarse.times[i - 1], b = coarse.times[i];
    if (a < t_min - 1e-12 || b > t_max + 1e-12) continue;
    const double h = 0.5 * (b - a);
    num += h * (std::abs(coarse.values[i - 1] - reference.values[i - 1]) + std::abs(coarse.values[i] - reference.values[i]));
    den += h * (std::abs(reference.values[i - 1]) + std::abs(reference.values[i]));
  }
  if (!(den > 0.0)) return {grid_error_floor, false, "reference deviation vanishes on the window"};
  return {std::max(num / den, grid_error_floor), true, {}};
}

/// Denominator threshold 1e-6 alpha0^n.
inline double convexity_threshold(double alpha0, int n) { return 1e-6 * std::pow(alpha0, n); }

struct ConvexityValue {
  std::optional<double> p;
  double denominator = 0.0;
  std::string diagnostic;
};

/// p = (open - classical) / (closed - classical), undefined when the
/// denominator is below `threshold`.
inline ConvexityValue convexity_p(double open, double closed, double classical, double threshold) {
  const double den = closed - classical;
  if (!(std::abs(den) > threshold))
    return {std::nullopt, den, "closed and classical values agree to within the threshold; p undefined"};
  return {(open - classical) / den, den, {}};
}

/// Series form: evaluates at the sample closest to t_eval.
inline ConvexityValue convexity_p(int n, double t_eval, const TimeSeries& open, const TimeSeries& closed,
                                  const TimeSeries& classical, double alpha0) {
  if (open.times != closed.times || open.times != classical.times)
    throw InvalidArgument("convexity_p: series live on different time grids");
  if (open.times.empty()) throw InvalidArgument("convexity_p: empty series");
  std::size_t best = 0;
  for (std::size_t i = 1; i < open.times.size(); ++i)
    if (std::abs(open.times[i] - t_eval) < std::abs(open.times[best] - t_eval)) best = i;
  return convexity_p(open.values[best], closed.values[best], classical.values[best], convexity_threshold(alpha0, n));
}

// ----------------------------------------------------------------------------
// Reports

struct GridErrorReport {
  int n = 6;
  double alpha0 = 0.0;
  double reference_dr = 0.0;
  double t_min = 0.0, t_max = 0.0;
  std::vector<double> delta_r;
  std::map<double, std::vector<GridError>> epsilon;  // keyed by gamma / kappa
};

inline nlohmann::json to_json(const GridErrorReport& r) {
  nlohmann::json j;
  j["n"] = r.n;
  j["alpha0"] = r.alpha0;
  j["reference_dr"] = r.reference_dr;
  j["window"] = {r.t_min, r.t_max};
  j["delta_r"] = r.delta_r;
  j["epsilon"] = nlohmann::json::array();
  for (const auto& [xi, errs] : r.epsilon) {
    nlohmann::json row;
    row["gamma_over_kappa"] = xi;
    row["values"] = nlohmann::json::array();
    row["defined"] = nlohmann::json::array();
    for (const auto& e : errs) {
      row["values"].push_back(e.value);
      row["defined"].push_back(e.defined);
    }
    j["epsilon"].push_back(row);
  }
  return j;
}

struct ConvexityReport {
  double alpha0 = 0.0;
  double gamma = 0.0;
  double t_eval = 0.0;
  std::vector<int> n;
  std::vector<ConvexityValue> p;
};

inline nlohmann::json to_json(const ConvexityReport& r) {
  nlohmann::json j;
  j["alpha0"] = r.alpha0;
  j["gamma"] = r.gamma;
  j["t_eval"] = r.t_eval;
  j["n"] = r.n;
  j["p"] = nlohmann::json::array();
  j["denominators"] = nlohmann::json::array();
  for (const auto& v : r.p) {
    j["p"].push_back(v.p ? nlohmann::json(*v.p) : nlohmann::json(nullptr));
    j["denominators"].push_back(v.denominator);
  }
  return j;
}

/// CSV with a '#' metadata block then "t,value" rows at 17 digits.
inline void write_csv(std::ostream& os, const TimeSeries& s, const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  s.validate();
  os << "# label=" << s.label << "\n";
  for (const auto& [k, v] : meta) os << "# " << k << "=" << v << "\n";
  os << "t,value\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    os << phasespace::detail::fmt17(s.times[i]) << ',' << phasespace::detail::fmt17(s.values[i]) << "\n";
}

}  // namespace kerr::metrics
