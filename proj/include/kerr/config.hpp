#pragma once

// Experiment configuration: flat "key = value" text grouped in [sections].
//
//   [experiment]
//   kind = moments
//   backend = pde
//   [model]
//   alpha0 = 2
//   gamma = 0.05
//
// Numbers accept products and quotients of literals and `pi` ("1.3*pi/3").
// Lists are comma separated.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kerr/params.hpp"
#include "kerr/pde.hpp"

namespace kerr::config {

/// Invalid configuration, with the 1-based line it refers to (0 if none).
struct ConfigError : InvalidArgument {
  ConfigError(int line, const std::string& msg)
      : InvalidArgument(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line(line) {}
  int line;
};

inline std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

/// Parses "a*pi/b"-style expressions: a product/quotient chain of decimal
/// literals and `pi`, with an optional leading sign.
inline std::optional<double> parse_number(const std::string& text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  if (s.empty()) return std::nullopt;
  double sign = 1.0;
  std::size_t pos = 0;
  if (s[0] == '-' || s[0] == '+') {
    sign = s[0] == '-' ? -1.0 : 1.0;
    pos = 1;
  }
  double acc = 1.0;
  char op = '*';
  while (pos <= s.size()) {
    std::size_t end = s.find_first_of("*/", pos);
    if (end == std::string::npos) end = s.size();
    const std::string tok = s.substr(pos, end - pos);
    double v = 0.0;
    if (tok == "pi") {
      v = pi;
    } else {
      const char* b = tok.data();
      const char* e = tok.data() + tok.size();
      auto [p, ec] = std::from_chars(b, e, v);
      if (tok.empty() || ec != std::errc{} || p != e) return std::nullopt;
    }
    if (op == '*') acc *= v;
    else acc /= v;
    if (end == s.size()) break;
    op = s[end];
    pos = end + 1;
  }
  if (!std::isfinite(acc)) return std::nullopt;
  return sign * acc;
}

struct Entry {
  std::string value;
  int line = 0;
};

/// Parsed key/value text. Keys are addressed as "section.key".
class Document {
 public:
  static Document parse(std::istream& is) {
    Document d;
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(is, raw)) {
      ++line;
      const auto hash = raw.find_first_of("#;");
      std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']') throw ConfigError(line, "unterminated section header");
        section = trim(s.substr(1, s.size() - 2));
        if (section.empty()) throw ConfigError(line, "empty section name");
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
      const std::string key = trim(s.substr(0, eq));
      if (key.empty()) throw ConfigError(line, "missing key before '='");
      if (section.empty()) throw ConfigError(line, "key '" + key + "' appears before any [section]");
      const std::string full = section + "." + key;
      if (d.entries_.count(full)) throw ConfigError(line, "duplicate key '" + full + "'");
      d.entries_[full] = {trim(s.substr(eq + 1)), line};
    }
    return d;
  }

  static Document parse_string(const std::string& text) {
    std::istringstream is(text);
    return parse(is);
  }

  [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) != 0; }
  [[nodiscard]] const std::map<std::string, Entry>& entries() const { return entries_; }

  [[nodiscard]] int line_of(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

  [[nodiscard]] std::string text(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(0, "missing required key '" + key + "'");
    used_.push_back(key);
    return it->second.value;
  }

  [[nodiscard]] std::string text_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }

  [[nodiscard]] double number(const std::string& key) const {
    const std::string v = text(key);
    auto x = parse_number(v);
    if (!x) throw ConfigError(line_of(key), "'" + key + "' is not a number: '" + v + "'");
    return *x;
  }

  [[nodiscard]] double number_or(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  [[nodiscard]] int integer(const std::string& key) const {
    const double v = number(key);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError(line_of(key), "'" + key + "' must be an integer");
    return static_cast<int>(v);
  }

  [[nodiscard]] int integer_or(const std::string& key, int fallback) const { return has(key) ? integer(key) : fallback; }

  [[nodiscard]] std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(text(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      auto x = parse_number(item);
      if (!x) throw ConfigError(line_of(key), "'" + key + "' has a bad list entry '" + trim(item) + "'");
      out.push_back(*x);
    }
    if (out.empty()) throw ConfigError(line_of(key), "'" + key + "' is an empty list");
    return out;
  }

  [[nodiscard]] std::vector<int> integers(const std::string& key) const {
    std::vector<int> out;
    for (double v : numbers(key)) {
      if (v != std::floor(v)) throw ConfigError(line_of(key), "'" + key + "' must list integers");
      out.push_back(static_cast<int>(v));
    }
    return out;
  }

  /// Canonical text: sections and keys sorted, values as written.
  [[nodiscard]] std::string canonical() const {
    std::string out, current;
    for (const auto& [key, e] : entries_) {
      const auto dot = key.find('.');
      const std::string sec = key.substr(0, dot);
      if (sec != current) {
        out += "[" + sec + "]\n";
        current = sec;
      }
      out += key.substr(dot + 1) + " = " + e.value + "\n";
    }
    return out;
  }

  /// Keys that were never read, for typo detection.
  [[nodiscard]] std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [key, e] : entries_)
      if (std::find(used_.begin(), used_.end(), key) == used_.end()) out.push_back(key);
    return out;
  }

 private:
  std::map<std::string, Entry> entries_;
  mutable std::vector<std::string> used_;
};

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

enum class Kind { wigner_snapshot, moments, deviation, grid_error_sweep, convexity, kitten, cat_decay };

inline const std::vector<std::pair<Kind, std::string>>& kind_names() {
  static const std::vector<std::pair<Kind, std::string>> names = {
      {Kind::wigner_snapshot, "wigner-snapshot"}, {Kind::moments, "moments"},     {Kind::deviation, "deviation"},
      {Kind::grid_error_sweep, "grid-error-sweep"}, {Kind::convexity, "convexity"}, {Kind::kitten, "kitten"},
      {Kind::cat_decay, "cat-decay"}};
  return names;
}

inline std::string to_string(Kind k) {
  for (const auto& [v, s] : kind_names())
    if (v == k) return s;
  return "?";
}

/// Sample grid: explicit `times`, or `t_start`, `t_end`, `count`.
struct SampleGrid {
  std::vector<double> times;
  std::vector<double> thetas;
  std::vector<int> orders;
};

struct ExperimentConfig {
  Kind kind = Kind::moments;
  std::string backend = "pde";
  ModelParams model;
  pde::SolverConfig solver;
  std::optional<double> dr;
  std::optional<double> r_max;
  std::optional<int> n_trunc;
  SampleGrid samples;
  std::string output_dir = "runs";
  std::string canonical;
  std::string run_id;
  Document doc;

  [[nodiscard]] double grid_dr() const { return dr.value_or(phasespace::reference_dr(model.alpha0)); }
};

namespace detail {
inline std::vector<double> sample_times(const Document& d) {
  if (d.has("samples.times")) {
    auto t = d.numbers("samples.times");
    if (!std::is_sorted(t.begin(), t.end())) throw ConfigError(d.line_of("samples.times"), "samples.times must be sorted");
    return t;
  }
  const double t0 = d.number_or("samples.t_start", 0.0);
  const double t1 = d.number("samples.t_end");
  const int count = d.integer_or("samples.count", 200);
  if (count < 2) throw ConfigError(d.line_of("samples.count"), "samples.count must be >= 2");
  if (!(t1 > t0)) throw ConfigError(d.line_of("samples.t_end"), "samples.t_end must exceed samples.t_start");
  std::vector<double> t(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) t[static_cast<std::size_t>(i)] = t0 + (t1 - t0) * i / (count - 1);
  return t;
}
}  // namespace detail

/// Builds and validates an ExperimentConfig. `output_override` (from the
/// environment) replaces experiment.output when set.
inline ExperimentConfig load(const Document& d, const std::optional<std::string>& output_override = std::nullopt) {
  ExperimentConfig c;
  c.doc = d;
  const std::string kind = d.text("experiment.kind");
  bool found = false;
  for (const auto& [k, s] : kind_names())
    if (s == kind) c.kind = k, found = true;
  if (!found) throw ConfigError(d.line_of("experiment.kind"), "unknown experiment kind '" + kind + "'");
  c.backend = d.text_or("experiment.backend", c.kind == Kind::moments ? "pde" : "auto");
  static const std::vector<std::string> backends = {"pde", "fock", "analytic", "twa", "auto"};
  if (std::find(backends.begin(), backends.end(), c.backend) == backends.end())
    throw ConfigError(d.line_of("experiment.backend"), "unknown backend '" + c.backend + "'");
  c.output_dir = output_override.value_or(d.text_or("experiment.output", "runs"));

  c.model.kappa = d.number_or("model.kappa", 1.0);
  c.model.gamma = d.number_or("model.gamma", 0.0);
  c.model.alpha0 = d.number_or("model.alpha0", 0.0);
  try {
    c.model.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(d.line_of("model.alpha0"), e.what());
  }

  c.solver.abs_tol = d.number_or("solver.abs_tol", c.solver.abs_tol);
  c.solver.rel_tol = d.number_or("solver.rel_tol", c.solver.rel_tol);
  if (d.has("solver.max_step")) c.solver.max_step = d.number("solver.max_step");
  const std::string mode = d.text_or("solver.mode", "full");
  if (mode != "full" && mode != "twa") throw ConfigError(d.line_of("solver.mode"), "solver.mode must be full or twa");
  c.solver.mode = mode == "full" ? pde::Mode::full : pde::Mode::twa;
  c.solver.k_max = d.integer_or("solver.k_max", c.solver.k_max);
  c.solver.threads = d.integer_or("solver.threads", 1);
  try {
    c.solver.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(0, std::string("[solver] ") + e.what());
  }
  if (d.has("solver.dr")) c.dr = d.number("solver.dr");
  if (d.has("solver.r_max")) c.r_max = d.number("solver.r_max");
  if (d.has("solver.n_trunc")) c.n_trunc = d.integer("solver.n_trunc");
  if (c.dr && !(*c.dr > 0.0)) throw ConfigError(d.line_of("solver.dr"), "solver.dr must be > 0");

  const bool needs_times = c.kind != Kind::kitten;
  if (needs_times) c.samples.times = detail::sample_times(d);
  if (d.has("samples.thetas")) {
    c.samples.thetas = d.numbers("samples.thetas");
  } else {
    const int nt = d.integer_or("samples.theta_count", 20);
    if (nt < 1) throw ConfigError(d.line_of("samples.theta_count"), "samples.theta_count must be >= 1");
    for (int i = 0; i < nt; ++i) c.samples.thetas.push_back(2.0 * pi * i / nt);
  }
  for (double th : c.samples.thetas)
    if (!(th >= 0.0 && th < 2.0 * pi)) throw ConfigError(d.line_of("samples.thetas"), "angles must lie in [0, 2pi)");
  c.samples.orders = d.has("samples.orders") ? d.integers("samples.orders") : std::vector<int>{6};
  for (int n : c.samples.orders)
    if (n < 1 || n > 12) throw ConfigError(d.line_of("samples.orders"), "moment orders must lie in 1..12");

  auto require = [&](const char* key) {
    if (!d.has(key)) throw ConfigError(0, to_string(c.kind) + " needs '" + key + "'");
  };
  if (c.kind == Kind::kitten) require("kitten.M"), require("kitten.N");
  if (c.kind == Kind::grid_error_sweep) require("sweep.delta_r");

  c.canonical = d.canonical();
  c.run_id = fnv1a_hex(c.canonical);
  return c;
}

}  // namespace kerr::config
