#pragma once

// Experiment runs: each config kind maps to one routine that writes CSV/JSON
// artifacts plus a manifest into <output>/<kind>-<run id>/. Files are written
// to a temporary name and renamed into place.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kerr/analytic.hpp"
#include "kerr/backends.hpp"
#include "kerr/config.hpp"
#include "kerr/fock.hpp"
#include "kerr/metrics.hpp"
#include "kerr/pde.hpp"
#include "kerr/phasespace.hpp"

namespace kerr::runner {

namespace fs = std::filesystem;
using config::ConfigError;
using config::ExperimentConfig;
using config::Kind;
using phasespace::detail::fmt17;

/// Comparison failure (exit code 4 at the CLI).
struct ComparisonFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os << content;
    if (!os.flush()) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// Column table: "# key=value" lines, a header row, then rows at 17 digits.
struct Table {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> headers;
  std::vector<std::vector<double>> columns;

  void add(std::string name, std::vector<double> col) {
    if (!columns.empty() && col.size() != columns.front().size())
      throw InvalidArgument("Table: column '" + name + "' has the wrong length");
    headers.push_back(std::move(name));
    columns.push_back(std::move(col));
  }

  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    for (const auto& [k, v] : meta) os << "# " << k << "=" << v << "\n";
    for (std::size_t c = 0; c < headers.size(); ++c) os << (c ? "," : "") << headers[c];
    os << "\n";
    const std::size_t rows = columns.empty() ? 0 : columns.front().size();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << fmt17(columns[c][r]);
      os << "\n";
    }
    return os.str();
  }

  static Table parse(std::istream& is, const std::string& what) {
    Table t;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (line[0] == '#') {
        const auto eq = line.find('=');
        if (eq != std::string::npos) t.meta.emplace_back(config::trim(line.substr(1, eq - 1)), line.substr(eq + 1));
        continue;
      }
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (t.headers.empty()) {
        t.headers = cells;
        t.columns.assign(cells.size(), {});
        continue;
      }
      if (cells.size() != t.headers.size())
        throw ConfigError(0, what + " line " + std::to_string(lineno) + ": expected " + std::to_string(t.headers.size()) + " cells");
      for (std::size_t c = 0; c < cells.size(); ++c)
        t.columns[c].push_back(phasespace::detail::parse_double(cells[c], what));
    }
    if (t.headers.empty()) throw ConfigError(0, what + ": no header row");
    return t;
  }
};

struct RunResult {
  fs::path dir;
  std::vector<std::string> artifacts;
  nlohmann::json summary;
};

namespace detail {

inline std::string theta_label(double th) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << th;
  return os.str();
}

inline std::vector<double> taus(const ModelParams& p, const std::vector<double>& times) {
  std::vector<double> out;
  for (double t : times) out.push_back(p.kappa * t);
  return out;
}

inline void require_rotation(const ExperimentConfig& c, const std::string& what) {
  if (c.model.kappa <= 0.0) throw ConfigError(c.doc.line_of("model.kappa"), what + " needs kappa > 0");
}

inline backends::Grid grid_of(const ExperimentConfig& c) { return {c.grid_dr(), c.r_max}; }

inline backends::MomentRequest request_of(const ExperimentConfig& c) {
  return {c.samples.orders, c.samples.thetas, c.samples.times};
}

/// One column per (n, theta) series, sharing the time column.
inline Table moment_table(const backends::MomentSet& set) {
  Table t;
  t.add("t", set.begin()->second.times);
  for (const auto& [n, g] : set)
    for (std::size_t i = 0; i < g.thetas.size(); ++i)
      t.add("n" + std::to_string(n) + "_theta" + theta_label(g.thetas[i]), g.series(i).values);
  return t;
}

class Writer {
 public:
  Writer(const ExperimentConfig& c, RunResult& r) : cfg_(c), res_(r) {}

  void put(const std::string& name, const std::string& content) {
    write_atomic(res_.dir / name, content);
    res_.artifacts.push_back(name);
  }

  void put(const std::string& name, Table t) {
    t.meta.insert(t.meta.begin(), {{"run_id", cfg_.run_id}, {"kind", config::to_string(cfg_.kind)}});
    put(name, t.str());
  }

  void put(const std::string& name, const nlohmann::json& j) { put(name, j.dump(2) + "\n"); }

 private:
  const ExperimentConfig& cfg_;
  RunResult& res_;
};

inline std::string backend_or(const ExperimentConfig& c, const std::string& fallback) {
  return c.backend == "auto" ? fallback : c.backend;
}

inline backends::MomentSet moments_from(const ExperimentConfig& c, const std::string& backend, const ModelParams& p,
                                        const backends::MomentRequest& req, const pde::SolverConfig& solver,
                                        pde::StepStats* stats) {
  if (backend == "analytic") {
    if (p.gamma != 0.0) throw ConfigError(c.doc.line_of("experiment.backend"), "analytic backend needs gamma = 0");
    return backends::analytic_moments(p, req);
  }
  if (backend == "fock") return backends::fock_moments(p, req, c.n_trunc);
  require_rotation(c, "the phase-space backend");
  if (backend == "twa") return backends::twa_moments(p, req, solver, grid_of(c), stats);
  return backends::pde_moments(p, req, solver, grid_of(c), stats);
}

inline nlohmann::json stats_json(const pde::StepStats& s) {
  return {{"accepted", s.accepted}, {"rejected", s.rejected}, {"factorizations", s.factorizations}};
}

// ---------------------------------------------------------------------------

inline void run_moments(const ExperimentConfig& c, Writer& w, RunResult& r) {
  pde::StepStats st;
  const auto set = moments_from(c, c.backend, c.model, request_of(c), c.solver, &st);
  w.put("moments.csv", moment_table(set));
  r.summary["backend"] = c.backend;
  if (c.backend == "pde" || c.backend == "twa") r.summary["steps"] = stats_json(st);
}

inline void run_snapshot(const ExperimentConfig& c, Writer& w, RunResult& r) {
  require_rotation(c, "wigner-snapshot");
  const auto grid = grid_of(c);
  const auto field = backends::initial_field(c.model, grid, c.solver.k_max);
  const auto ts = taus(c.model, c.samples.times);
  pde::StepStats st;
  const auto snaps = pde::evolve(field, ts.back(), c.solver, ts, &st);
  std::vector<double> norm, photons, edge;
  for (std::size_t s = 0; s < snaps.size(); ++s) {
    std::ostringstream os;
    phasespace::write_dump(os, snaps[s]);
    w.put("snapshot_" + std::to_string(s) + ".csv", os.str());
    norm.push_back(snaps[s].norm());
    photons.push_back(phasespace::mean_photons(snaps[s]));
    edge.push_back(snaps[s].edge_ratio());
  }
  Table t;
  t.add("t", c.samples.times);
  t.add("norm", norm);
  t.add("mean_photons", photons);
  t.add("edge_ratio", edge);
  w.put("snapshots.csv", t);
  r.summary["steps"] = stats_json(st);
  r.summary["n_r"] = field.n_r();
}

inline metrics::TimeSeries mean_deviation(const backends::MomentSet& exact, const backends::MomentSet& twa, int n,
                                          double alpha0) {
  return metrics::averaged_deviation(exact.at(n), twa.at(n), alpha0);
}

inline void run_deviation(const ExperimentConfig& c, Writer& w, RunResult& r) {
  const auto req = request_of(c);
  pde::StepStats st;
  const auto exact = moments_from(c, backend_or(c, c.model.gamma == 0.0 ? "analytic" : "fock"), c.model, req, c.solver, &st);
  const auto twa = moments_from(c, "twa", c.model, req, c.solver, &st);
  w.put("exact.csv", moment_table(exact));
  w.put("twa.csv", moment_table(twa));
  Table dev;
  dev.add("t", c.samples.times);
  std::optional<std::pair<double, double>> window;
  if (c.doc.has("deviation.peak_window")) {
    const auto v = c.doc.numbers("deviation.peak_window");
    if (v.size() != 2 || !(v[1] > v[0])) throw ConfigError(c.doc.line_of("deviation.peak_window"), "peak_window needs lo, hi");
    window = {v[0], v[1]};
  }
  for (int n : c.samples.orders) {
    const auto s = mean_deviation(exact, twa, n, c.model.alpha0);
    dev.add("n" + std::to_string(n), s.values);
    if (window) {
      const auto i = s.argmax(window->first, window->second);
      if (i) r.summary["peak"]["n" + std::to_string(n)] = {{"t", s.times[*i]}, {"value", s.values[*i]}};
    }
  }
  w.put("deviation.csv", dev);
}

inline void run_grid_sweep(const ExperimentConfig& c, Writer& w, RunResult& r) {
  require_rotation(c, "grid-error-sweep");
  const auto& d = c.doc;
  const auto delta_r = d.numbers("sweep.delta_r");
  const auto gammas = d.has("sweep.gammas") ? d.numbers("sweep.gammas") : std::vector<double>{c.model.gamma / c.model.kappa};
  const int n = d.integer_or("sweep.order", 6);
  if (n < 1 || n > 12) throw ConfigError(d.line_of("sweep.order"), "sweep.order must lie in 1..12");
  const double t_min = d.number_or("sweep.t_min", c.samples.times.front());
  const double t_max = d.number_or("sweep.t_max", c.samples.times.back());
  for (double dr : delta_r)
    if (!(dr > 0.0)) throw ConfigError(d.line_of("sweep.delta_r"), "delta_r entries must be > 0");

  metrics::GridErrorReport rep;
  rep.n = n;
  rep.alpha0 = c.model.alpha0;
  rep.reference_dr = c.grid_dr();
  rep.t_min = t_min;
  rep.t_max = t_max;
  rep.delta_r = delta_r;
  const backends::MomentRequest req{{n}, c.samples.thetas, c.samples.times};
  Table eps;
  eps.add("delta_r", delta_r);
  for (double g : gammas) {
    if (g < 0.0) throw ConfigError(d.line_of("sweep.gammas"), "gammas must be >= 0");
    const ModelParams p = ModelParams::make(c.model.kappa, g * c.model.kappa, c.model.alpha0);
    pde::SolverConfig full = c.solver;
    full.mode = pde::Mode::full;
    const backends::Grid ref_grid{rep.reference_dr, c.r_max};
    const auto twa = backends::twa_moments(p, req, c.solver, ref_grid);
    const auto ref = backends::pde_moments(p, req, full, ref_grid);
    const auto dev_ref = metrics::averaged_deviation(ref.at(n), twa.at(n), p.alpha0);
    std::vector<double> col;
    for (double dr : delta_r) {
      // the TWA stays at reference quality so that every gamma measures only
      // the discretization error of the full solution
      const auto coarse = backends::pde_moments(p, req, full, {dr, c.r_max});
      const auto dev = metrics::averaged_deviation(coarse.at(n), twa.at(n), p.alpha0);
      const auto e = metrics::grid_error(dev, dev_ref, t_min, t_max);
      rep.epsilon[g].push_back(e);
      col.push_back(e.value);
    }
    eps.add("gamma_" + theta_label(g), col);
  }
  w.put("grid_error.csv", eps);
  w.put("grid_error.json", metrics::to_json(rep));
  r.summary["grid_error"] = metrics::to_json(rep);
}

inline void run_convexity(const ExperimentConfig& c, Writer& w, RunResult& r) {
  require_rotation(c, "convexity");
  const auto& d = c.doc;
  const double t_eval = d.number_or("convexity.t_eval", pi / c.model.kappa);
  const double theta = d.number_or("convexity.theta", 0.0);
  if (!(c.model.gamma > 0.0)) throw ConfigError(d.line_of("model.gamma"), "convexity needs gamma > 0");
  const backends::MomentRequest req{c.samples.orders, {theta}, {0.0, t_eval}};
  const ModelParams closed_p = ModelParams::make(c.model.kappa, 0.0, c.model.alpha0);
  const auto open = backends::fock_moments(c.model, req, c.n_trunc);
  const auto closed = backends::fock_moments(closed_p, req, c.n_trunc);
  const auto classical = backends::twa_moments(c.model, req, c.solver, grid_of(c));
  metrics::ConvexityReport rep;
  rep.alpha0 = c.model.alpha0;
  rep.gamma = c.model.gamma;
  rep.t_eval = t_eval;
  Table t;
  std::vector<double> ns, ps, op, cl, cs;
  for (int n : c.samples.orders) {
    const double o = open.at(n).at(0, 1), k = closed.at(n).at(0, 1), q = classical.at(n).at(0, 1);
    const auto v = metrics::convexity_p(o, k, q, metrics::convexity_threshold(c.model.alpha0, n));
    rep.n.push_back(n);
    rep.p.push_back(v);
    ns.push_back(n);
    ps.push_back(v.p.value_or(std::nan("")));
    op.push_back(o);
    cl.push_back(k);
    cs.push_back(q);
  }
  t.add("n", ns);
  t.add("open", op);
  t.add("closed", cl);
  t.add("classical", cs);
  t.add("p", ps);
  w.put("convexity.csv", t);
  w.put("convexity.json", metrics::to_json(rep));
  r.summary["convexity"] = metrics::to_json(rep);
}

inline void run_kitten(const ExperimentConfig& c, Writer& w, RunResult& r) {
  const auto& d = c.doc;
  const int M = d.integer("kitten.M");
  const int N = d.integer("kitten.N");
  analytic::KittenState ks;
  try {
    ks = analytic::kitten_coefficients(M, N, c.model.alpha0);
  } catch (const InvalidArgument& e) {
    throw ConfigError(d.line_of("kitten.N"), e.what());
  }
  Table t;
  std::vector<double> idx, re, im, prob;
  for (std::size_t k = 0; k < ks.f.size(); ++k) {
    idx.push_back(double(k));
    re.push_back(ks.f[k].real());
    im.push_back(ks.f[k].imag());
    prob.push_back(std::norm(ks.f[k]));
  }
  t.meta.push_back({"M", std::to_string(M)});
  t.meta.push_back({"N", std::to_string(N)});
  t.add("k", idx);
  t.add("re", re);
  t.add("im", im);
  t.add("weight", prob);
  w.put("kitten.csv", t);
  r.summary["components"] = ks.nonzero_indices();
  r.summary["time"] = 2.0 * pi * M / N;
}

inline void run_cat_decay(const ExperimentConfig& c, Writer& w, RunResult& r) {
  const auto& d = c.doc;
  const double a0 = c.model.alpha0;
  const int N = c.n_trunc.value_or(fock::default_truncation(a0));
  const auto rho0 = fock::FockDensity::pure(fock::cat_vector(a0, N));
  const fock::StripePropagator prop(rho0, c.model);
  const double x0 = std::sqrt(2.0) * a0;
  std::vector<double> fringe, exact, short_time;
  for (double t : c.samples.times) {
    const auto rho = prop.at(t);
    const double b = a0 * std::exp(-0.5 * c.model.gamma * t);
    const auto plus = fock::coherent_vector({0.0, b}, N), minus = fock::coherent_vector({0.0, -b}, N);
    const cplx coh = (plus.adjoint() * rho.matrix() * minus)(0, 0);
    fringe.push_back(2.0 * std::abs(coh));
    exact.push_back(analytic::cat_fringe_weight(t, x0, c.model.gamma));
    short_time.push_back(analytic::cat_fringe_weight(t, x0, c.model.gamma, analytic::FringeWeight::short_time));
  }
  Table t;
  t.add("t", c.samples.times);
  t.add("fringe", fringe);
  t.add("exact_overlap", exact);
  t.add("short_time", short_time);
  w.put("fringe.csv", t);
  const double fit_end = d.number_or("cat.fit_end", c.samples.times.back());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t i = 0; i < fringe.size(); ++i) {
    const double tt = c.samples.times[i];
    if (tt > fit_end || !(fringe[i] > 0.0)) continue;
    const double y = std::log(fringe[i]);
    sx += tt, sy += y, sxx += tt * tt, sxy += tt * y, ++m;
  }
  if (m >= 2) r.summary["fitted_rate"] = -(m * sxy - sx * sy) / (m * sxx - sx * sx);
  r.summary["predicted_rate"] = 2.0 * a0 * a0 * c.model.gamma;
}

}  // namespace detail

/// Executes the experiment, writing artifacts and manifest.json.
inline RunResult run(const ExperimentConfig& c) {
  RunResult r;
  r.dir = fs::path(c.output_dir) / (config::to_string(c.kind) + "-" + c.run_id);
  fs::create_directories(r.dir);
  detail::Writer w(c, r);
  const auto t0 = std::chrono::steady_clock::now();
  switch (c.kind) {
    case Kind::moments: detail::run_moments(c, w, r); break;
    case Kind::wigner_snapshot: detail::run_snapshot(c, w, r); break;
    case Kind::deviation: detail::run_deviation(c, w, r); break;
    case Kind::grid_error_sweep: detail::run_grid_sweep(c, w, r); break;
    case Kind::convexity: detail::run_convexity(c, w, r); break;
    case Kind::kitten: detail::run_kitten(c, w, r); break;
    case Kind::cat_decay: detail::run_cat_decay(c, w, r); break;
  }
  const auto unused = c.doc.unused();
  if (!unused.empty()) r.summary["unused_keys"] = unused;
  nlohmann::json m;
  m["run_id"] = c.run_id;
  m["kind"] = config::to_string(c.kind);
  m["backend"] = c.backend;
  m["config"] = c.canonical;
  m["artifacts"] = r.artifacts;
  m["summary"] = r.summary;
  m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_atomic(r.dir / "manifest.json", m.dump(2) + "\n");
  return r;
}

// ---------------------------------------------------------------------------
// compare

struct ColumnDiff {
  std::string file, column;
  double max_abs = 0.0;
  double rel = 0.0;  // max_abs / max |b|
};

struct CompareResult {
  std::vector<ColumnDiff> columns;
  double worst = 0.0;
  [[nodiscard]] bool passed(double tol) const { return worst <= tol; }
};

inline nlohmann::json read_manifest(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw ConfigError(0, "no manifest.json in " + dir.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(0, "bad manifest in " + dir.string() + ": " + e.what());
  }
}

/// Column-wise comparison of every CSV artifact the two runs share. Each
/// column's error is its max absolute difference over max |b| in that column.
inline CompareResult compare_runs(const fs::path& a, const fs::path& b) {
  const auto ma = read_manifest(a), mb = read_manifest(b);
  if (ma.at("kind") != mb.at("kind"))
    throw ConfigError(0, "cannot compare a " + ma.at("kind").get<std::string>() + " run with a " +
                             mb.at("kind").get<std::string>() + " run");
  CompareResult res;
  int shared = 0;
  for (const auto& name_j : ma.at("artifacts")) {
    const std::string name = name_j.get<std::string>();
    if (name.size() < 4 || name.substr(name.size() - 4) != ".csv" || !fs::exists(b / name)) continue;
    ++shared;
    std::ifstream ia(a / name), ib(b / name);
    const auto ta = Table::parse(ia, (a / name).string()), tb = Table::parse(ib, (b / name).string());
    if (ta.headers != tb.headers || ta.columns.front().size() != tb.columns.front().size())
      throw ComparisonFailure(name + ": tables differ in shape");
    for (std::size_t c = 0; c < ta.headers.size(); ++c) {
      ColumnDiff d{name, ta.headers[c]};
      double scale = 0.0;
      for (std::size_t i = 0; i < ta.columns[c].size(); ++i) {
        d.max_abs = std::max(d.max_abs, std::abs(ta.columns[c][i] - tb.columns[c][i]));
        scale = std::max(scale, std::abs(tb.columns[c][i]));
      }
      d.rel = scale > 0.0 ? d.max_abs / scale : d.max_abs;
      res.worst = std::max(res.worst, d.rel);
      res.columns.push_back(d);
    }
  }
  if (shared == 0) throw ComparisonFailure("the runs share no CSV artifacts");
  return res;
}

}  // namespace kerr::runner
