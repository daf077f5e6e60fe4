// Acceptance checks: one PASS/FAIL line per criterion.
//   acceptance            run everything
//   acceptance 3 5        run only criteria 3 and 5

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "convergence.hpp"
#include "kerr/analytic.hpp"
#include "kerr/backends.hpp"
#include "kerr/fock.hpp"
#include "kerr/metrics.hpp"
#include "kerr/pde.hpp"
#include "kerr/phasespace.hpp"

using namespace kerr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const double t_window = 1.3 * pi / 3.0;

pde::SolverConfig moment_solver(int k_max, pde::Mode mode = pde::Mode::full) {
  pde::SolverConfig c;
  c.k_max = k_max;
  c.mode = mode;
  return c;
}

backends::Grid reference_grid(double a0) { return {phasespace::reference_dr(a0), std::nullopt}; }

// mean over theta of |exact - twa| / alpha0^n
metrics::TimeSeries mean_deviation(const backends::MomentSet& exact, const backends::MomentSet& twa, int n, double a0) {
  return metrics::averaged_deviation(exact.at(n), twa.at(n), a0);
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto p = ModelParams::make(1.0, 0.05, 2.0);
  const backends::MomentRequest req{{1, 2, 4, 6}, metrics::theta_grid(20), metrics::uniform_times(0.0, t_window, 28)};
  const auto pde = backends::pde_moments(p, req, moment_solver(6), {1e-2 * pi / 4.0, std::nullopt});
  const auto fock = backends::fock_moments(p, req, 40);
  double worst = 0.0;
  int worst_n = 0;
  for (int n : req.orders)
    for (std::size_t i = 0; i < req.thetas.size(); ++i) {
      double diff = 0.0, scale = 0.0;
      for (std::size_t j = 0; j < req.times.size(); ++j) {
        diff = std::max(diff, std::abs(pde.at(n).at(i, j) - fock.at(n).at(i, j)));
        scale = std::max(scale, std::abs(fock.at(n).at(i, j)));
      }
      if (diff / scale > worst) worst = diff / scale, worst_n = n;
    }
  return {worst <= 1e-2, fmt("max relative error %.2e (n=%d), limit 1e-2", worst, worst_n)};
}

Outcome closed_revival() {
  const auto p = ModelParams::make(1.0, 0.0, 2.0);
  const auto g = reference_grid(p.alpha0);
  const auto f0 = phasespace::init_coherent(p, 60, g.points(p.alpha0), g.dr);
  const auto cfg = moment_solver(60);
  const std::vector<double> stops{2.0 * pi};
  const auto f = pde::evolve(f0, 2.0 * pi, cfg, stops).back();
  const double l2 = phasespace::l2_distance(f, f0);
  const int N = fock::default_truncation(p.alpha0);
  const auto rho0 = fock::FockDensity::coherent(p.alpha0, N);
  const auto psi0 = fock::coherent_vector(p.alpha0, N);
  const double fid_direct = fock::evolve_direct(rho0, 2.0 * pi, p, 1e-12).overlap(psi0);
  const double fid_stripe = fock::evolve_analytic(rho0, 2.0 * pi, p).overlap(psi0);
  const double fid = std::min(fid_direct, fid_stripe);
  return {l2 <= 1e-3 && fid >= 1.0 - 1e-10,
          fmt("L2 error %.2e (limit 1e-3), norm drift %.1e, Fock infidelity %.1e (limit 1e-10)", l2,
              std::abs(f.norm() - f0.norm()), 1.0 - fid)};
}

Outcome recurrence_localization() {
  const auto p = ModelParams::make(1.0, 0.0, 6.0);
  const int n = 6;
  const backends::MomentRequest req{{n}, metrics::theta_grid(20), metrics::uniform_times(0.0, t_window, 273)};
  const auto dev = mean_deviation(backends::analytic_moments(p, req), backends::twa_moments(p, req, moment_solver(n), reference_grid(p.alpha0)), n, p.alpha0);
  const auto i_peak = *dev.argmax(0.0, t_window);
  const double t_peak = dev.times[i_peak], peak = dev.values[i_peak];
  const double late = dev.max_in(0.6, 0.9);
  const bool pass = std::abs(t_peak - pi / 3.0) <= 0.05 && late <= 0.1 * peak;
  return {pass, fmt("peak %.3e at kappa t = %.4f (pi/3 = %.4f), max on [0.6, 0.9] = %.2e of peak (limit 0.1)", peak, t_peak,
                    pi / 3.0, late / peak)};
}

Outcome decoherence_suppression() {
  const double a0 = 3.0;
  const int n = 6;
  const backends::MomentRequest req{{n}, metrics::theta_grid(20), metrics::uniform_times(0.0, t_window, 137)};
  std::vector<double> peaks;
  std::string text;
  for (double g : {0.0, 0.002, 0.02, 0.1}) {
    const auto p = ModelParams::make(1.0, g, a0);
    const auto exact = backends::exact_moments(p, req);
    const auto twa = backends::twa_moments(p, req, moment_solver(n), reference_grid(a0));
    const auto dev = mean_deviation(exact, twa, n, a0);
    peaks.push_back(dev.max_in(pi / 3.0 - 0.2, pi / 3.0 + 0.2));
    text += fmt("%s%.3e", text.empty() ? "" : ", ", peaks.back());
  }
  bool pass = true;
  for (std::size_t i = 1; i < peaks.size(); ++i) pass = pass && peaks[i] < peaks[i - 1];
  return {pass, "peak deviation near pi/3 for gamma = 0, 0.002, 0.02, 0.1: " + text};
}

struct SweepResult {
  std::vector<double> gammas, delta_r;
  std::vector<std::vector<metrics::GridError>> eps;  // [gamma][delta_r]
};

SweepResult grid_sweep(double a0) {
  const int n = 6;
  SweepResult s{{0.0, 0.002, 0.02, 0.1}, {0.1, 0.05}, {}};
  const backends::MomentRequest req{{n}, metrics::theta_grid(20), metrics::uniform_times(0.0, t_window, 137)};
  const auto full = moment_solver(n), twa_cfg = moment_solver(n, pde::Mode::twa);
  for (double g : s.gammas) {
    const auto p = ModelParams::make(1.0, g, a0);
    // TWA at reference quality for every gamma; only the full solution is coarsened
    const auto twa = backends::twa_moments(p, req, twa_cfg, reference_grid(a0));
    const auto ref = mean_deviation(backends::pde_moments(p, req, full, reference_grid(a0)), twa, n, a0);
    auto& row = s.eps.emplace_back();
    for (double dr : s.delta_r) {
      const auto coarse = mean_deviation(backends::pde_moments(p, req, full, {dr, std::nullopt}), twa, n, a0);
      row.push_back(metrics::grid_error(coarse, ref, 0.0, t_window));
    }
  }
  return s;
}

Outcome grid_error_ratios() {
  bool pass = true;
  std::string text;
  for (auto [a0, target] : {std::pair{3.0, 1e3}, std::pair{6.0, 1e4}}) {
    const auto s = grid_sweep(a0);
    for (const auto& row : s.eps)
      for (const auto& e : row) pass = pass && e.defined;
    const double ratio = s.eps.front()[0].value / s.eps.back()[0].value;
    const bool ratio_ok = ratio >= target / 10.0 && ratio <= target * 10.0;
    bool monotone = true;
    for (std::size_t j = 0; j < s.delta_r.size(); ++j)
      for (std::size_t i = 1; i < s.gammas.size(); ++i)
        monotone = monotone && s.eps[i][j].value <= 1.05 * s.eps[i - 1][j].value;
    pass = pass && ratio_ok && monotone;
    std::string eps;
    for (const auto& row : s.eps) eps += fmt("%s%.2e", eps.empty() ? "" : " ", row[0].value);
    text += fmt("%salpha0=%g: ratio %.2e (target %.0e), eps(dr=0.1) over gamma [%s], monotone %s", text.empty() ? "" : "; ",
                a0, ratio, target, eps.c_str(), monotone ? "yes" : "no");
  }
  return {pass, text};
}

Outcome cat_decoherence_rate() {
  const double a0 = 3.0, g = 0.01;
  const auto p = ModelParams::make(0.0, g, a0);
  const int N = fock::default_truncation(a0);
  const fock::StripePropagator prop(fock::FockDensity::pure(fock::cat_vector(a0, N)), p);
  std::vector<double> ts, ys;
  for (double t : metrics::uniform_times(0.0, 0.02 / g, 21)) {
    const double b = a0 * std::exp(-0.5 * g * t);
    const auto plus = fock::coherent_vector({0.0, b}, N), minus = fock::coherent_vector({0.0, -b}, N);
    const cplx coh = (plus.adjoint() * prop.at(t).matrix() * minus)(0, 0);
    ts.push_back(t);
    ys.push_back(std::log(2.0 * std::abs(coh)));
  }
  const double mt = std::accumulate(ts.begin(), ts.end(), 0.0) / ts.size();
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) sxy += (ts[i] - mt) * (ys[i] - my), sxx += (ts[i] - mt) * (ts[i] - mt);
  const double rate = -sxy / sxx, predicted = 2.0 * a0 * a0 * g;
  const double rel = std::abs(rate / predicted - 1.0);
  return {rel <= 0.02, fmt("fitted %.5f vs 2 alpha0^2 gamma = %.5f, relative difference %.2e (limit 2e-2)", rate,
                           predicted, rel)};
}

// freely decaying cat: open = Fock evolution, closed = coherent superposition
// of the decayed amplitudes, classical = the corresponding mixture
std::vector<double> decaying_cat_p(double a0, double g, double t, const std::vector<int>& orders) {
  const auto p = ModelParams::make(0.0, g, a0);
  const int N = fock::default_truncation(a0);
  const Eigen::VectorXcd v = fock::coherent_vector({0.0, a0}, N) + fock::coherent_vector({0.0, -a0}, N);
  const double norm = 1.0 / v.squaredNorm();
  const auto open = fock::evolve_analytic(fock::FockDensity::pure(v * std::sqrt(norm)), t, p);
  const double b = a0 * std::exp(-0.5 * g * t);
  const auto plus = fock::coherent_vector({0.0, b}, N), minus = fock::coherent_vector({0.0, -b}, N);
  const Eigen::VectorXcd sum = plus + minus;
  const fock::FockDensity closed(norm * sum * sum.adjoint(), t);
  const fock::FockDensity classical(norm * (plus * plus.adjoint() + minus * minus.adjoint()), t);
  std::vector<double> ps;
  for (int n : orders) {
    const analytic::QuadratureSpec spec{n, 0.0};
    const auto v_p = metrics::convexity_p(fock::quadrature_moment_fock(open, spec), fock::quadrature_moment_fock(closed, spec),
                                          fock::quadrature_moment_fock(classical, spec),
                                          metrics::convexity_threshold(a0, n));
    ps.push_back(v_p.p.value_or(std::nan("")));
  }
  return ps;
}

Outcome convexity() {
  const double a0 = 4.0;
  const std::vector<int> orders{2, 4, 6, 8};
  // theta = 0 is the X quadrature the criterion names; pi/2 (the cat axis) is
  // reported alongside but does not enter the verdict
  const backends::MomentRequest req{orders, {0.0, pi / 2.0}, {0.0, pi}};
  const auto closed = backends::fock_moments(ModelParams::make(1.0, 0.0, a0), req);
  auto p_of = [&](double g, std::size_t i_theta) {
    const auto p = ModelParams::make(1.0, g, a0);
    const auto open = backends::fock_moments(p, req);
    const auto classical = backends::twa_moments(p, req, moment_solver(8), reference_grid(a0));
    std::vector<double> ps;
    for (int n : orders) {
      const auto v = metrics::convexity_p(open.at(n).at(i_theta, 1), closed.at(n).at(i_theta, 1),
                                          classical.at(n).at(i_theta, 1), metrics::convexity_threshold(a0, n));
      ps.push_back(v.p.value_or(std::nan("")));
    }
    return ps;
  };
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += fmt("%s%.6f", s.empty() ? "" : " ", x);
    return s;
  };
  auto strictly_decreasing = [](const std::vector<double>& v) {
    bool ok = std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    for (std::size_t i = 1; i < v.size(); ++i) ok = ok && v[i] < v[i - 1];
    return ok;
  };
  auto spread = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  };
  const auto weak = p_of(0.01, 0), strong = p_of(0.1, 0);
  const bool decreasing = strictly_decreasing(weak);
  const double s_strong = spread(strong);
  const bool flat = std::isfinite(s_strong) && s_strong <= 0.05;
  const auto weak_axis = p_of(0.01, 1);

  // the control needs a cat small enough that its fringe moments clear the threshold
  const double c_a0 = 1.0, c_g = 0.1, c_t = pi;
  const auto control = decaying_cat_p(c_a0, c_g, c_t, orders);
  const double expected = std::exp(-2.0 * c_a0 * c_a0 * (1.0 - std::exp(-c_g * c_t)));
  double c_spread = 0.0;
  for (double x : control) c_spread = std::max(c_spread, std::abs(x - expected));
  const bool control_ok = std::isfinite(c_spread) && c_spread <= 1e-8;
  return {decreasing && flat && control_ok,
          fmt("X quadrature, gamma=0.01: p = [%s] strictly decreasing %s; gamma=0.1: spread %.4f (limit 0.05); "
              "decaying-cat control max |p - %.6f| = %.1e (limit 1e-8); diagnostic only, cat-axis quadrature at "
              "gamma=0.01: p = [%s]",
              list(weak).c_str(), decreasing ? "yes" : "no", s_strong, expected, c_spread, list(weak_axis).c_str())};
}

Outcome kitten_algebra() {
  int pairs = 0;
  double worst_weight = 0.0, worst_aligned = 0.0, worst_number = 0.0, worst_suppressed = 0.0;
  bool counts = true;
  const double a0 = 4.0;
  const auto closed = ModelParams::make(1.0, 0.0, a0);
  const auto rho0 = fock::FockDensity::coherent(a0, fock::default_truncation(a0));
  for (int N = 1; N <= 12; ++N)
    for (int M = 1; M <= std::max(1, N - 1); ++M) {
      if (std::gcd(M, N) != 1) continue;
      ++pairs;
      const auto ks = analytic::kitten_coefficients(M, N);
      counts = counts && static_cast<int>(ks.nonzero_indices().size()) == N;
      for (int k : ks.nonzero_indices())
        worst_weight = std::max(worst_weight, std::abs(std::norm(ks.f[static_cast<std::size_t>(k)]) - 1.0 / N));
      const auto rho = fock::evolve_analytic(rho0, 2.0 * pi * M / N, closed);
      for (int mu = 0; mu <= 12; ++mu)
        for (int nu = 0; nu <= 12; ++nu) {
          const cplx exact = fock::normal_expectation(rho, mu, nu);
          const cplx model = analytic::kitten_expectation_value(mu, nu, M, N, a0);
          const double scale = std::pow(a0, mu + nu);
          switch (analytic::kitten_expectation_case(mu, nu, M, N)) {
            case analytic::KittenCase::number_power:
              worst_number = std::max(worst_number, std::abs(exact - model) / scale);
              break;
            case analytic::KittenCase::aligned:
              worst_aligned = std::max(worst_aligned, std::abs(exact - model) / std::abs(model));
              break;
            case analytic::KittenCase::suppressed: {
              // |<a^dag^mu a^nu>| = a0^{mu+nu} exp(-a0^2 (1 - cos phi)), phi the residual phase
              const double phi = 2.0 * pi * M * (mu - nu) / N;
              const double bound = scale * std::exp(-a0 * a0 * (1.0 - std::cos(phi)));
              worst_suppressed = std::max(worst_suppressed, (std::abs(exact) - bound) / scale);
              break;
            }
          }
        }
    }
  const bool pass = counts && worst_weight <= 1e-12 && worst_aligned <= std::exp(-a0 * a0) && worst_number <= 1e-9 &&
                    worst_suppressed <= 1e-9;
  return {pass, fmt("%d coprime pairs, counts %s, max ||f|^2 - 1/N| %.1e; aligned relative error %.1e (limit %.1e), "
                    "number-power %.1e, suppressed excess over bound %.1e (relative to alpha0^(mu+nu))",
                    pairs, counts ? "ok" : "WRONG", worst_weight, worst_aligned, std::exp(-a0 * a0), worst_number,
                    worst_suppressed)};
}

Outcome numerical_order() {
  using convergence::Profile;
  double lo = 1e9, hi = 0.0;
  for (auto mode : {pde::Mode::full, pde::Mode::twa})
    for (int k : {0, 1, 2, 3, 6, 12}) {
      const Profile pr{k, k > 4 ? 0.5 : 1.0};
      const auto e1 = convergence::operator_error(pr, 0.04, 0.4, mode);
      const auto e2 = convergence::operator_error(pr, 0.02, 0.4, mode);
      for (double r : {e1.interior / e2.interior, e1.weighted / e2.weighted}) lo = std::min(lo, r), hi = std::max(hi, r);
    }
  const bool spatial = lo >= 13.5 && hi <= 18.5;

  const auto p = ModelParams::make(1.0, 0.2, 1.0);
  const auto f0 = phasespace::init_coherent(p, 6, 100, 0.05);
  auto cfg = moment_solver(6);
  cfg.max_step = 1.0;
  auto run = [&](int steps) {
    auto f = f0;
    for (int i = 0; i < steps; ++i) f = pde::step(f, 0.4 / steps, cfg);
    return f;
  };
  const auto ref = run(256);
  const double e1 = phasespace::l2_distance(run(8), ref), e2 = phasespace::l2_distance(run(16), ref),
               e3 = phasespace::l2_distance(run(32), ref);
  const double o1 = std::log2(e1 / e2), o2 = std::log2(e2 / e3);
  const bool temporal = std::abs(o1 - 2.0) <= 0.3 && std::abs(o2 - 2.0) <= 0.3;

  double worst = 0.0;
  const int n_phi = 128;
  for (int m = 0; m <= 12; ++m)
    for (int n = 0; n <= 12; ++n)
      for (int k = 0; k <= 12; ++k)
        for (auto par : {phasespace::Parity::cos, phasespace::Parity::sin}) {
          double s = 0.0;
          for (int i = 0; i < n_phi; ++i) {
            const double phi = 2.0 * pi * i / n_phi;
            s += std::pow(std::cos(phi), m) * std::pow(std::sin(phi), n) *
                 (par == phasespace::Parity::cos ? std::cos(k * phi) : std::sin(k * phi));
          }
          worst = std::max(worst, std::abs(phasespace::angular_weight(m, n, k, par) - s * 2.0 * pi / n_phi));
        }
  return {spatial && temporal && worst <= 1e-12,
          fmt("spatial ratios in [%.2f, %.2f] (16 +- 2.5), temporal orders %.3f %.3f (2 +- 0.3), angular weight error "
              "%.1e (limit 1e-12)",
              lo, hi, o1, o2, worst)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"oracle equivalence", oracle_equivalence},
      {"closed-system revival", closed_revival},
      {"recurrence localization", recurrence_localization},
      {"decoherence suppression", decoherence_suppression},
      {"grid-error ratios", grid_error_ratios},
      {"cat decoherence rate", cat_decoherence_rate},
      {"convexity test", convexity},
      {"kitten algebra", kitten_algebra},
      {"numerical order", numerical_order},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %d %s: %s (%.0f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
