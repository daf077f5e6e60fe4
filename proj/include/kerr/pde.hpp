#pragma once

// Time evolution of a FourierRadialField under the lossy Kerr Wigner PDE.
//
// In dimensionless time tau = kappa t every harmonic c_k = a_k + i b_k obeys
//
//   d_tau c_k = [xi + (xi/2) r d_r - i k (r^2 - 1) + (xi/8 + i k/16) D_k] c_k,
//   D_k = d_r^2 + (1/r) d_r - k^2/r^2,
//
// independently of every other harmonic. The truncated Wigner approximation
// drops the i k/16 D_k term. Radial derivatives use 5-point fourth-order
// stencils; time stepping is adaptive TR-BDF2 with one banded LU per step
// size.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "kerr/analytic.hpp"
#include "kerr/banded.hpp"
#include "kerr/params.hpp"
#include "kerr/phasespace.hpp"
#include "kerr/special.hpp"

namespace kerr::pde {

using phasespace::FourierRadialField;

enum class Mode { full, twa };

inline std::string to_string(Mode m) { return m == Mode::full ? "full" : "twa"; }

struct SolverConfig {
  double abs_tol = 1e-9;
  double rel_tol = 1e-6;
  std::optional<double> max_step;  // default pi / (100 alpha0^2)
  Mode mode = Mode::full;
  int k_max = 60;
  int threads = 1;

  void validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw InvalidArgument("solver tolerances must be > 0");
    if (max_step && !(*max_step > 0.0)) throw InvalidArgument("max_step must be > 0");
    if (k_max < 0) throw InvalidArgument("k_max must be >= 0");
    if (threads < 1) throw InvalidArgument("threads must be >= 1");
  }

  [[nodiscard]] double step_cap(const ModelParams& p) const {
    if (max_step) return *max_step;
    return p.alpha0 > 0.0 ? pi / (100.0 * p.alpha0 * p.alpha0) : pi / 100.0;
  }
};

// ----------------------------------------------------------------------------
// Discrete operator

/// Banded discretization of one harmonic. `source` holds the coefficients of
/// the r = 0 boundary value a_0(tau, 0) in the first two rows (k = 0 only).
struct HarmonicOperator {
  int k = 0;
  Mode mode = Mode::full;
  BandedMatrix<cplx> matrix;
  cplx source[2] = {0.0, 0.0};
  ModelParams params;

  [[nodiscard]] int size() const { return matrix.size(); }

  [[nodiscard]] double boundary(double tau) const { return k == 0 ? phasespace::coherent_origin_value(params, tau) : 0.0; }

  /// out = L y + s(tau)
  void apply(std::span<const cplx> y, double tau, std::span<cplx> out) const {
    matrix.multiply(y, out);
    if (k == 0) {
      const double a00 = boundary(tau);
      out[0] += source[0] * a00;
      if (out.size() > 1) out[1] += source[1] * a00;
    }
  }
};

inline HarmonicOperator assemble(int k, int n_r, double dr, const ModelParams& params, Mode mode) {
  if (k < 0) throw InvalidArgument("assemble: k must be >= 0");
  if (n_r < 4) throw InvalidArgument("assemble: need at least 4 radial points");
  if (!(params.kappa > 0.0)) throw InvalidArgument("the phase-space solver needs kappa > 0");
  const double xi = params.xi();
  HarmonicOperator op;
  op.k = k;
  op.mode = mode;
  op.params = params;
  op.matrix = BandedMatrix<cplx>(n_r, 2, 2);
  static constexpr double d1[5] = {1.0, -8.0, 0.0, 8.0, -1.0};
  static constexpr double d2[5] = {-1.0, 16.0, -30.0, 16.0, -1.0};
  const double kd = k;
  const cplx diff = mode == Mode::full ? cplx(xi / 8.0, kd / 16.0) : cplx(xi / 8.0, 0.0);
  const double parity = k % 2 == 0 ? 1.0 : -1.0;
  for (int q = 1; q <= n_r; ++q) {  // grid position, r = q dr
    const double r = q * dr;
    const cplx first = 0.5 * xi * r + diff / r;  // multiplies d_r
    const cplx local = xi - cplx(0.0, kd * (r * r - 1.0)) - diff * (kd * kd) / (r * r);
    for (int o = -2; o <= 2; ++o) {
      cplx w = first * d1[o + 2] / (12.0 * dr) + diff * d2[o + 2] / (12.0 * dr * dr);
      if (o == 0) w += local;
      const int nb = q + o;
      if (nb > n_r) continue;  // zero beyond r_max
      if (nb == 0) {
        if (k == 0) op.source[q - 1] += w;  // a_0(tau, 0) is prescribed
        continue;
      }
      const int col = nb < 0 ? -nb : nb;  // ghost node mirrors with (-1)^k
      op.matrix.at(q - 1, col - 1) += nb < 0 ? parity * w : w;
    }
  }
  return op;
}

// ----------------------------------------------------------------------------
// TR-BDF2

namespace detail {
inline constexpr double tr_gamma = 2.0 - 1.4142135623730951;  // 2 - sqrt2
inline constexpr double tr_d = tr_gamma / 2.0;
// error constant of the embedded estimate
inline constexpr double tr_ke = (-3.0 * tr_gamma * tr_gamma + 4.0 * tr_gamma - 2.0) / (12.0 * (2.0 - tr_gamma));
}  // namespace detail

struct StepStats {
  long accepted = 0;
  long rejected = 0;
  long factorizations = 0;

  StepStats& operator+=(const StepStats& o) {
    accepted += o.accepted;
    rejected += o.rejected;
    factorizations += o.factorizations;
    return *this;
  }
};

/// Adaptive TR-BDF2 for one harmonic. Factorizations of I - d h L are
/// cached by step size, so repeated steps of the same size reuse them.
class HarmonicStepper {
 public:
  HarmonicStepper(HarmonicOperator op, const SolverConfig& cfg)
      : op_(std::move(op)), cfg_(cfg), n_(static_cast<std::size_t>(op_.size())),
        fn_(n_), fg_(n_), f1_(n_), yg_(n_), y1_(n_), est_(n_) {}

  [[nodiscard]] const HarmonicOperator& op() const { return op_; }
  [[nodiscard]] const StepStats& stats() const { return stats_; }

  /// One composite step of size h from (tau, y). Writes the result to
  /// `out` and returns the weighted error norm (<= 1 means acceptable).
  /// With `fn_known`, the derivative at (tau, y) left by the previous call
  /// is reused (it is the last stage derivative of an accepted step, or the
  /// first of a rejected one).
  double attempt(std::span<const cplx> y, double tau, double h, std::span<cplx> out, bool fn_known = false) {
    using namespace detail;
    const BandedLU<cplx>& lu = factor(h);
    const double c = tr_d * h;
    const double sg = op_.boundary(tau + tr_gamma * h), s1 = op_.boundary(tau + h);
    // trapezoidal stage to tau + gamma h
    if (!fn_known) op_.apply(y, tau, fn_);
    for (std::size_t i = 0; i < n_; ++i) yg_[i] = y[i] + c * fn_[i];
    add_source(yg_, c, sg);
    lu.solve(yg_);
    // BDF2 closure to tau + h
    const double w1 = 1.0 / (tr_gamma * (2.0 - tr_gamma));
    const double w0 = (1.0 - tr_gamma) * (1.0 - tr_gamma) / (tr_gamma * (2.0 - tr_gamma));
    for (std::size_t i = 0; i < n_; ++i) y1_[i] = w1 * yg_[i] - w0 * y[i];
    add_source(y1_, c, s1);
    lu.solve(y1_);
    // embedded estimate, filtered through the same iteration matrix
    op_.apply(yg_, tau + tr_gamma * h, fg_);
    op_.apply(y1_, tau + h, f1_);
    const double a = 2.0 * tr_ke * h;
    for (std::size_t i = 0; i < n_; ++i)
      est_[i] = a * (fn_[i] / tr_gamma - fg_[i] / (tr_gamma * (1.0 - tr_gamma)) + f1_[i] / (1.0 - tr_gamma));
    lu.solve(est_);
    // squared magnitudes avoid hypot in this hot loop
    double err2 = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double sc = cfg_.abs_tol + cfg_.rel_tol * std::sqrt(std::max(std::norm(y[i]), std::norm(y1_[i])));
      err2 = std::max(err2, std::norm(est_[i]) / (sc * sc));
    }
    std::copy(y1_.begin(), y1_.end(), out.begin());
    return std::sqrt(err2);
  }

  /// Advances y from tau0 through every time in `stops` (sorted, >= tau0),
  /// calling visit(index, y) on arrival at each.
  template <class Visit>
  void integrate(std::vector<cplx>& y, double tau0, std::span<const double> stops, double h_cap, Visit&& visit) {
    std::vector<cplx> trial(n_);
    double tau = tau0;
    double h_pref = h_cap;
    bool fn_known = false;
    for (std::size_t s = 0; s < stops.size(); ++s) {
      const double target = stops[s];
      if (target < tau - 1e-12 * std::max(1.0, std::abs(tau))) throw InvalidArgument("sample times must be sorted");
      while (target - tau > 1e-13 * std::max(1.0, std::abs(target))) {
        double h = std::min(h_pref, h_cap);
        bool landing = false;
        if (tau + h >= target - 1e-13 * std::max(1.0, target)) {
          h = target - tau;
          landing = true;
        } else if (tau + 1.5 * h > target) {
          h = 0.5 * (target - tau);  // avoid a sliver step before the sample
        }
        const double err = attempt(y, tau, h, trial, fn_known);
        fn_known = true;
        if (!std::isfinite(err)) throw NumericalFailure("TR-BDF2: non-finite error estimate at tau=" + std::to_string(tau));
        const double fac = err == 0.0 ? 2.0 : std::clamp(0.9 * std::cbrt(1.0 / err), 0.2, 2.0);
        if (err <= 1.0) {
          ++stats_.accepted;
          tau = landing ? target : tau + h;
          y.swap(trial);
          fn_.swap(f1_);
          if (!landing || fac < 1.0) h_pref = grow(h_pref, h, fac);
        } else {
          ++stats_.rejected;
          h_pref = h * fac;
          if (h_pref < 1e-14 * std::max(1.0, std::abs(tau)))
            throw NumericalFailure("TR-BDF2: step size underflow at tau=" + std::to_string(tau) + " for harmonic k=" +
                                   std::to_string(op_.k));
        }
      }
      tau = target;
      visit(s, std::span<const cplx>(y));
    }
  }

 private:
  static double grow(double h_pref, double h, double fac) {
    // keep the current size for modest changes so cached factorizations stay valid
    const double proposed = h * fac;
    if (fac >= 1.0 && fac < 1.25) return std::max(h_pref, h);
    return proposed;
  }

  void add_source(std::vector<cplx>& v, double c, double value) const {
    if (op_.k != 0) return;
    v[0] += c * op_.source[0] * value;
    if (n_ > 1) v[1] += c * op_.source[1] * value;
  }

  const BandedLU<cplx>& factor(double h) {
    for (auto& e : cache_)
      if (e.first == h) return e.second;
    BandedMatrix<cplx> m = op_.matrix;
    const double c = detail::tr_d * h;
    const int n = m.size();
    for (int i = 0; i < n; ++i)
      for (int col = std::max(0, i - 2); col <= std::min(n - 1, i + 2); ++col)
        m.at(i, col) = (i == col ? 1.0 : 0.0) - c * m.at(i, col);
    ++stats_.factorizations;
    if (cache_.size() >= 3) cache_.erase(cache_.begin());
    cache_.emplace_back(h, BandedLU<cplx>(std::move(m)));
    return cache_.back().second;
  }

  HarmonicOperator op_;
  SolverConfig cfg_;
  std::size_t n_;
  std::vector<cplx> fn_, fg_, f1_, yg_, y1_, est_;
  std::vector<std::pair<double, BandedLU<cplx>>> cache_;
  StepStats stats_;
};

/// A single fixed TR-BDF2 step of every harmonic (no error control).
/// Returns the advanced field; the largest weighted error norm is written
/// to `err_out` when given.
inline FourierRadialField step(const FourierRadialField& field, double dt, const SolverConfig& cfg,
                               double* err_out = nullptr) {
  cfg.validate();
  if (!(dt > 0.0)) throw InvalidArgument("step: dt must be > 0");
  if (dt > cfg.step_cap(field.params()) * (1.0 + 1e-12)) throw InvalidArgument("step: dt exceeds max_step");
  FourierRadialField out = field;
  double worst = 0.0;
  for (int k = 0; k <= field.k_max(); ++k) {
    HarmonicStepper st(assemble(k, field.n_r(), field.dr(), field.params(), cfg.mode), cfg);
    std::vector<cplx> y(field.harmonic(k).begin(), field.harmonic(k).end());
    worst = std::max(worst, st.attempt(y, field.tau(), dt, out.harmonic(k)));
  }
  out.set_tau(field.tau() + dt);
  out.set_origin(phasespace::coherent_origin_value(field.params(), out.tau()));
  if (err_out) *err_out = worst;
  return out;
}

// ----------------------------------------------------------------------------
// Evolution drivers

/// Integrates every harmonic of `field` through `sample_times` and hands
/// each arrival to sink(k, sample_index, profile). Harmonics are
/// independent, so with cfg.threads > 1 they run concurrently; the sink
/// must tolerate concurrent calls for distinct k.
template <class Sink>
StepStats evolve_harmonics(const FourierRadialField& field, const SolverConfig& cfg, std::span<const double> sample_times,
                           Sink&& sink) {
  cfg.validate();
  if (!std::is_sorted(sample_times.begin(), sample_times.end())) throw InvalidArgument("sample times must be sorted");
  if (!sample_times.empty() && sample_times.front() < field.tau() - 1e-12)
    throw InvalidArgument("sample times precede the field time");
  const double h_cap = cfg.step_cap(field.params());
  std::atomic<int> next{0};
  std::mutex mu;
  StepStats total;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const int k = next.fetch_add(1);
      if (k > field.k_max()) return;
      try {
        std::vector<cplx> y(field.harmonic(k).begin(), field.harmonic(k).end());
        const bool silent = k > 0 && std::all_of(y.begin(), y.end(), [](const cplx& v) { return v == cplx{}; });
        if (silent) {  // a zero harmonic without a source stays zero
          for (std::size_t s = 0; s < sample_times.size(); ++s) sink(k, s, std::span<const cplx>(y));
          continue;
        }
        HarmonicStepper st(assemble(k, field.n_r(), field.dr(), field.params(), cfg.mode), cfg);
        st.integrate(y, field.tau(), sample_times, h_cap, [&](std::size_t s, std::span<const cplx> v) { sink(k, s, v); });
        std::lock_guard lock(mu);
        total += st.stats();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = field.k_max() + 1;
        return;
      }
    }
  };
  if (cfg.threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < cfg.threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return total;
}

namespace detail {
inline void guard_edge(const FourierRadialField& f) {
  if (f.edge_ratio() > 1e-6)
    throw NumericalFailure("Wigner field reaches the r_max edge (relative amplitude " + std::to_string(f.edge_ratio()) +
                           "); enlarge r_max");
}
}  // namespace detail

/// Snapshots at each sample time (landing exactly on them).
inline std::vector<FourierRadialField> evolve(const FourierRadialField& field, double t_end, const SolverConfig& cfg,
                                              std::span<const double> sample_times, StepStats* stats = nullptr) {
  for (double t : sample_times)
    if (t > t_end + 1e-12) throw InvalidArgument("evolve: sample time beyond t_end");
  std::vector<FourierRadialField> out(sample_times.size(), field);
  for (std::size_t s = 0; s < out.size(); ++s) {
    out[s].set_tau(sample_times[s]);
    out[s].set_origin(phasespace::coherent_origin_value(field.params(), sample_times[s]));
  }
  const StepStats st = evolve_harmonics(field, cfg, sample_times, [&](int k, std::size_t s, std::span<const cplx> v) {
    std::copy(v.begin(), v.end(), out[s].harmonic(k).begin());
  });
  if (stats) *stats = st;
  for (const auto& f : out) detail::guard_edge(f);
  return out;
}

/// Radial moment tables (orders up to p_max) at each sample time, without
/// keeping whole snapshots.
inline std::vector<phasespace::RadialMoments> evolve_moments(const FourierRadialField& field, const SolverConfig& cfg,
                                                             std::span<const double> sample_times, int p_max,
                                                             StepStats* stats = nullptr) {
  if (p_max > field.k_max()) throw InvalidArgument("evolve_moments: p_max exceeds k_max");
  std::vector<phasespace::RadialMoments> out;
  out.reserve(sample_times.size());
  for (double t : sample_times) out.emplace_back(p_max, t);
  std::vector<double> edge(static_cast<std::size_t>(field.k_max() + 1), 0.0);
  const StepStats st = evolve_harmonics(field, cfg, sample_times, [&](int k, std::size_t s, std::span<const cplx> v) {
    edge[static_cast<std::size_t>(k)] = std::max(edge[static_cast<std::size_t>(k)], std::abs(v.back()));
    if (k > p_max) return;
    const double origin = k == 0 ? phasespace::coherent_origin_value(field.params(), sample_times[s]) : 0.0;
    for (int p = k; p <= p_max; ++p)
      out[s].at(k, p) = phasespace::radial_integral(v, field.dr(), p, p == 0 ? origin : 0.0);
  });
  if (stats) *stats = st;
  const double peak = field.peak();
  for (double e : edge)
    if (peak > 0.0 && e / peak > 1e-6)
      throw NumericalFailure("Wigner field reaches the r_max edge; enlarge r_max");
  return out;
}

// ----------------------------------------------------------------------------
// Semiclassical moments

/// Closed-system TWA moments <X_theta^n>(tau) from the characteristic
/// solution W(r, phi, tau) = W(r, phi + tau (r^2 - 1), 0). The angular
/// integral is done in closed form (only harmonics |q| <= n survive),
/// leaving a radial integral by composite Gauss-Legendre. The rule is sized
/// once for the most oscillatory time tau_max and reused for every (theta, tau).
class ClosedTwaMoments {
 public:
  ClosedTwaMoments(const ModelParams& params, int n, double tau_max) : n_(n) {
    params.validate();
    if (n < 1) throw InvalidArgument("ClosedTwaMoments: n must be >= 1");
    if (params.gamma != 0.0) throw InvalidArgument("ClosedTwaMoments: closed system only (gamma = 0)");
    const double a0 = params.alpha0;
    r_hi_ = a0 + 7.0;
    const double scale = std::max(1.0, std::pow(std::sqrt(2.0) * a0, n));
    int panels = std::max(64, static_cast<int>(std::ceil(4.0 * r_hi_ * (1.0 + std::abs(tau_max) * r_hi_))));
    build(params, panels);
    for (int it = 0;; ++it) {
      ClosedTwaMoments finer(*this);
      finer.build(params, 2 * panels);
      double diff = 0.0;
      for (double th : {0.0, 0.7, 2.1})
        for (double tau : {0.5 * tau_max, tau_max}) diff = std::max(diff, std::abs(finer(th, tau) - (*this)(th, tau)));
      *this = std::move(finer);
      panels *= 2;
      if (diff <= 1e-11 * scale) break;
      if (it >= 6) throw NumericalFailure("ClosedTwaMoments: radial quadrature did not converge");
    }
  }

  /// <X_theta^n>_TWA(tau)
  [[nodiscard]] double operator()(double theta, double tau) const {
    double s = 0.0;
    const std::size_t m = static_cast<std::size_t>(n_ + 1);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const double psi = tau * (nodes_[i] * nodes_[i] - 1.0) + theta;
      const double* w = &weights_[i * m];
      for (int j = 0; j <= n_; ++j) {
        const int q = n_ - 2 * j;
        s += w[j] * (q == 0 ? 1.0 : std::cos(q * psi));
      }
    }
    return s;
  }

 private:
  void build(const ModelParams& params, int panels) {
    const auto rule = special::composite_gauss_legendre(0.0, r_hi_, panels);
    const double a0 = params.alpha0;
    nodes_ = rule.nodes;
    weights_.assign(nodes_.size() * static_cast<std::size_t>(n_ + 1), 0.0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const double r = nodes_[i];
      const auto ik = special::bessel_i_scaled(4.0 * r * a0, n_);
      const double g = std::exp(-2.0 * (r - a0) * (r - a0));
      const double radial = rule.weights[i] * r * std::pow(std::sqrt(2.0) * r, n_) * std::ldexp(1.0, -n_);
      // cos^n x = 2^{-n} sum_j C(n, j) cos((n - 2j) x); int cos(k phi) cos(q(phi - psi)) dphi = pi cos(q psi), |q| = k >= 1
      for (int j = 0; j <= n_; ++j) {
        const int kq = std::abs(n_ - 2 * j);
        const double ak = (kq == 0 ? 2.0 / pi : 4.0 / pi) * g * ik[static_cast<std::size_t>(kq)];
        weights_[i * static_cast<std::size_t>(n_ + 1) + static_cast<std::size_t>(j)] =
            radial * special::binomial(n_, j) * ak * (kq == 0 ? 2.0 * pi : pi);
      }
    }
  }

  int n_;
  double r_hi_ = 0.0;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

inline double twa_closed_moment(const ModelParams& params, const analytic::QuadratureSpec& spec, double tau) {
  spec.validate();
  return ClosedTwaMoments(params, spec.n, tau)(spec.theta, tau);
}

}  // namespace kerr::pde
