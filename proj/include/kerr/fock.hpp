#pragma once

// Truncated number-basis Lindblad evolution for the lossy Kerr mode.
//
// The master equation couples rho_{j,k} only to rho_{j+1,k+1}, so every
// diagonal stripe (fixed j - k) is an independent upper-bidiagonal linear
// system. Stripe m holds rho_{j, j-m} for j = m..N and is indexed from its
// terminating element: i = N - j, so i = 0 is the bottom row.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kerr/analytic.hpp"
#include "kerr/params.hpp"
#include "kerr/special.hpp"

namespace kerr::fock {

/// ceil(alpha0^2 + 8 alpha0 + 10)
inline int default_truncation(double alpha0) {
  return static_cast<int>(std::ceil(alpha0 * alpha0 + 8.0 * alpha0 + 10.0));
}

/// Fock amplitudes of the coherent state |beta> on 0..n_trunc.
inline Eigen::VectorXcd coherent_vector(cplx beta, int n_trunc) {
  Eigen::VectorXcd v(n_trunc + 1);
  const double r = std::abs(beta);
  for (int n = 0; n <= n_trunc; ++n) {
    const double mag = analytic::coherent_amplitude(n, r);
    v(n) = mag * std::polar(1.0, n * std::arg(beta));
  }
  return v;
}

/// (|i a0> + i |-i a0>), normalized on the truncated basis.
inline Eigen::VectorXcd cat_vector(double alpha0, int n_trunc) {
  Eigen::VectorXcd v = coherent_vector({0.0, alpha0}, n_trunc) + cplx(0.0, 1.0) * coherent_vector({0.0, -alpha0}, n_trunc);
  return v / v.norm();
}

class FockDensity {
 public:
  FockDensity() = default;
  FockDensity(Eigen::MatrixXcd rho, double t) : rho_(std::move(rho)), t_(t) {
    if (rho_.rows() != rho_.cols() || rho_.rows() < 1) throw InvalidArgument("FockDensity: matrix must be square");
  }

  static FockDensity pure(const Eigen::VectorXcd& psi, double t = 0.0) { return {psi * psi.adjoint(), t}; }

  static FockDensity coherent(double alpha0, int n_trunc) {
    if (n_trunc < 1) throw InvalidArgument("FockDensity: n_trunc must be >= 1");
    return pure(coherent_vector(alpha0, n_trunc));
  }

  [[nodiscard]] int n_trunc() const { return static_cast<int>(rho_.rows()) - 1; }
  [[nodiscard]] double time() const { return t_; }
  [[nodiscard]] const Eigen::MatrixXcd& matrix() const { return rho_; }
  [[nodiscard]] cplx operator()(int n, int m) const { return rho_(n, m); }

  [[nodiscard]] double trace() const { return rho_.trace().real(); }

  [[nodiscard]] double hermiticity_error() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }

  /// Population in levels n > n_trunc - depth.
  [[nodiscard]] double tail_population(int depth = 5) const {
    double s = 0.0;
    for (int n = std::max(0, n_trunc() - depth + 1); n <= n_trunc(); ++n) s += rho_(n, n).real();
    return s;
  }

  [[nodiscard]] double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho_ + rho_.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  /// <psi| rho |psi>
  [[nodiscard]] double overlap(const Eigen::VectorXcd& psi) const { return (psi.adjoint() * rho_ * psi)(0, 0).real(); }

  /// Throws NumericalFailure when the truncation is too small for this state.
  void check_truncation(double tol = 1e-10) const {
    const double tail = tail_population(5);
    if (tail > tol)
      throw NumericalFailure("Fock truncation inadequate: population " + std::to_string(tail) +
                             " in the top 5 levels of n_trunc=" + std::to_string(n_trunc()));
  }

 private:
  Eigen::MatrixXcd rho_;
  double t_ = 0.0;
};

// ----------------------------------------------------------------------------
// Stripe rates

struct StripeRate {
  int j = 0;
  int k = 0;
  cplx value;
};

/// Complex decay rate of rho_{jk}: (gamma/2)(j+k) + i(kappa/2)[(j^2-j)-(k^2-k)].
inline StripeRate stripe_rate(int j, int k, const ModelParams& params) {
  if (j < 0 || k < 0) throw InvalidArgument("stripe_rate: indices must be >= 0");
  const double jd = j, kd = k;
  return {j, k, {0.5 * params.gamma * (jd + kd), 0.5 * params.kappa * ((jd * jd - jd) - (kd * kd - kd))}};
}

/// Loss coupling of rho_{jk} to rho_{j+1,k+1}.
inline double loss_coupling(int j, int k, const ModelParams& params) {
  return params.gamma * std::sqrt((j + 1.0) * (k + 1.0));
}

// ----------------------------------------------------------------------------
// Analytic stripe solution

/// rho_i(t) = sum_{i' <= i} coeff(i, i') exp(-rate_{i'} t) for one stripe.
///
/// coeff(i, i') = f(i, i') A(i') with f(i, i) = 1 and
/// f(i, i') = prod_{u=i'+1}^{i} g_u / (rate_u - rate_{i'}), where g_u couples
/// element u to element u-1. A is fixed by matching rho(0) row by row.
// The modal sum cancels heavily once the stripe gets long (coefficients
// grow like binomials while the result stays O(1)), so coefficients and
// evaluation run in extended precision.
struct StripeSolution {
  using xcplx = std::complex<long double>;

  int m = 0;
  int n_trunc = 0;
  std::vector<xcplx> rates;   // rate of element i
  std::vector<xcplx> amps;    // A(i')
  std::vector<xcplx> coeff;   // lower triangle, row-major (i, i') -> i*(i+1)/2 + i'
  std::vector<cplx> rho0;     // stripe initial values

  [[nodiscard]] int length() const { return static_cast<int>(rates.size()); }
  [[nodiscard]] cplx c(int i, int ip) const {
    return cplx(coeff[static_cast<std::size_t>(i * (i + 1) / 2 + ip)]);
  }
  [[nodiscard]] cplx amplitude(int i) const { return cplx(amps[static_cast<std::size_t>(i)]); }

  [[nodiscard]] std::vector<cplx> evaluate(double t) const {
    const int L = length();
    std::vector<xcplx> e(static_cast<std::size_t>(L));
    const long double tl = t;
    for (int i = 0; i < L; ++i) {
      const xcplx r = rates[static_cast<std::size_t>(i)];
      // reduce the oscillatory phase before exponentiating
      const long double ph = std::remainder(r.imag() * tl, 2.0L * std::numbers::pi_v<long double>);
      e[static_cast<std::size_t>(i)] = std::exp(-r.real() * tl) * xcplx(std::cos(ph), -std::sin(ph));
    }
    std::vector<cplx> out(static_cast<std::size_t>(L), 0.0);
    for (int i = 0; i < L; ++i) {
      xcplx s = 0.0L;
      const xcplx* row = &coeff[static_cast<std::size_t>(i * (i + 1) / 2)];
      for (int ip = 0; ip <= i; ++ip) s += row[ip] * e[static_cast<std::size_t>(ip)];
      out[static_cast<std::size_t>(i)] = cplx(s);
    }
    return out;
  }
};

namespace detail {
inline int stripe_row(int n_trunc, int i) { return n_trunc - i; }
inline int stripe_col(int n_trunc, int m, int i) { return n_trunc - m - i; }
}  // namespace detail

inline StripeSolution build_stripe_solution(int m, const FockDensity& rho0, const ModelParams& params) {
  const int N = rho0.n_trunc();
  if (m < 0 || m > N) throw InvalidArgument("build_stripe_solution: stripe offset out of range");
  if (params.gamma <= 0.0)
    throw InvalidArgument("build_stripe_solution: gamma = 0 has the single-term closed solution; the recursion is singular");
  const int L = N - m + 1;
  StripeSolution s;
  s.m = m;
  s.n_trunc = N;
  s.rates.resize(static_cast<std::size_t>(L));
  s.rho0.resize(static_cast<std::size_t>(L));
  using xcplx = StripeSolution::xcplx;
  std::vector<long double> g(static_cast<std::size_t>(L), 0.0L);
  for (int i = 0; i < L; ++i) {
    const int j = detail::stripe_row(N, i), k = detail::stripe_col(N, m, i);
    const long double jd = j, kd = k;
    s.rates[static_cast<std::size_t>(i)] =
        xcplx(0.5L * params.gamma * (jd + kd), 0.5L * params.kappa * ((jd * jd - jd) - (kd * kd - kd)));
    s.rho0[static_cast<std::size_t>(i)] = rho0(j, k);
    if (i > 0) g[static_cast<std::size_t>(i)] = params.gamma * std::sqrt((jd + 1.0L) * (kd + 1.0L));
  }
  const double scale = std::max(params.kappa, params.gamma);
  // f(i, i') for all i' <= i, built row by row
  std::vector<xcplx> f(static_cast<std::size_t>(L) * (L + 1) / 2);
  auto F = [&](int i, int ip) -> xcplx& { return f[static_cast<std::size_t>(i * (i + 1) / 2 + ip)]; };
  for (int i = 0; i < L; ++i) {
    F(i, i) = 1.0;
    for (int ip = 0; ip < i; ++ip) {
      const xcplx gap = s.rates[static_cast<std::size_t>(i)] - s.rates[static_cast<std::size_t>(ip)];
      if (std::abs(gap) < 1e-12 * scale)
        throw NumericalFailure("build_stripe_solution: near-degenerate rates in stripe " + std::to_string(m));
      F(i, ip) = F(i - 1, ip) * g[static_cast<std::size_t>(i)] / gap;
    }
  }
  s.amps.resize(static_cast<std::size_t>(L));
  for (int i = 0; i < L; ++i) {
    xcplx acc = xcplx(s.rho0[static_cast<std::size_t>(i)]);
    for (int ip = 0; ip < i; ++ip) acc -= F(i, ip) * s.amps[static_cast<std::size_t>(ip)];
    s.amps[static_cast<std::size_t>(i)] = acc;  // f(i, i) = 1
  }
  s.coeff.resize(f.size());
  for (int i = 0; i < L; ++i)
    for (int ip = 0; ip <= i; ++ip)
      s.coeff[static_cast<std::size_t>(i * (i + 1) / 2 + ip)] = F(i, ip) * s.amps[static_cast<std::size_t>(ip)];
  return s;
}

/// Caches every stripe solution of rho0 and evaluates rho(t) for any t.
/// Stripes above `max_offset` are left at zero (they do not contribute to
/// correlations of order below it).
class StripePropagator {
 public:
  StripePropagator(const FockDensity& rho0, const ModelParams& params, std::optional<int> max_offset = std::nullopt)
      : rho0_(rho0), params_(params) {
    params.validate();
    rho0.check_truncation();
    const int N = rho0.n_trunc();
    max_m_ = std::min(N, max_offset.value_or(N));
    if (params.gamma > 0.0) {
      stripes_.reserve(static_cast<std::size_t>(max_m_) + 1);
      for (int m = 0; m <= max_m_; ++m) stripes_.push_back(build_stripe_solution(m, rho0, params));
    }
  }

  [[nodiscard]] FockDensity at(double t) const {
    const int N = rho0_.n_trunc();
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(N + 1, N + 1);
    for (int m = 0; m <= max_m_; ++m) {
      if (params_.gamma > 0.0) {
        const auto vals = stripes_[static_cast<std::size_t>(m)].evaluate(t);
        for (int i = 0; i < static_cast<int>(vals.size()); ++i)
          out(detail::stripe_row(N, i), detail::stripe_col(N, m, i)) = vals[static_cast<std::size_t>(i)];
      } else {
        for (int j = m; j <= N; ++j) out(j, j - m) = rho0_(j, j - m) * std::exp(-stripe_rate(j, j - m, params_).value * t);
      }
      if (m > 0)
        for (int j = m; j <= N; ++j) out(j - m, j) = std::conj(out(j, j - m));
    }
    return {std::move(out), t};
  }

  [[nodiscard]] const std::vector<StripeSolution>& stripes() const { return stripes_; }

 private:
  FockDensity rho0_;
  ModelParams params_;
  int max_m_ = 0;
  std::vector<StripeSolution> stripes_;
};

inline FockDensity evolve_analytic(const FockDensity& rho0, double t, const ModelParams& params) {
  return StripePropagator(rho0, params).at(t);
}

// ----------------------------------------------------------------------------
// Direct integration (Dormand-Prince 5(4), per stripe)

namespace detail {

struct StripeSystem {
  std::vector<cplx> rates;
  std::vector<double> g;  // g[i] couples element i to element i-1

  void rhs(std::span<const cplx> y, std::span<cplx> dy) const {
    for (std::size_t i = 0; i < y.size(); ++i) {
      dy[i] = -rates[i] * y[i];
      if (i > 0) dy[i] += g[i] * y[i - 1];
    }
  }
};

inline std::vector<cplx> integrate_stripe(const StripeSystem& sys, std::vector<cplx> y, double t_end, double tol) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  (void)c2; (void)c3; (void)c4; (void)c5;
  const std::size_t n = y.size();
  if (n == 0 || t_end == 0.0) return y;
  double omega = 0.0;
  for (const auto& r : sys.rates) omega = std::max(omega, std::abs(r));
  for (const auto& gi : sys.g) omega = std::max(omega, gi);
  double h = std::min(t_end, 0.01 / std::max(omega, 1e-12));
  std::vector<cplx> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), ynew(n);
  sys.rhs(y, k1);
  double t = 0.0;
  while (t < t_end) {
    if (t + h > t_end) h = t_end - t;
    const double h_min = 1e-14 * std::max(1.0, t_end);
    if (h < h_min) throw NumericalFailure("evolve_direct: step size underflow at t=" + std::to_string(t));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * a21 * k1[i];
    sys.rhs(tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    sys.rhs(tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    sys.rhs(tmp, k4);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    sys.rhs(tmp, k5);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    sys.rhs(tmp, k6);
    for (std::size_t i = 0; i < n; ++i)
      ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    sys.rhs(ynew, k7);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const cplx e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      const double sc = tol + tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err = std::max(err, std::abs(e) / sc);
    }
    if (err <= 1.0) {
      t += h;
      y.swap(ynew);
      k1.swap(k7);
    }
    const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h *= fac;
  }
  return y;
}

}  // namespace detail

/// Integrates every stripe directly with adaptive error control at `tol`.
inline FockDensity evolve_direct(const FockDensity& rho0, double t, const ModelParams& params, double tol,
                                 std::optional<int> max_offset = std::nullopt) {
  if (!(tol > 0.0)) throw InvalidArgument("evolve_direct: tol must be > 0");
  params.validate();
  const int N = rho0.n_trunc();
  const int max_m = std::min(N, max_offset.value_or(N));
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(N + 1, N + 1);
  for (int m = 0; m <= max_m; ++m) {
    const int L = N - m + 1;
    detail::StripeSystem sys;
    sys.rates.resize(static_cast<std::size_t>(L));
    sys.g.assign(static_cast<std::size_t>(L), 0.0);
    std::vector<cplx> y(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) {
      const int j = detail::stripe_row(N, i), k = detail::stripe_col(N, m, i);
      sys.rates[static_cast<std::size_t>(i)] = stripe_rate(j, k, params).value;
      if (i > 0) sys.g[static_cast<std::size_t>(i)] = loss_coupling(j, k, params);
      y[static_cast<std::size_t>(i)] = rho0(j, k);
    }
    y = detail::integrate_stripe(sys, std::move(y), t, tol);
    for (int i = 0; i < L; ++i) {
      const int j = detail::stripe_row(N, i), k = detail::stripe_col(N, m, i);
      out(j, k) = y[static_cast<std::size_t>(i)];
      if (m > 0) out(k, j) = std::conj(y[static_cast<std::size_t>(i)]);
    }
  }
  return {std::move(out), rho0.time() + t};
}

// ----------------------------------------------------------------------------
// Expectation values

/// Normally ordered <a^dag^mu a^nu> = sum_j sqrt(j! k!)/(j-nu)! rho_{jk}, k = j - nu + mu.
inline cplx normal_expectation(const FockDensity& rho, int mu, int nu) {
  const int N = rho.n_trunc();
  if (mu < 0 || nu < 0) throw InvalidArgument("expectation: powers must be >= 0");
  if (mu > N || nu > N) throw InvalidArgument("expectation: power exceeds the truncation");
  cplx s = 0.0;
  for (int j = nu; j <= N; ++j) {
    const int k = j - nu + mu;
    if (k > N) break;
    const double lw = 0.5 * (special::log_factorial(j) + special::log_factorial(k)) - special::log_factorial(j - nu);
    s += std::exp(lw) * rho(j, k);
  }
  return s;
}

inline cplx expectation(const FockDensity& rho, const analytic::OrderedMonomial& mono) {
  using analytic::Ordering;
  switch (mono.ordering) {
    case Ordering::normal: return normal_expectation(rho, mono.mu, mono.nu);
    case Ordering::symmetric:
      return analytic::symmetric_expectation(mono.mu, mono.nu,
                                             [&](int a, int b) { return normal_expectation(rho, a, b); });
    case Ordering::antinormal: {
      // a^nu a^dag^mu = sum_g C(nu,g) C(mu,g) g! a^dag^{mu-g} a^{nu-g}
      if (mono.mu > rho.n_trunc() || mono.nu > rho.n_trunc())
        throw InvalidArgument("expectation: power exceeds the truncation");
      cplx s = 0.0;
      for (int g = 0; g <= std::min(mono.mu, mono.nu); ++g) {
        const double c = std::exp(special::log_factorial(mono.mu) + special::log_factorial(mono.nu) -
                                  special::log_factorial(g) - special::log_factorial(mono.mu - g) -
                                  special::log_factorial(mono.nu - g));
        s += c * normal_expectation(rho, mono.mu - g, mono.nu - g);
      }
      return s;
    }
  }
  return 0.0;
}

/// All normally ordered correlations with mu + nu <= order, computed once.
class NormalMoments {
 public:
  NormalMoments(const FockDensity& rho, int order) : order_(order), table_(static_cast<std::size_t>((order + 1) * (order + 1))) {
    for (int mu = 0; mu <= order; ++mu)
      for (int nu = 0; nu + mu <= order; ++nu) table_[index(mu, nu)] = normal_expectation(rho, mu, nu);
  }
  [[nodiscard]] cplx operator()(int mu, int nu) const { return table_[index(mu, nu)]; }
  [[nodiscard]] int order() const { return order_; }

 private:
  [[nodiscard]] std::size_t index(int mu, int nu) const { return static_cast<std::size_t>(mu * (order_ + 1) + nu); }
  int order_;
  std::vector<cplx> table_;
};

namespace detail {
inline double real_checked(cplx v, const char* what) {
  if (std::abs(v.imag()) > 1e-9 * std::max(1.0, std::abs(v.real())))
    throw NumericalFailure(std::string(what) + ": imaginary residue " + std::to_string(v.imag()));
  return v.real();
}
}  // namespace detail

inline double quadrature_moment(const NormalMoments& moments, const analytic::QuadratureSpec& spec) {
  if (spec.n > moments.order()) throw InvalidArgument("quadrature_moment: order exceeds cached moments");
  return detail::real_checked(analytic::quadrature_expectation(spec, moments), "quadrature_moment_fock");
}

/// <X_theta^n> of a Fock density, n <= 12.
inline double quadrature_moment_fock(const FockDensity& rho, const analytic::QuadratureSpec& spec) {
  spec.validate();
  if (spec.n > 12) throw InvalidArgument("quadrature_moment_fock: n must be <= 12");
  return quadrature_moment(NormalMoments(rho, spec.n), spec);
}

}  // namespace kerr::fock
