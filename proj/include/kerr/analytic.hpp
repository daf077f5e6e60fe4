#pragma once

// Closed-form results for the Kerr oscillator: the exact closed-system
// state, kitten-state coefficients, ordered correlations, quadrature
// marginals, recurrence bookkeeping and the freely decaying cat. Everything
// here is a pure function and serves as an oracle for the numerical
// backends.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kerr/params.hpp"
#include "kerr/special.hpp"

namespace kerr::analytic {

/// Phase e^{-i kappa t n(n-1)/2} carried by the Fock amplitude c_n.
inline cplx closed_state_phase(int n, double t, const ModelParams& params) {
  if (n < 0) throw InvalidArgument("closed_state_phase: n must be >= 0");
  const double nd = n;
  // reduce the quadratic phase modulo 2 pi before exponentiating
  const double phase = std::remainder(0.5 * params.kappa * t * nd * (nd - 1.0), 2.0 * pi);
  return std::polar(1.0, -phase);
}

/// Coherent-state Fock amplitude e^{-|a|^2/2} a^n / sqrt(n!) for real a >= 0.
inline double coherent_amplitude(int n, double alpha) {
  if (alpha == 0.0) return n == 0 ? 1.0 : 0.0;
  const double nd = n;
  return std::exp(-0.5 * alpha * alpha + nd * std::log(alpha) - 0.5 * special::log_factorial(n));
}

/// Poisson tail sum_{n > n_max} e^{-a^2} a^{2n} / n!.
inline double poisson_tail(double alpha, int n_max) {
  const double lam = alpha * alpha;
  if (lam == 0.0) return 0.0;
  double tail = 0.0;
  for (int n = n_max + 1;; ++n) {
    const double term = std::exp(-lam + n * std::log(lam) - special::log_factorial(n));
    tail += term;
    if (n > lam && term < 1e-18 * std::max(tail, 1e-300)) break;
    if (n > n_max + 100000) break;
  }
  return tail;
}

/// Smallest n_max whose Poisson tail is below `tail`.
inline int cutoff_for_tail(double alpha, double tail = 1e-12) {
  int n = static_cast<int>(std::floor(alpha * alpha));
  // scan upward from the mean; the tail is monotone in n_max
  n = std::max(0, n);
  while (poisson_tail(alpha, n) >= tail) ++n;
  return n;
}

// ----------------------------------------------------------------------------
// Kitten states

struct KittenState {
  int M = 1;
  int N = 1;
  double alpha0 = 0.0;
  std::vector<cplx> f;  // length 2N; component k sits at alpha0 e^{i k pi / N}

  [[nodiscard]] std::vector<int> nonzero_indices(double tol = 1e-12) const {
    std::vector<int> idx;
    for (int k = 0; k < static_cast<int>(f.size()); ++k)
      if (std::abs(f[static_cast<std::size_t>(k)]) > tol) idx.push_back(k);
    return idx;
  }
};

/// Discrete-Fourier coefficients of the state formed at kappa t = 2 pi M / N.
inline KittenState kitten_coefficients(int M, int N, double alpha0 = 0.0) {
  if (M < 1 || N < 1) throw InvalidArgument("kitten_coefficients: M and N must be positive");
  if (std::gcd(M, N) != 1)
    throw InvalidArgument("kitten_coefficients: M=" + std::to_string(M) + " and N=" + std::to_string(N) +
                          " are not coprime");
  KittenState ks{M, N, alpha0, std::vector<cplx>(static_cast<std::size_t>(2 * N))};
  const long long twoN = 2LL * N;
  for (int k = 0; k < 2 * N; ++k) {
    cplx sum = 0.0;
    for (long long n = 0; n < twoN; ++n) {
      // exponent -(pi/N)[n k - M n(n-1)], reduced modulo 2N in integers
      long long e = (n * k - static_cast<long long>(M) * n * (n - 1)) % twoN;
      if (e < 0) e += twoN;
      sum += std::polar(1.0, -pi * static_cast<double>(e) / N);
    }
    ks.f[static_cast<std::size_t>(k)] = sum / static_cast<double>(twoN);
  }
  return ks;
}

// ----------------------------------------------------------------------------
// Ordered correlations

/// <a^dag^mu a^nu>(t) for the closed system started in |alpha0>.
inline cplx normal_expectation(int mu, int nu, double t, const ModelParams& params) {
  if (mu < 0 || nu < 0) throw InvalidArgument("normal_expectation: powers must be >= 0");
  const double a = params.alpha0;
  const double n2 = a * a;
  const double kt = params.kappa * t;
  const int d = mu - nu;
  const double mag_pow = (mu + nu == 0) ? 1.0 : std::pow(a, mu + nu);
  const double quad = 0.5 * kt * (double(mu) * (mu - 1) - double(nu) * (nu - 1));
  const double damp = -n2 * (1.0 - std::cos(d * kt));
  const double rot = n2 * std::sin(d * kt);
  return mag_pow * std::exp(damp) * std::polar(1.0, std::remainder(quad + rot, 2.0 * pi));
}

enum class Ordering { normal, symmetric, antinormal };

struct OrderedMonomial {
  int mu = 0;
  int nu = 0;
  Ordering ordering = Ordering::normal;

  friend bool operator==(const OrderedMonomial&, const OrderedMonomial&) = default;
};

struct NormalTerm {
  double coeff = 0.0;
  int mu = 0;
  int nu = 0;
};

using NormalExpansion = std::vector<NormalTerm>;

/// Weyl-symmetrized {a^dag^mu a^nu} as a positive combination of normally
/// ordered monomials; contractions remove matched ladder pairs.
inline NormalExpansion sym_to_normal(const OrderedMonomial& mono) {
  if (mono.ordering != Ordering::symmetric)
    throw InvalidArgument("sym_to_normal: monomial must be symmetrically ordered");
  if (mono.mu < 0 || mono.nu < 0) throw InvalidArgument("sym_to_normal: negative power");
  NormalExpansion out;
  const int g_max = std::min(mono.mu, mono.nu);
  for (int g = 0; g <= g_max; ++g) {
    const double lc = special::log_factorial(mono.mu) + special::log_factorial(mono.nu) -
                      special::log_factorial(g) - special::log_factorial(mono.mu - g) -
                      special::log_factorial(mono.nu - g) - g * std::log(2.0);
    out.push_back({std::exp(lc), mono.mu - g, mono.nu - g});
  }
  return out;
}

struct QuadratureSpec {
  int n = 1;
  double theta = 0.0;

  void validate() const {
    if (n < 1) throw InvalidArgument("quadrature order n must be >= 1");
    if (!(theta >= 0.0 && theta < 2.0 * pi))
      throw InvalidArgument("quadrature angle must lie in [0, 2pi)");
  }
};

struct SymTerm {
  cplx coeff;
  OrderedMonomial mono;
};

/// X_theta^n = 2^{-n/2} (e^{-i theta} a + e^{i theta} a^dag)^n expanded over
/// Weyl-symmetrized monomials {a^dag^mu a^{n-mu}}.
inline std::vector<SymTerm> quadrature_decomposition(const QuadratureSpec& spec) {
  spec.validate();
  std::vector<SymTerm> out;
  const double norm = std::pow(2.0, -0.5 * spec.n);
  for (int mu = 0; mu <= spec.n; ++mu) {
    const int nu = spec.n - mu;
    const cplx c = norm * special::binomial(spec.n, mu) * std::polar(1.0, spec.theta * (mu - nu));
    out.push_back({c, {mu, nu, Ordering::symmetric}});
  }
  return out;
}

/// Symmetrized expectation assembled from any normally ordered evaluator.
template <class NormalEval>
cplx symmetric_expectation(int mu, int nu, NormalEval&& normal) {
  cplx s = 0.0;
  for (const auto& t : sym_to_normal({mu, nu, Ordering::symmetric})) s += t.coeff * normal(t.mu, t.nu);
  return s;
}

/// <X_theta^n> assembled from any normally ordered evaluator.
template <class NormalEval>
cplx quadrature_expectation(const QuadratureSpec& spec, NormalEval&& normal) {
  cplx s = 0.0;
  for (const auto& term : quadrature_decomposition(spec))
    s += term.coeff * symmetric_expectation(term.mono.mu, term.mono.nu, normal);
  return s;
}

/// Closed-system <X_theta^n>(t) from the exact normally ordered correlations.
inline double closed_quadrature_moment(const QuadratureSpec& spec, double t, const ModelParams& params) {
  return quadrature_expectation(spec, [&](int mu, int nu) { return normal_expectation(mu, nu, t, params); })
      .real();
}

// ----------------------------------------------------------------------------
// Quadrature marginal

/// Probability density of the homodyne outcome x for X_theta, closed system.
inline double marginal_probability(double x, const QuadratureSpec& spec, double t, const ModelParams& params,
                                   int n_max) {
  if (params.gamma != 0.0) throw InvalidArgument("marginal_probability: closed system only (gamma = 0)");
  const double tail = poisson_tail(params.alpha0, n_max);
  if (tail >= 1e-12)
    throw InvalidArgument("marginal_probability: n_max=" + std::to_string(n_max) + " leaves Poisson tail " +
                          std::to_string(tail) + " >= 1e-12; need n_max >= " +
                          std::to_string(cutoff_for_tail(params.alpha0)));
  const auto u = special::hermite_functions(x, n_max);
  cplx amp = 0.0;
  for (int n = 0; n <= n_max; ++n) {
    const double c = coherent_amplitude(n, params.alpha0);
    if (c == 0.0) continue;
    const double theta_phase = std::remainder(spec.theta * n, 2.0 * pi);
    amp += c * closed_state_phase(n, t, params) * std::polar(1.0, -theta_phase) * u[static_cast<std::size_t>(n)];
  }
  return std::norm(amp);
}

inline double marginal_probability(double x, const QuadratureSpec& spec, double t, const ModelParams& params) {
  return marginal_probability(x, spec, t, params, cutoff_for_tail(params.alpha0));
}

// ----------------------------------------------------------------------------
// Recurrences

/// Period 2 pi / (|mu - nu| kappa) of |<a^dag^mu a^nu>|; none for mu == nu.
inline std::optional<double> recurrence_period(int mu, int nu, const ModelParams& params) {
  if (mu == nu || params.kappa <= 0.0) return std::nullopt;
  return 2.0 * pi / (std::abs(mu - nu) * params.kappa);
}

struct Recurrence {
  double t = 0.0;
  std::vector<std::pair<int, int>> witnesses;  // (M, N) pairs landing on t
};

/// Times kappa t = 2 pi M / N <= kappa t_max with N <= n and N = n (mod 2),
/// merged by value; every admissible (M, N) is kept as a witness.
inline std::vector<Recurrence> recurrence_times(int n, const ModelParams& params, double t_max) {
  if (n < 1) throw InvalidArgument("recurrence_times: n must be >= 1");
  if (!(t_max > 0.0)) throw InvalidArgument("recurrence_times: t_max must be > 0");
  if (!(params.kappa > 0.0)) throw InvalidArgument("recurrence_times: kappa must be > 0");
  struct Hit {
    int M, N;
  };
  std::vector<Hit> hits;
  const double kt_max = params.kappa * t_max;
  for (int N = (n % 2 == 0 ? 2 : 1); N <= n; N += 2) {
    for (int M = 1;; ++M) {
      const double kt = 2.0 * pi * M / N;
      if (kt > kt_max * (1.0 + 1e-12)) break;
      hits.push_back({M, N});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    const long long l = 1LL * a.M * b.N, r = 1LL * b.M * a.N;
    return l != r ? l < r : a.N < b.N;
  });
  std::vector<Recurrence> out;
  for (const auto& h : hits) {
    const double t = 2.0 * pi * h.M / (h.N * params.kappa);
    if (!out.empty()) {
      const auto& w = out.back().witnesses.front();
      if (1LL * w.first * h.N == 1LL * h.M * w.second) {
        out.back().witnesses.emplace_back(h.M, h.N);
        continue;
      }
    }
    out.push_back({t, {{h.M, h.N}}});
  }
  return out;
}

// ----------------------------------------------------------------------------
// Kitten-state expectation cases

enum class KittenCase { number_power, aligned, suppressed };

inline std::string to_string(KittenCase c) {
  switch (c) {
    case KittenCase::number_power: return "number-power";
    case KittenCase::aligned: return "aligned";
    case KittenCase::suppressed: return "suppressed";
  }
  return "?";
}

inline KittenCase kitten_expectation_case(int mu, int nu, int M, int N) {
  if (M < 1 || N < 1 || std::gcd(M, N) != 1)
    throw InvalidArgument("kitten_expectation_case: (M, N) must be positive and coprime");
  if (mu == nu) return KittenCase::number_power;
  if ((mu - nu) % N == 0) return KittenCase::aligned;
  return KittenCase::suppressed;
}

/// -1 for N even and M odd (rotated kitten lattice), +1 otherwise.
inline int kitten_sign(int M, int N) { return (N % 2 == 0 && M % 2 == 1) ? -1 : 1; }

/// Leading-order value of <a^dag^mu a^nu> in the (M, N) kitten state; the
/// suppressed case returns 0 (its true value is O(<a0|a0 e^{2 pi i/N}>)).
inline cplx kitten_expectation_value(int mu, int nu, int M, int N, double alpha0) {
  const double n_mean = alpha0 * alpha0;
  switch (kitten_expectation_case(mu, nu, M, N)) {
    case KittenCase::number_power: return std::pow(n_mean, mu);
    case KittenCase::aligned: {
      const int p = (mu - nu) / N;
      const double sign = (std::abs(p) % 2 == 1) ? kitten_sign(M, N) : 1.0;
      return sign * std::pow(alpha0, mu - nu) * std::pow(n_mean, nu);
    }
    case KittenCase::suppressed: return 0.0;
  }
  return 0.0;
}

// ----------------------------------------------------------------------------
// Freely decaying cat

enum class FringeWeight { exact_overlap, short_time };

/// Fringe weight of a +-X0 cat after pure loss for time t.
inline double cat_fringe_weight(double t, double x0, double gamma, FringeWeight mode = FringeWeight::exact_overlap) {
  const double gt = gamma * t;
  return mode == FringeWeight::exact_overlap ? std::exp(-x0 * x0 * (-std::expm1(-gt))) : std::exp(-x0 * x0 * gt);
}

inline double vacuum_wigner(double x, double p) { return std::exp(-x * x - p * p) / pi; }

/// Wigner function W(X, P) of the cat (|i a0> + i|-i a0>)/sqrt2, X0 = sqrt2 a0,
/// after free decay under photon loss at rate gamma.
inline double decaying_cat_wigner(double x, double p, double t, double x0, double gamma,
                                  FringeWeight mode = FringeWeight::exact_overlap) {
  const double xt = x0 * std::exp(-0.5 * gamma * t);
  return 0.5 * vacuum_wigner(x, p - xt) + 0.5 * vacuum_wigner(x, p + xt) +
         cat_fringe_weight(t, x0, gamma, mode) * std::sin(2.0 * x * xt) * vacuum_wigner(x, p);
}

}  // namespace kerr::analytic
