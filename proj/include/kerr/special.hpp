#pragma once

// Special functions shared by the analytic, Fock and phase-space modules.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "kerr/params.hpp"

namespace kerr::special {

inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  return std::round(std::exp(log_factorial(n) - log_factorial(k) - log_factorial(n - k)));
}

/// Normalized Hermite functions u_0..u_{n_max}(x) via the stable three-term
/// recurrence on u_n (never forms H_n, which overflows past n ~ 170).
inline std::vector<double> hermite_functions(double x, int n_max) {
  std::vector<double> u(static_cast<std::size_t>(n_max) + 1, 0.0);
  u[0] = std::pow(pi, -0.25) * std::exp(-0.5 * x * x);
  if (n_max >= 1) u[1] = std::sqrt(2.0) * x * u[0];
  for (int n = 1; n < n_max; ++n) {
    const double nd = n;
    u[n + 1] = x * std::sqrt(2.0 / (nd + 1.0)) * u[n] - std::sqrt(nd / (nd + 1.0)) * u[n - 1];
  }
  return u;
}

/// Exponentially scaled modified Bessel functions e^{-x} I_k(x) for
/// k = 0..k_max and x >= 0.
///
/// Miller's downward recurrence I_{k-1} = (2k/x) I_k + I_{k+1}, normalized by
/// the generating-function identity e^{x} = I_0 + 2 sum_k I_k. Never forms
/// e^{x} or an unscaled I_k, so it cannot overflow.
inline std::vector<double> bessel_i_scaled(double x, int k_max) {
  std::vector<double> out(static_cast<std::size_t>(k_max) + 1, 0.0);
  if (x < 0.0) throw InvalidArgument("bessel_i_scaled: x must be >= 0");
  if (x == 0.0) {
    out[0] = 1.0;
    return out;
  }
  const double scale = std::max<double>(k_max, x);
  const int start = static_cast<int>(std::ceil(scale + 12.0 * std::sqrt(scale + 1.0) + 40.0));
  double next = 0.0;   // J_{k+1}
  double cur = 1e-300; // J_k
  double sum = 0.0;    // running 2 * sum_{j>k} J_j
  std::vector<double> keep(out.size(), 0.0);
  for (int k = start; k >= 1; --k) {
    const double prev = (2.0 * k / x) * cur + next;  // J_{k-1}
    sum += 2.0 * cur;
    if (k <= k_max) keep[static_cast<std::size_t>(k)] = cur;
    next = cur;
    cur = prev;
    if (cur > 1e250) {
      const double s = 1e-250;
      cur *= s;
      next *= s;
      sum *= s;
      for (auto& v : keep) v *= s;
    }
  }
  keep[0] = cur;
  sum += cur;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = keep[k] / sum;
  return out;
}

/// Composite Gauss-Legendre rule on [a, b] with `panels` equal panels of
/// 10 nodes each. Returns (nodes, weights).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline QuadratureRule composite_gauss_legendre(double a, double b, int panels) {
  // 10-point Gauss-Legendre on [-1, 1]
  static constexpr double x10[5] = {0.1488743389816312108848260, 0.4333953941292471907992659,
                                    0.6794095682990244062343274, 0.8650633666889845107320967,
                                    0.9739065285171717200779640};
  static constexpr double w10[5] = {0.2955242247147528701738930, 0.2692667193099963550912269,
                                    0.2190863625159820439955349, 0.1494513491505805931457763,
                                    0.0666713443086881375935688};
  QuadratureRule rule;
  rule.nodes.reserve(static_cast<std::size_t>(panels) * 10);
  rule.weights.reserve(rule.nodes.capacity());
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (int i = 0; i < 5; ++i) {
      for (double s : {-1.0, 1.0}) {
        rule.nodes.push_back(mid + s * 0.5 * h * x10[i]);
        rule.weights.push_back(0.5 * h * w10[i]);
      }
    }
  }
  return rule;
}

/// Composite trapezoid of uniformly sampled values with spacing h.
inline double trapezoid(std::span<const double> y, double h) {
  if (y.size() < 2) return 0.0;
  double s = 0.5 * (y.front() + y.back());
  for (std::size_t i = 1; i + 1 < y.size(); ++i) s += y[i];
  return s * h;
}

/// Trapezoid over a (possibly nonuniform) sorted abscissa.
inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

}  // namespace kerr::special
