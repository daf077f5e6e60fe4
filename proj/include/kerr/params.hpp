#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace kerr {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;

/// Raised for violated preconditions and invalid inputs.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure cannot deliver its contract
/// (step-size underflow, truncation inadequacy, singular solve...).
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Physical constants of a single lossy Kerr mode.
//
// kappa is the nonlinear rate and gamma the single-photon loss rate, both
// in inverse time units. alpha0 is the real amplitude of the initial
// coherent state. kappa = 0 is admitted for the pure-loss oracles; the
// phase-space solver works in units of kappa and requires kappa > 0.
struct ModelParams {
  double kappa = 1.0;
  double gamma = 0.0;
  double alpha0 = 0.0;

  void validate() const {
    if (!(kappa >= 0.0) || !std::isfinite(kappa))
      throw InvalidArgument("kappa must be finite and >= 0");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
      throw InvalidArgument("gamma must be finite and >= 0");
    if (!(alpha0 >= 0.0) || !std::isfinite(alpha0))
      throw InvalidArgument("alpha0 must be finite and >= 0");
  }

  /// Dimensionless loss rate gamma/kappa.
  [[nodiscard]] double xi() const {
    if (!(kappa > 0.0)) throw InvalidArgument("xi = gamma/kappa needs kappa > 0");
    return gamma / kappa;
  }

  [[nodiscard]] double mean_photons() const { return alpha0 * alpha0; }

  static ModelParams make(double kappa, double gamma, double alpha0) {
    ModelParams p{kappa, gamma, alpha0};
    p.validate();
    return p;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

}  // namespace kerr
