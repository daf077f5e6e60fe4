#pragma once

// Quadrature moments <X_theta^n>(t) of an initial coherent state from each
// solver, on a common (n, theta, t) request. Times are physical (kappa t is
// the phase-space solver's tau).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kerr/analytic.hpp"
#include "kerr/fock.hpp"
#include "kerr/metrics.hpp"
#include "kerr/params.hpp"
#include "kerr/pde.hpp"
#include "kerr/phasespace.hpp"

namespace kerr::backends {

enum class Backend { analytic, fock, pde, twa };

inline std::string to_string(Backend b) {
  switch (b) {
    case Backend::analytic: return "analytic";
    case Backend::fock: return "fock";
    case Backend::pde: return "pde";
    case Backend::twa: return "twa";
  }
  return "?";
}

struct MomentRequest {
  std::vector<int> orders;
  std::vector<double> thetas;
  std::vector<double> times;

  void validate() const {
    if (orders.empty() || thetas.empty() || times.empty()) throw InvalidArgument("moment request is empty");
    for (int n : orders)
      if (n < 1 || n > 12) throw InvalidArgument("moment orders must lie in 1..12");
    for (double th : thetas) analytic::QuadratureSpec{1, th}.validate();
    if (!std::is_sorted(times.begin(), times.end()) || times.front() < 0.0)
      throw InvalidArgument("sample times must be sorted and >= 0");
  }

  [[nodiscard]] int max_order() const { return *std::max_element(orders.begin(), orders.end()); }
};

using MomentSet = std::map<int, metrics::MomentGrid>;

namespace detail {
inline MomentSet empty_set(const MomentRequest& req) {
  MomentSet out;
  for (int n : req.orders) out.emplace(n, metrics::MomentGrid(n, req.thetas, req.times));
  return out;
}
}  // namespace detail

/// Closed system from the exact normally ordered correlations.
inline MomentSet analytic_moments(const ModelParams& params, const MomentRequest& req) {
  req.validate();
  if (params.gamma != 0.0) throw InvalidArgument("analytic backend covers the closed system only");
  auto out = detail::empty_set(req);
  for (auto& [n, grid] : out)
    for (std::size_t i = 0; i < req.thetas.size(); ++i)
      for (std::size_t j = 0; j < req.times.size(); ++j)
        grid.at(i, j) = analytic::closed_quadrature_moment({n, req.thetas[i]}, req.times[j], params);
  return out;
}

enum class FockMethod { analytic, direct };

/// Truncated Fock evolution of |alpha0>.
inline MomentSet fock_moments(const ModelParams& params, const MomentRequest& req, std::optional<int> n_trunc = std::nullopt,
                              FockMethod method = FockMethod::analytic, double tol = 1e-12) {
  req.validate();
  const int N = n_trunc.value_or(fock::default_truncation(params.alpha0));
  const auto rho0 = fock::FockDensity::coherent(params.alpha0, N);
  const int order = req.max_order();
  auto out = detail::empty_set(req);
  std::optional<fock::StripePropagator> prop;
  if (method == FockMethod::analytic) prop.emplace(rho0, params, order);
  fock::FockDensity rho = rho0;
  double t_prev = 0.0;
  for (std::size_t j = 0; j < req.times.size(); ++j) {
    if (prop) {
      rho = prop->at(req.times[j]);
    } else if (req.times[j] > t_prev) {
      rho = fock::evolve_direct(rho, req.times[j] - t_prev, params, tol, order);
      t_prev = req.times[j];
    }
    const fock::NormalMoments nm(rho, order);
    for (auto& [n, grid] : out)
      for (std::size_t i = 0; i < req.thetas.size(); ++i) grid.at(i, j) = fock::quadrature_moment(nm, {n, req.thetas[i]});
  }
  return out;
}

/// Grid geometry for the phase-space solver.
struct Grid {
  double dr = 0.0;
  std::optional<double> r_max;

  [[nodiscard]] int points(double alpha0) const {
    return phasespace::points_for(r_max.value_or(phasespace::default_r_max(alpha0)), dr);
  }
};

inline phasespace::FourierRadialField initial_field(const ModelParams& params, const Grid& grid, int k_max) {
  return phasespace::init_coherent(params, k_max, grid.points(params.alpha0), grid.dr);
}

/// Phase-space solver (full or twa mode per cfg).
inline MomentSet pde_moments(const ModelParams& params, const MomentRequest& req, const pde::SolverConfig& cfg,
                             const Grid& grid, pde::StepStats* stats = nullptr) {
  req.validate();
  const int order = req.max_order();
  const auto field = initial_field(params, grid, cfg.k_max);
  std::vector<double> taus;
  taus.reserve(req.times.size());
  for (double t : req.times) taus.push_back(params.kappa * t);
  const auto rms = pde::evolve_moments(field, cfg, taus, order, stats);
  auto out = detail::empty_set(req);
  for (auto& [n, grid_n] : out)
    for (std::size_t i = 0; i < req.thetas.size(); ++i)
      for (std::size_t j = 0; j < req.times.size(); ++j)
        grid_n.at(i, j) = phasespace::quadrature_moment_field(rms[j], {n, req.thetas[i]}, field.k_max());
  return out;
}

/// Semiclassical moments: characteristics for the closed system, the
/// phase-space solver in twa mode otherwise.
inline MomentSet twa_moments(const ModelParams& params, const MomentRequest& req, const pde::SolverConfig& cfg,
                             const Grid& grid, pde::StepStats* stats = nullptr) {
  req.validate();
  if (params.gamma > 0.0) {
    pde::SolverConfig c = cfg;
    c.mode = pde::Mode::twa;
    return pde_moments(params, req, c, grid, stats);
  }
  auto out = detail::empty_set(req);
  const double tau_max = params.kappa * req.times.back();
  for (auto& [n, g] : out) {
    const pde::ClosedTwaMoments twa(params, n, tau_max);
    for (std::size_t i = 0; i < req.thetas.size(); ++i)
      for (std::size_t j = 0; j < req.times.size(); ++j) g.at(i, j) = twa(req.thetas[i], params.kappa * req.times[j]);
  }
  return out;
}

/// Exact moments from the cheapest exact backend: closed form when gamma = 0,
/// Fock otherwise.
inline MomentSet exact_moments(const ModelParams& params, const MomentRequest& req) {
  return params.gamma == 0.0 ? analytic_moments(params, req) : fock_moments(params, req);
}

}  // namespace kerr::backends
