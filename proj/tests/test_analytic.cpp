#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "kerr/analytic.hpp"
#include "oracles.hpp"

using namespace kerr;
using namespace kerr::analytic;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("closed_state_phase trivial values", "[analytic]") {
  const auto p = ModelParams::make(1.0, 0.0, 2.0);
  CHECK(std::abs(closed_state_phase(0, 1.234, p) - 1.0) < 1e-15);
  CHECK(std::abs(closed_state_phase(1, 5.678, p) - 1.0) < 1e-15);
  CHECK(std::abs(closed_state_phase(3, 2.0 * pi, p) - 1.0) < 1e-12);
  CHECK_THROWS_AS(closed_state_phase(-1, 0.0, p), InvalidArgument);
}

TEST_CASE("kitten coefficients: count and modulus for all coprime N <= 12", "[analytic][kitten]") {
  for (int N = 1; N <= 12; ++N)
    for (int M = 1; M <= 2 * N; ++M) {
      if (std::gcd(M, N) != 1) continue;
      const auto ks = kitten_coefficients(M, N);
      const auto nz = ks.nonzero_indices(1e-6);
      INFO("M=" << M << " N=" << N);
      REQUIRE(static_cast<int>(nz.size()) == N);
      for (int k : nz) CHECK_THAT(std::norm(ks.f[static_cast<std::size_t>(k)]), WithinAbs(1.0 / N, 1e-12));
      for (int k = 0; k < 2 * N; ++k)
        if (std::find(nz.begin(), nz.end(), k) == nz.end()) CHECK(std::abs(ks.f[static_cast<std::size_t>(k)]) < 1e-12);
    }
}

TEST_CASE("kitten coefficient examples", "[analytic][kitten]") {
  CHECK(kitten_coefficients(1, 2).nonzero_indices().size() == 2);
  const auto one = kitten_coefficients(1, 1);
  REQUIRE(one.nonzero_indices().size() == 1);
  CHECK_THAT(std::abs(one.f[static_cast<std::size_t>(one.nonzero_indices()[0])]), WithinAbs(1.0, 1e-12));
  const auto k29 = kitten_coefficients(2, 9);
  CHECK(k29.nonzero_indices().size() == 9);
  CHECK_THROWS_AS(kitten_coefficients(2, 4), InvalidArgument);
  CHECK_THROWS_AS(kitten_coefficients(3, 6), InvalidArgument);
}

TEST_CASE("kitten superposition equals the evolved Fock state", "[analytic][kitten]") {
  // oracle: c_n e^{-i t n(n-1)/2} at kappa t = 2 pi M / N. With this sign of the Kerr phase the
  // literal f_k describe the mirror image: psi = sum_k conj(f_k) |alpha0 e^{-i k pi / N}>
  const double a0 = 2.0;
  const int D = 80;
  for (auto [M, N] : {std::pair{1, 2}, {1, 3}, {2, 9}, {1, 6}, {5, 12}}) {
    const auto ks = kitten_coefficients(M, N, a0);
    const double t = 2.0 * pi * M / N;
    Eigen::VectorXcd evolved(D + 1), kitten = Eigen::VectorXcd::Zero(D + 1);
    for (int n = 0; n <= D; ++n)
      evolved(n) = oracle::coherent_amp(n, a0) * std::exp(cplx(0.0, -0.5 * t * n * (n - 1.0)));
    for (int k = 0; k < 2 * N; ++k)
      kitten += std::conj(ks.f[static_cast<std::size_t>(k)]) * oracle::coherent_vec(std::polar(a0, -k * pi / N), D);
    INFO("M=" << M << " N=" << N);
    CHECK(std::abs(kitten.dot(evolved)) > 1.0 - 1e-10);
  }
}

TEST_CASE("normal_expectation examples", "[analytic]") {
  const auto p = ModelParams::make(1.0, 0.0, 2.0);
  CHECK_THAT(normal_expectation(1, 1, 0.77, p).real(), WithinAbs(4.0, 1e-12));
  CHECK_THAT(normal_expectation(1, 1, 0.77, p).imag(), WithinAbs(0.0, 1e-12));
  CHECK_THAT(normal_expectation(0, 1, 0.0, p).real(), WithinAbs(2.0, 1e-14));
  const cplx v = normal_expectation(0, 1, pi, p);
  CHECK_THAT(v.real(), WithinRel(2.0 * std::exp(-8.0), 1e-12));
  CHECK(std::abs(v.imag()) < 1e-15);
}

TEST_CASE("normal_expectation agrees with brute-force Fock evolution", "[analytic]") {
  const double a0 = 1.5;
  const auto p = ModelParams::make(1.0, 0.0, a0);
  const int D = 70;
  for (double t : {0.3, 1.1, 2.9}) {
    Eigen::VectorXcd psi(D + 1);
    for (int n = 0; n <= D; ++n) psi(n) = oracle::coherent_amp(n, a0) * std::exp(cplx(0.0, -0.5 * t * n * (n - 1.0)));
    const Eigen::MatrixXcd a = oracle::annihilation(D);
    for (int mu = 0; mu <= 3; ++mu)
      for (int nu = 0; nu <= 3; ++nu) {
        const Eigen::MatrixXcd op = oracle::mpow(a.adjoint(), mu) * oracle::mpow(a, nu);
        const cplx ref = psi.dot(op * psi);
        CHECK(std::abs(normal_expectation(mu, nu, t, p) - ref) < 1e-10);
      }
  }
}

TEST_CASE("normal_expectation magnitude is periodic in 2 pi / |mu - nu|", "[analytic]") {
  const auto p = ModelParams::make(1.3, 0.0, 1.7);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (auto [mu, nu] : {std::pair{0, 1}, {3, 1}, {0, 6}, {5, 2}}) {
    const double T = *recurrence_period(mu, nu, p);
    for (int i = 0; i < 100; ++i) {
      const double t = u(rng);
      CHECK_THAT(std::abs(normal_expectation(mu, nu, t + T, p)), WithinAbs(std::abs(normal_expectation(mu, nu, t, p)), 1e-12));
    }
  }
}

TEST_CASE("sym_to_normal examples", "[analytic][ordering]") {
  auto e = sym_to_normal({1, 0, Ordering::symmetric});
  REQUIRE(e.size() == 1);
  CHECK(e[0].coeff == 1.0);
  CHECK((e[0].mu == 1 && e[0].nu == 0));

  e = sym_to_normal({1, 1, Ordering::symmetric});
  REQUIRE(e.size() == 2);
  CHECK_THAT(e[0].coeff, WithinAbs(1.0, 1e-15));
  CHECK_THAT(e[1].coeff, WithinAbs(0.5, 1e-15));
  CHECK((e[1].mu == 0 && e[1].nu == 0));

  e = sym_to_normal({2, 2, Ordering::symmetric});
  REQUIRE(e.size() == 3);
  CHECK_THAT(e[0].coeff, WithinAbs(1.0, 1e-14));
  CHECK_THAT(e[1].coeff, WithinAbs(2.0, 1e-14));
  CHECK_THAT(e[2].coeff, WithinAbs(0.5, 1e-14));
  CHECK_THROWS_AS(sym_to_normal({1, 1, Ordering::normal}), InvalidArgument);
}

TEST_CASE("sym_to_normal matches brute-force symmetrization", "[analytic][ordering]") {
  // oracle: average of all distinct orderings of mu a^dag and nu a on a truncated basis
  const int D = 30;
  const Eigen::MatrixXcd a = oracle::annihilation(D);
  const Eigen::MatrixXcd ad = a.adjoint();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int mu = 0; mu <= 4; ++mu)
    for (int nu = 0; nu <= 4; ++nu) {
      const Eigen::MatrixXcd sym = oracle::symmetrized(ad, a, mu, nu);
      Eigen::MatrixXcd expanded = Eigen::MatrixXcd::Zero(D + 1, D + 1);
      for (const auto& t : sym_to_normal({mu, nu, Ordering::symmetric}))
        expanded += t.coeff * oracle::mpow(ad, t.mu) * oracle::mpow(a, t.nu);
      for (const auto& t : sym_to_normal({mu, nu, Ordering::symmetric})) CHECK(t.mu - t.nu == mu - nu);
      // evaluate on random coherent states well inside the truncation
      for (int s = 0; s < 3; ++s) {
        const Eigen::VectorXcd psi = oracle::coherent_vec({u(rng), u(rng)}, D);
        INFO("mu=" << mu << " nu=" << nu);
        CHECK(std::abs(psi.dot(sym * psi) - psi.dot(expanded * psi)) < 1e-10);
      }
    }
}

TEST_CASE("quadrature_decomposition structure", "[analytic][ordering]") {
  auto d = quadrature_decomposition({1, 0.0});
  REQUIRE(d.size() == 2);
  for (const auto& t : d) CHECK_THAT(std::abs(t.coeff), WithinAbs(1.0 / std::sqrt(2.0), 1e-15));
  for (int n = 1; n <= 12; ++n)
    for (const auto& t : quadrature_decomposition({n, 0.7})) {
      CHECK(std::abs(t.mono.mu - t.mono.nu) <= n);
      CHECK(((t.mono.mu - t.mono.nu) - n) % 2 == 0);
    }
  for (const auto& t : quadrature_decomposition({2, 0.0})) CHECK(std::abs(t.mono.mu - t.mono.nu) % 2 == 0);
}

TEST_CASE("quadrature moments at t = 0 are coherent-state Gaussian moments", "[analytic][ordering]") {
  for (double a0 : {0.0, 0.8, 2.0})
    for (double th : {0.0, 0.4, 2.5, 5.9}) {
      const auto p = ModelParams::make(1.0, 0.0, a0);
      for (int n = 1; n <= 8; ++n) {
        const double ref = oracle::gaussian_moment(std::sqrt(2.0) * a0 * std::cos(th), 0.5, n);
        CHECK_THAT(closed_quadrature_moment({n, th}, 0.0, p), WithinAbs(ref, 1e-10 * std::max(1.0, std::abs(ref))));
      }
    }
}

TEST_CASE("quadrature moment n = 6 against a brute-force Fock matrix", "[analytic][ordering]") {
  const double a0 = 2.0;
  const int D = 90;
  const Eigen::MatrixXcd a = oracle::annihilation(D);
  const Eigen::VectorXcd psi = oracle::coherent_vec(a0, D);
  const auto p = ModelParams::make(1.0, 0.0, a0);
  for (double th : {0.0, 1.0, 3.3}) {
    const Eigen::MatrixXcd X = (std::polar(1.0, -th) * a + std::polar(1.0, th) * a.adjoint()) / std::sqrt(2.0);
    const double ref = psi.dot(oracle::mpow(X, 6) * psi).real();
    CHECK_THAT(closed_quadrature_moment({6, th}, 0.0, p), WithinRel(ref, 1e-10));
  }
}

TEST_CASE("marginal at t = 0 is the displaced Gaussian", "[analytic][marginal]") {
  const auto p = ModelParams::make(1.0, 0.0, 1.7);
  const int n_max = cutoff_for_tail(p.alpha0, 1e-26);
  for (double th : {0.0, 0.9, 4.0})
    for (double x : {-1.0, 0.3, 2.4, 3.1}) {
      const double c = std::sqrt(2.0) * p.alpha0 * std::cos(th);
      CHECK_THAT(marginal_probability(x, {1, th}, 0.0, p, n_max), WithinAbs(std::exp(-(x - c) * (x - c)) / std::sqrt(pi), 1e-12));
    }
}

TEST_CASE("marginal integrates to one", "[analytic][marginal]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> th(0.0, 2.0 * pi), tt(0.0, 7.0);
  for (double a0 : {0.5, 2.0, 4.0}) {
    const auto p = ModelParams::make(1.0, 0.0, a0);
    const int n_max = cutoff_for_tail(a0);
    for (int i = 0; i < 10; ++i) {
      const QuadratureSpec s{1, th(rng)};
      const double t = tt(rng);
      const double L = std::sqrt(2.0) * a0 + 9.0;
      const double total = oracle::adaptive_simpson([&](double x) { return marginal_probability(x, s, t, p, n_max); }, -L, L, 1e-11);
      CHECK_THAT(total, WithinAbs(1.0, 1e-8));
    }
  }
}

TEST_CASE("marginal of the kappa t = pi cat", "[analytic][marginal]") {
  // oracle: e^{-i pi n(n-1)/2} = A i^n + B (-i)^n with A = (1-i)/2, B = (1+i)/2, so the
  // state is A|i a0> + B|-i a0>: bimodal along P, fringes along X
  const double a0 = 3.0, x0 = std::sqrt(2.0) * a0;
  const auto p = ModelParams::make(1.0, 0.0, a0);
  // pointwise error scales like sqrt(tail); use a deep cutoff
  const int n_max = cutoff_for_tail(a0, 1e-26);
  for (double x : {-4.5, -4.2, -0.3, 0.0, 0.11, 3.9, 4.24}) {
    const double bimodal = 0.5 * (std::exp(-(x - x0) * (x - x0)) + std::exp(-(x + x0) * (x + x0))) / std::sqrt(pi);
    CHECK_THAT(marginal_probability(x, {1, pi / 2}, pi, p, n_max), WithinAbs(bimodal, 1e-7));
    const double fringes = std::exp(-x * x) * (1.0 + std::sin(2.0 * x0 * x)) / std::sqrt(pi);
    CHECK_THAT(marginal_probability(x, {1, 0.0}, pi, p, n_max), WithinAbs(fringes, 1e-7));
  }
}

TEST_CASE("marginal rejects a short Fock cutoff", "[analytic][marginal]") {
  const auto p = ModelParams::make(1.0, 0.0, 3.0);
  CHECK_THROWS_AS(marginal_probability(0.0, {1, 0.0}, 0.0, p, 10), InvalidArgument);
  CHECK_THROWS_AS(marginal_probability(0.0, {1, 0.0}, 0.0, ModelParams::make(1.0, 0.1, 3.0), 80), InvalidArgument);
}

TEST_CASE("recurrence periods and times", "[analytic][recurrence]") {
  const auto p = ModelParams::make(1.0, 0.0, 1.0);
  CHECK_THAT(*recurrence_period(6, 0, p), WithinAbs(pi / 3, 1e-15));
  CHECK_FALSE(recurrence_period(3, 3, p).has_value());
  CHECK_THAT(*recurrence_period(0, 1, p), WithinAbs(2 * pi, 1e-15));

  const auto r6 = recurrence_times(6, p, pi / 2);
  REQUIRE_FALSE(r6.empty());
  CHECK_THAT(r6.front().t, WithinAbs(pi / 3, 1e-14));
  CHECK(r6.front().witnesses.front() == std::pair{1, 6});
  for (const auto& r : recurrence_times(6, p, 2 * pi)) {
    CHECK(std::abs(r.t - 2 * pi / 9) > 1e-6);
    CHECK(std::abs(r.t - 2 * pi / 5) > 1e-6);
  }

  // exhaustive oracle for n = 2 on [0, 2 pi]
  const auto r2 = recurrence_times(2, p, 2 * pi);
  REQUIRE(r2.size() == 2);
  CHECK_THAT(r2[0].t, WithinAbs(pi, 1e-14));
  CHECK(r2[0].witnesses == std::vector<std::pair<int, int>>{{1, 2}});
  CHECK_THAT(r2[1].t, WithinAbs(2 * pi, 1e-14));
  CHECK(r2[1].witnesses == std::vector<std::pair<int, int>>{{2, 2}});

  // n = 6 at 2 pi: witnesses (2,2), (4,4), (6,6) all coincide
  const auto all = recurrence_times(6, p, 2 * pi);
  CHECK(all.back().witnesses.size() == 3);
}

TEST_CASE("kitten expectation cases", "[analytic][kitten]") {
  CHECK(kitten_expectation_case(2, 2, 1, 6) == KittenCase::number_power);
  CHECK(kitten_expectation_case(6, 0, 1, 6) == KittenCase::aligned);
  CHECK(kitten_sign(1, 6) == -1);
  CHECK(kitten_expectation_value(6, 0, 1, 6, 2.0).real() < 0.0);
  CHECK(kitten_expectation_case(6, 0, 2, 9) == KittenCase::suppressed);
  CHECK(kitten_sign(2, 9) == 1);
  CHECK_THROWS_AS(kitten_expectation_case(1, 0, 2, 4), InvalidArgument);
}

TEST_CASE("decaying cat Wigner", "[analytic][cat]") {
  const double x0 = std::sqrt(2.0) * 1.5, g = 0.3;
  CHECK(cat_fringe_weight(0.0, x0, g) == 1.0);
  // short-time weight e^{-X0^2 gamma t}
  CHECK_THAT(cat_fringe_weight(0.01, x0, g, FringeWeight::short_time), WithinRel(std::exp(-x0 * x0 * g * 0.01), 1e-14));

  // normalization by 2D Gauss-Legendre
  for (double t : {0.0, 0.7, 3.0}) {
    const auto rule = special::composite_gauss_legendre(-9.0, 9.0, 40);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      for (std::size_t j = 0; j < rule.nodes.size(); ++j) s += rule.weights[i] * rule.weights[j] * decaying_cat_wigner(rule.nodes[i], rule.nodes[j], t, x0, g);
    CHECK_THAT(s, WithinAbs(1.0, 1e-10));
  }

  // least-squares log slope over gamma t in [0, 0.02]
  std::vector<double> ts, ys;
  for (int i = 0; i <= 40; ++i) {
    const double t = 0.02 / g * i / 40;
    ts.push_back(t);
    ys.push_back(std::log(cat_fringe_weight(t, x0, g, FringeWeight::short_time)));
  }
  CHECK_THAT(-oracle::ls_slope(ts, ys), WithinRel(x0 * x0 * g, 1e-6));
}
