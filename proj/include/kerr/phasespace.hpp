#pragma once

// Fourier-radial representation of the Wigner function,
//
//   W(r, phi) = a_0(r) + sum_{k>=1} [a_k(r) cos(k phi) + b_k(r) sin(k phi)],
//
// with alpha = r e^{i phi} and normalization 2 pi int r a_0 dr = 1. Each
// harmonic is stored as the complex profile c_k = a_k + i b_k on the grid
// r_j = j dr, j = 1..n_r (r = 0 is a boundary node, not stored).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "kerr/analytic.hpp"
#include "kerr/params.hpp"
#include "kerr/special.hpp"

namespace kerr::phasespace {

/// Value of a_0 at r = 0 for an initial coherent state of amplitude alpha0
/// after loss for dimensionless time tau: (2/pi) exp(-2 alpha0^2 e^{-xi tau}).
inline double coherent_origin_value(const ModelParams& params, double tau) {
  const double xi = params.kappa > 0.0 ? params.xi() : 0.0;
  return (2.0 / pi) * std::exp(-2.0 * params.alpha0 * params.alpha0 * std::exp(-xi * tau));
}

class FourierRadialField {
 public:
  FourierRadialField() = default;
  FourierRadialField(ModelParams params, int k_max, int n_r, double dr, double tau = 0.0)
      : params_(params), k_max_(k_max), n_r_(n_r), dr_(dr), tau_(tau),
        c_(static_cast<std::size_t>(k_max + 1) * static_cast<std::size_t>(n_r), cplx{}) {
    if (k_max < 0) throw InvalidArgument("FourierRadialField: k_max must be >= 0");
    if (n_r < 4) throw InvalidArgument("FourierRadialField: need at least 4 radial points");
    if (!(dr > 0.0) || !std::isfinite(dr)) throw InvalidArgument("FourierRadialField: dr must be > 0");
  }

  [[nodiscard]] const ModelParams& params() const { return params_; }
  [[nodiscard]] int k_max() const { return k_max_; }
  [[nodiscard]] int n_r() const { return n_r_; }
  [[nodiscard]] double dr() const { return dr_; }
  [[nodiscard]] double r_max() const { return n_r_ * dr_; }
  [[nodiscard]] double tau() const { return tau_; }
  void set_tau(double tau) { tau_ = tau; }

  /// r of stored node j (0-based storage index, so r = (j + 1) dr).
  [[nodiscard]] double r(int j) const { return (j + 1) * dr_; }

  [[nodiscard]] std::span<cplx> harmonic(int k) {
    return {c_.data() + static_cast<std::size_t>(k) * n_r_, static_cast<std::size_t>(n_r_)};
  }
  [[nodiscard]] std::span<const cplx> harmonic(int k) const {
    return {c_.data() + static_cast<std::size_t>(k) * n_r_, static_cast<std::size_t>(n_r_)};
  }
  [[nodiscard]] double a(int k, int j) const { return harmonic(k)[static_cast<std::size_t>(j)].real(); }
  [[nodiscard]] double b(int k, int j) const { return harmonic(k)[static_cast<std::size_t>(j)].imag(); }

  /// a_0 at r = 0 (every other harmonic vanishes there).
  [[nodiscard]] double origin() const { return origin_; }
  void set_origin(double v) { origin_ = v; }

  /// 2 pi int r a_0 dr by the trapezoid rule on [0, r_max], with the
  /// origin end correction.
  [[nodiscard]] double norm() const {
    const auto a0 = harmonic(0);
    double s = 0.0;
    for (int j = 0; j < n_r_; ++j) s += r(j) * a0[static_cast<std::size_t>(j)].real() * (j + 1 == n_r_ ? 0.5 : 1.0);
    return 2.0 * pi * (s * dr_ + dr_ * dr_ / 12.0 * origin_);
  }

  /// Largest |c_k| over the whole field.
  [[nodiscard]] double peak() const {
    double m = std::abs(origin_);
    for (const auto& v : c_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Largest |c_k| at the outermost node, relative to the field peak.
  [[nodiscard]] double edge_ratio() const {
    double m = 0.0;
    for (int k = 0; k <= k_max_; ++k) m = std::max(m, std::abs(harmonic(k).back()));
    const double p = peak();
    return p > 0.0 ? m / p : 0.0;
  }

  /// max_j |c_k(r_j)|
  [[nodiscard]] double harmonic_peak(int k) const {
    double m = 0.0;
    for (const auto& v : harmonic(k)) m = std::max(m, std::abs(v));
    return m;
  }

  [[nodiscard]] const std::vector<cplx>& data() const { return c_; }

 private:
  ModelParams params_;
  int k_max_ = 0;
  int n_r_ = 0;
  double dr_ = 0.0;
  double tau_ = 0.0;
  double origin_ = 0.0;
  std::vector<cplx> c_;
};

/// L2 distance sqrt(int |W_a - W_b|^2 d^2 alpha) between two fields on the
/// same grid, by Parseval over the harmonics.
inline double l2_distance(const FourierRadialField& x, const FourierRadialField& y) {
  if (x.k_max() != y.k_max() || x.n_r() != y.n_r() || x.dr() != y.dr())
    throw InvalidArgument("l2_distance: fields live on different grids");
  double s = 0.0;
  for (int k = 0; k <= x.k_max(); ++k) {
    const double w = k == 0 ? 2.0 * pi : pi;
    const auto hx = x.harmonic(k), hy = y.harmonic(k);
    for (int j = 0; j < x.n_r(); ++j) s += w * x.r(j) * std::norm(hx[static_cast<std::size_t>(j)] - hy[static_cast<std::size_t>(j)]);
  }
  return std::sqrt(s * x.dr());
}

/// Radius needed to hold a coherent state of amplitude alpha0 on the grid:
/// at least 2 alpha0, and at least 4 beyond the peak so the Gaussian
/// flank is below 1e-13 at the edge.
inline double default_r_max(double alpha0) { return std::max(2.0 * alpha0, alpha0 + 4.0); }

/// Reference radial step 1e-2 pi / alpha0^2.
inline double reference_dr(double alpha0) {
  if (!(alpha0 > 0.0)) throw InvalidArgument("reference_dr: alpha0 must be > 0");
  return 1e-2 * pi / (alpha0 * alpha0);
}

inline int points_for(double r_max, double dr) { return static_cast<int>(std::ceil(r_max / dr - 1e-9)); }

/// Coherent state |alpha0> (alpha0 real) in harmonic form:
/// a_0 = (2/pi) e^{-2(alpha0^2+r^2)} I_0(4 r alpha0), a_k = 2 a_0-like with I_k.
inline FourierRadialField init_coherent(const ModelParams& params, int k_max, int n_r, double dr) {
  params.validate();
  FourierRadialField f(params, k_max, n_r, dr, 0.0);
  const double a0 = params.alpha0;
  if (f.r_max() < 2.0 * a0 * (1.0 - 1e-12))
    throw InvalidArgument("init_coherent: r_max = n_r dr must be >= 2 alpha0");
  for (int j = 0; j < n_r; ++j) {
    const double r = f.r(j);
    // e^{-2(a0^2+r^2)} I_k(4 r a0) = e^{-2(r-a0)^2} [e^{-4 r a0} I_k(4 r a0)]
    const auto ik = special::bessel_i_scaled(4.0 * r * a0, k_max);
    const double g = std::exp(-2.0 * (r - a0) * (r - a0));
    for (int k = 0; k <= k_max; ++k)
      f.harmonic(k)[static_cast<std::size_t>(j)] = (k == 0 ? 2.0 / pi : 4.0 / pi) * g * ik[static_cast<std::size_t>(k)];
  }
  f.set_origin(coherent_origin_value(params, 0.0));
  return f;
}

/// Projects an arbitrary W(r, phi) (in alpha coordinates) onto the
/// harmonics by the trapezoid rule in phi, exact for band-limited W.
template <class Fn>
FourierRadialField project(const ModelParams& params, int k_max, int n_r, double dr, double tau, Fn&& w) {
  FourierRadialField f(params, k_max, n_r, dr, tau);
  const int n_phi = 4 * (k_max + 1) + 64;
  std::vector<double> vals(static_cast<std::size_t>(n_phi));
  for (int j = 0; j < n_r; ++j) {
    const double r = f.r(j);
    for (int i = 0; i < n_phi; ++i) vals[static_cast<std::size_t>(i)] = w(r, 2.0 * pi * i / n_phi);
    for (int k = 0; k <= k_max; ++k) {
      cplx s = 0.0;
      for (int i = 0; i < n_phi; ++i) s += vals[static_cast<std::size_t>(i)] * std::polar(1.0, -2.0 * pi * k * i / n_phi);
      s /= double(n_phi);
      // a_k - i b_k = 2 <W e^{-ik phi}> for k >= 1
      f.harmonic(k)[static_cast<std::size_t>(j)] = k == 0 ? cplx(s.real(), 0.0) : 2.0 * std::conj(s);
    }
  }
  double o = 0.0;
  for (int i = 0; i < n_phi; ++i) o += w(0.0, 2.0 * pi * i / n_phi);
  f.set_origin(o / n_phi);
  return f;
}

// ----------------------------------------------------------------------------
// Point reconstruction

/// W(r, phi) with cubic Lagrange interpolation in r. The parity rule
/// c_k(-r) = (-1)^k c_k(r) supplies the node behind the origin, and the
/// field is zero beyond r_max.
inline double reconstruct(const FourierRadialField& f, double r, double phi) {
  if (!(r >= 0.0) || r > f.r_max() * (1.0 + 1e-12)) throw InvalidArgument("reconstruct: r outside [0, r_max]");
  const double dr = f.dr();
  const int n_r = f.n_r();
  const double s = r / dr;
  // nodes are indexed by grid position q = 0..n_r (q = 0 is the origin)
  int q0 = static_cast<int>(std::floor(s)) - 1;
  q0 = std::clamp(q0, -1, n_r - 2);
  auto value = [&](int k, int q) -> cplx {
    if (q == 0) return k == 0 ? cplx(f.origin()) : cplx{};
    if (q < 0) return (k % 2 == 0 ? 1.0 : -1.0) * f.harmonic(k)[static_cast<std::size_t>(-q - 1)];
    if (q > n_r) return cplx{};
    return f.harmonic(k)[static_cast<std::size_t>(q - 1)];
  };
  double w[4];
  for (int a = 0; a < 4; ++a) {
    double l = 1.0;
    for (int b = 0; b < 4; ++b)
      if (b != a) l *= (s - (q0 + b)) / double(a - b);
    w[a] = l;
  }
  double out = 0.0;
  for (int k = 0; k <= f.k_max(); ++k) {
    cplx c = 0.0;
    for (int a = 0; a < 4; ++a) c += w[a] * value(k, q0 + a);
    out += k == 0 ? c.real() : c.real() * std::cos(k * phi) + c.imag() * std::sin(k * phi);
  }
  return out;
}

// ----------------------------------------------------------------------------
// Moments

enum class Parity { cos, sin };

/// int_0^{2pi} cos^m(phi) sin^n(phi) {cos, sin}(k phi) dphi in closed form.
inline double angular_weight(int m, int n, int k, Parity parity) {
  if (m < 0 || n < 0 || k < 0) throw InvalidArgument("angular_weight: negative index");
  if ((m + n + k) % 2 != 0) return 0.0;
  // expand in exponentials; only frequencies m + n - 2(km + kn) = -+k survive
  double plus = 0.0, minus = 0.0;
  for (int km = 0; km <= m; ++km) {
    for (int kn = 0; kn <= n; ++kn) {
      const int freq = m + n - 2 * (km + kn);
      const double c = special::binomial(m, km) * special::binomial(n, kn) * (kn % 2 == 0 ? 1.0 : -1.0);
      if (freq + k == 0) plus += c;
      if (freq - k == 0) minus += c;
    }
  }
  // 2 pi / (2^{m+n+1} i^n) [plus + minus]  or  2 pi / (2^{m+n+1} i^{n+1}) [plus - minus]
  const int ipow = parity == Parity::cos ? n : n + 1;
  const double sum = parity == Parity::cos ? plus + minus : plus - minus;
  // 1 / i^p is real for even p: (-1)^{p/2}; odd p leaves a purely imaginary
  // total, which the parity selection forces to vanish
  if (ipow % 2 != 0) return 0.0;
  const double sign = (ipow / 2) % 2 == 0 ? 1.0 : -1.0;
  return sign * 2.0 * pi * sum / std::ldexp(1.0, m + n + 1);
}

/// I(k, p) = int_0^{r_max} r^{p+1} c_k(r) dr for k, p <= p_max.
class RadialMoments {
 public:
  RadialMoments() = default;
  RadialMoments(int p_max, double tau) : p_max_(p_max), tau_(tau), table_(static_cast<std::size_t>((p_max + 1) * (p_max + 1))) {}

  [[nodiscard]] int p_max() const { return p_max_; }
  [[nodiscard]] double tau() const { return tau_; }
  [[nodiscard]] cplx operator()(int k, int p) const { return table_[index(k, p)]; }
  cplx& at(int k, int p) { return table_[index(k, p)]; }

 private:
  [[nodiscard]] std::size_t index(int k, int p) const { return static_cast<std::size_t>(k * (p_max_ + 1) + p); }
  int p_max_ = 0;
  double tau_ = 0.0;
  std::vector<cplx> table_;
};

/// Trapezoid of r^{p+1} c(r) over [0, r_max] on the uniform grid, plus the
/// Euler-Maclaurin end correction from the origin slope (nonzero only for
/// k = p = 0, where the integrand starts like r a_0(0)).
inline cplx radial_integral(std::span<const cplx> c, double dr, int p, double origin_slope = 0.0) {
  const std::size_t n = c.size();
  cplx s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double r = (double(j) + 1.0) * dr;
    s += std::pow(r, p + 1) * c[j] * (j + 1 == n ? 0.5 : 1.0);
  }
  return s * dr + dr * dr / 12.0 * origin_slope;
}

inline RadialMoments radial_moments(const FourierRadialField& f, int p_max) {
  if (p_max < 0) throw InvalidArgument("radial_moments: p_max must be >= 0");
  RadialMoments out(p_max, f.tau());
  const int k_top = std::min(p_max, f.k_max());
  for (int k = 0; k <= k_top; ++k)
    for (int p = k; p <= p_max; p += 1)
      out.at(k, p) = radial_integral(f.harmonic(k), f.dr(), p, k == 0 && p == 0 ? f.origin() : 0.0);
  return out;
}

/// Symmetrically ordered <{X^m P^n}> from cached radial moments.
inline double moment_xy(const RadialMoments& rm, int m, int n, int k_max) {
  if (m < 0 || n < 0) throw InvalidArgument("moment_xy: negative power");
  const int p = m + n;
  if (p > 12) throw InvalidArgument("moment_xy: m + n must be <= 12");
  if (p > rm.p_max()) throw InvalidArgument("moment_xy: order exceeds the cached radial moments");
  if (p > k_max) throw InvalidArgument("moment_xy: needs harmonics up to k = m + n, field stops at k_max");
  double s = 0.0;
  for (int k = p % 2; k <= p; k += 2) {
    const cplx I = rm(k, p);
    s += angular_weight(m, n, k, Parity::cos) * I.real();
    if (k > 0) s += angular_weight(m, n, k, Parity::sin) * I.imag();
  }
  return std::pow(2.0, 0.5 * p) * s;
}

inline double moment_xy(const FourierRadialField& f, int m, int n) {
  if (m + n > f.k_max()) throw InvalidArgument("moment_xy: needs harmonics up to k = m + n, field stops at k_max");
  return moment_xy(radial_moments(f, m + n), m, n, f.k_max());
}

/// <X_theta^n> = sum_m C(n, m) cos^{n-m} sin^m <{X^{n-m} P^m}>.
inline double quadrature_moment_field(const RadialMoments& rm, const analytic::QuadratureSpec& spec, int k_max) {
  spec.validate();
  const double c = std::cos(spec.theta), s = std::sin(spec.theta);
  double out = 0.0;
  for (int m = 0; m <= spec.n; ++m)
    out += special::binomial(spec.n, m) * std::pow(c, spec.n - m) * std::pow(s, m) * moment_xy(rm, spec.n - m, m, k_max);
  return out;
}

inline double quadrature_moment_field(const FourierRadialField& f, const analytic::QuadratureSpec& spec) {
  spec.validate();
  return quadrature_moment_field(radial_moments(f, spec.n), spec, f.k_max());
}

/// <n> = <{a^dag a}> - 1/2 = (<X^2> + <P^2>)/2 - 1/2.
inline double mean_photons(const FourierRadialField& f) {
  const auto rm = radial_moments(f, 2);
  return 0.5 * (moment_xy(rm, 2, 0, f.k_max()) + moment_xy(rm, 0, 2, f.k_max())) - 0.5;
}

// ----------------------------------------------------------------------------
// Text dumps

namespace detail {
inline std::string fmt17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto* b = s.data();
  const auto* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e) throw InvalidArgument("bad number for " + what + ": '" + s + "'");
  return v;
}
}  // namespace detail

/// Writes the field as CSV: a '#' metadata line, a column header, then one
/// row per radial node (j, r_j, a_0..a_kmax, b_1..b_kmax).
inline void write_dump(std::ostream& os, const FourierRadialField& f) {
  using detail::fmt17;
  const auto& p = f.params();
  os << "# alpha0=" << fmt17(p.alpha0) << ",kappa=" << fmt17(p.kappa) << ",gamma=" << fmt17(p.gamma)
     << ",tau=" << fmt17(f.tau()) << ",k_max=" << f.k_max() << ",n_r=" << f.n_r() << ",dr=" << fmt17(f.dr())
     << ",origin=" << fmt17(f.origin()) << "\n";
  os << "j,r";
  for (int k = 0; k <= f.k_max(); ++k) os << ",a_" << k;
  for (int k = 1; k <= f.k_max(); ++k) os << ",b_" << k;
  os << "\n";
  for (int j = 0; j < f.n_r(); ++j) {
    os << (j + 1) << ',' << fmt17(f.r(j));
    for (int k = 0; k <= f.k_max(); ++k) os << ',' << fmt17(f.a(k, j));
    for (int k = 1; k <= f.k_max(); ++k) os << ',' << fmt17(f.b(k, j));
    os << "\n";
  }
}

inline FourierRadialField read_dump(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0) throw InvalidArgument("dump: missing metadata line");
  std::map<std::string, std::string> meta;
  std::stringstream ms(line.substr(2));
  std::string item;
  while (std::getline(ms, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidArgument("dump: bad metadata item '" + item + "'");
    meta[item.substr(0, eq)] = item.substr(eq + 1);
  }
  auto need = [&](const char* key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw InvalidArgument(std::string("dump: metadata lacks ") + key);
    return detail::parse_double(it->second, key);
  };
  const ModelParams params{need("kappa"), need("gamma"), need("alpha0")};
  const int k_max = static_cast<int>(need("k_max")), n_r = static_cast<int>(need("n_r"));
  FourierRadialField f(params, k_max, n_r, need("dr"), need("tau"));
  f.set_origin(need("origin"));
  if (!std::getline(is, line)) throw InvalidArgument("dump: missing column header");
  const std::size_t cols = 2 + static_cast<std::size_t>(k_max + 1) + static_cast<std::size_t>(k_max);
  for (int j = 0; j < n_r; ++j) {
    if (!std::getline(is, line)) throw InvalidArgument("dump: expected " + std::to_string(n_r) + " rows");
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != cols) throw InvalidArgument("dump: row " + std::to_string(j + 1) + " has wrong column count");
    for (int k = 0; k <= k_max; ++k) {
      const double a = detail::parse_double(cells[static_cast<std::size_t>(2 + k)], "a");
      const double b = k == 0 ? 0.0 : detail::parse_double(cells[static_cast<std::size_t>(2 + k_max + k)], "b");
      f.harmonic(k)[static_cast<std::size_t>(j)] = {a, b};
    }
  }
  return f;
}

/// Raster on the polar grid (r_j for j = 0..n_r, phi = i * phi_step) with
/// quadrature coordinates X = sqrt2 r cos(phi), P = sqrt2 r sin(phi).
inline void write_raster(std::ostream& os, const FourierRadialField& f, double phi_step) {
  if (!(phi_step > 0.0) || phi_step > pi) throw InvalidArgument("raster: phi step must lie in (0, pi]");
  const int n_phi = static_cast<int>(std::llround(2.0 * pi / phi_step));
  os << "r,phi,x,p,w\n";
  for (int j = 0; j <= f.n_r(); ++j) {
    const double r = j * f.dr();
    for (int i = 0; i < n_phi; ++i) {
      const double phi = i * phi_step;
      os << detail::fmt17(r) << ',' << detail::fmt17(phi) << ',' << detail::fmt17(std::sqrt(2.0) * r * std::cos(phi))
         << ',' << detail::fmt17(std::sqrt(2.0) * r * std::sin(phi)) << ',' << detail::fmt17(reconstruct(f, r, phi))
         << "\n";
    }
  }
}

}  // namespace kerr::phasespace
