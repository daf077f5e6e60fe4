#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kerr/params.hpp"

namespace kerr {

/// Square banded matrix with `kl` sub- and `ku` super-diagonals, stored by
/// row windows wide enough to hold the fill-in of partial pivoting.
template <class T>
class BandedMatrix {
 public:
  BandedMatrix() = default;
  BandedMatrix(int n, int kl, int ku) : n_(n), kl_(kl), ku_(ku), w_(2 * kl + ku + 1), data_(std::size_t(n) * w_, T{}) {}

  [[nodiscard]] int size() const { return n_; }
  [[nodiscard]] int lower() const { return kl_; }
  [[nodiscard]] int upper() const { return ku_; }

  /// Element (i, c); valid for i - kl <= c <= i + ku + kl.
  T& at(int i, int c) { return data_[std::size_t(i) * w_ + std::size_t(c - i + kl_)]; }
  [[nodiscard]] const T& at(int i, int c) const { return data_[std::size_t(i) * w_ + std::size_t(c - i + kl_)]; }

  [[nodiscard]] const T* raw() const { return data_.data(); }

  [[nodiscard]] bool in_band(int i, int c) const { return c >= i - kl_ && c <= i + ku_ && c >= 0 && c < n_; }

  void multiply(std::span<const T> x, std::span<T> y) const {
    const int lo = kl_, hi = n_ - 1 - ku_;
    for (int i = lo; i <= hi; ++i) {  // interior rows: full stencil
      const T* row = data_.data() + std::size_t(i) * w_;
      const T* xs = x.data() + (i - kl_);
      T s{};
      for (int o = 0; o <= kl_ + ku_; ++o) s += row[o] * xs[o];
      y[std::size_t(i)] = s;
    }
    for (int i = 0; i < n_; ++i) {
      if (i == lo && lo <= hi) i = hi + 1;
      if (i >= n_) break;
      T s{};
      const int c0 = std::max(0, i - kl_), c1 = std::min(n_ - 1, i + ku_);
      for (int c = c0; c <= c1; ++c) s += at(i, c) * x[std::size_t(c)];
      y[std::size_t(i)] = s;
    }
  }

 private:
  int n_ = 0, kl_ = 0, ku_ = 0, w_ = 0;
  std::vector<T> data_;
};

/// LU factorization with partial pivoting of a banded matrix (LINPACK
/// layout: row interchanges are applied in sequence during the solve).
template <class T>
class BandedLU {
 public:
  BandedLU() = default;
  explicit BandedLU(BandedMatrix<T> a) : lu_(std::move(a)), piv_(std::size_t(lu_.size())) {
    const int n = lu_.size(), kl = lu_.lower(), ku = lu_.upper();
    for (int col = 0; col < n; ++col) {
      const int last = std::min(n - 1, col + kl);
      int p = col;
      double best = std::abs(lu_.at(col, col));
      for (int r = col + 1; r <= last; ++r) {
        const double v = std::abs(lu_.at(r, col));
        if (v > best) best = v, p = r;
      }
      if (best == 0.0) throw NumericalFailure("banded LU: singular matrix at column " + std::to_string(col));
      piv_[std::size_t(col)] = p;
      const int cend = std::min(n - 1, col + kl + ku);
      if (p != col)
        for (int c = col; c <= cend; ++c) std::swap(lu_.at(col, c), lu_.at(p, c));
      const T inv = T(1) / lu_.at(col, col);
      for (int r = col + 1; r <= last; ++r) {
        const T l = lu_.at(r, col) * inv;
        lu_.at(r, col) = l;
        if (l == T{}) continue;
        for (int c = col + 1; c <= cend; ++c) lu_.at(r, c) -= l * lu_.at(col, c);
      }
    }
    inv_diag_.resize(std::size_t(n));
    for (int i = 0; i < n; ++i) inv_diag_[std::size_t(i)] = T(1) / lu_.at(i, i);
  }

  /// Solves A x = b in place.
  void solve(std::span<T> b) const {
    const int n = lu_.size(), kl = lu_.lower(), ku = lu_.upper();
    const int w = 2 * kl + ku + 1;
    const T* d = lu_.raw();
    T* x = b.data();
    // row i stores columns i - kl .. i + kl + ku at offsets 0 .. w - 1
    for (int col = 0; col < n; ++col) {
      const int p = piv_[std::size_t(col)];
      if (p != col) std::swap(x[col], x[p]);
      const T xc = x[col];
      const int last = std::min(n - 1, col + kl);
      for (int r = col + 1; r <= last; ++r) x[r] -= d[std::size_t(r) * w + std::size_t(col - r + kl)] * xc;
    }
    for (int i = n - 1; i >= 0; --i) {
      const T* row = d + std::size_t(i) * w + kl;  // row[c - i] is element (i, c)
      T s = x[i];
      const int span = std::min(n - 1 - i, kl + ku);
      for (int o = 1; o <= span; ++o) s -= row[o] * x[i + o];
      x[i] = s * inv_diag_[std::size_t(i)];
    }
  }

 private:
  BandedMatrix<T> lu_;
  std::vector<int> piv_;
  std::vector<T> inv_diag_;
};

}  // namespace kerr
