#pragma once
// Fast off-grid evaluation of trig polynomials: spectra are zero-padded onto a
// refined grid (default 2x) synthesized once, then points are read through
// tensor local Lagrange stencils (default order 8). Against exact mode
// summation this is accurate to ~1e-10 on fields resolved by their grid
// (validated in the unit tests); cost per point is O(order^d) instead of O(N).

#include <array>
#include <cmath>
#include <vector>

#include "core.hpp"
#include "fft.hpp"
#include "field.hpp"

namespace eulerext {

inline constexpr int kSamplerPad = 2;
inline constexpr int kSamplerOrder = 8;

// Zero-pad a spectrum onto grid with axes scaled by `factor`. Nyquist bins are
// split evenly between +n/2 and -n/2 so the refined interpolant is the
// symmetric (real) one.
inline Spectrum pad_spectrum(const PeriodicGrid& g, const Spectrum& c, const PeriodicGrid& fine) {
  Spectrum out(std::size_t(fine.size()), cplx(0.0, 0.0));
  std::int64_t N = g.size();
  int idx[8];
  int fidx[8];
  for (std::int64_t f = 0; f < N; ++f) {
    if (c[std::size_t(f)] == cplx(0.0, 0.0)) continue;
    g.unflatten(f, idx);
    // Each axis maps to one fine bin, except Nyquist which splits into two.
    int nyq_axes[8];
    int nyq_count = 0;
    for (int a = 0; a < g.d; ++a) {
      int k = signed_freq(idx[a], g.n[a]);
      if (idx[a] == g.n[a] / 2) {
        nyq_axes[nyq_count++] = a;
        fidx[a] = 0;  // filled per split below
      } else {
        fidx[a] = k >= 0 ? k : k + fine.n[a];
      }
    }
    int splits = 1 << nyq_count;
    cplx w = c[std::size_t(f)] / double(splits);
    for (int s = 0; s < splits; ++s) {
      for (int b = 0; b < nyq_count; ++b) {
        int a = nyq_axes[b];
        int k = (s >> b) & 1 ? g.n[a] / 2 : -g.n[a] / 2;
        fidx[a] = k >= 0 ? k : k + fine.n[a];
      }
      out[std::size_t(fine.flatten(fidx))] += w;
    }
  }
  return out;
}

namespace detail {
// Lagrange weights for `ord` consecutive unit-spaced nodes, evaluation offset t
// from the first node.
inline void lagrange_weights(double t, int ord, double* w) {
  for (int j = 0; j < ord; ++j) {
    double num = 1.0, den = 1.0;
    for (int l = 0; l < ord; ++l) {
      if (l == j) continue;
      num *= t - double(l);
      den *= double(j - l);
    }
    w[j] = num / den;
  }
}
}  // namespace detail

// Shared-grid group of fields sampled through one set of per-point weights.
class FastSamplerGroup {
 public:
  FastSamplerGroup() = default;

  FastSamplerGroup(const PeriodicGrid& g, const std::vector<Spectrum>& spectra,
                   int pad = kSamplerPad, int order = kSamplerOrder)
      : order_(order) {
    std::vector<int> dims(g.n);
    for (int& v : dims) v *= pad;
    fine_ = PeriodicGrid(dims);
    vals_.reserve(spectra.size());
    for (const auto& c : spectra) vals_.push_back(fft_inverse_real(fine_, pad_spectrum(g, c, fine_)));
  }

  int fields() const { return int(vals_.size()); }
  const PeriodicGrid& fine_grid() const { return fine_; }

  // Evaluate every field at unit-torus point x (wrapped internally).
  void eval(const double* x, double* out) const {
    double w[8][16];
    int idx[8][16];
    int d = fine_.d;
    for (int a = 0; a < d; ++a) {
      double u = wrap_unit(x[a]) * double(fine_.n[a]);
      double base = std::floor(u);
      int start = int(base) - (order_ / 2 - 1);
      detail::lagrange_weights(u - double(start), order_, w[a]);
      int n = fine_.n[a];
      for (int j = 0; j < order_; ++j) idx[a][j] = mod(start + j, n);
    }
    for (std::size_t q = 0; q < vals_.size(); ++q) out[q] = contract(vals_[q].data(), idx, w);
  }

  double eval_one(int field, const double* x) const {
    static thread_local std::vector<double> out;
    out.resize(vals_.size());
    eval(x, out.data());
    return out[std::size_t(field)];
  }

 private:
  double contract(const double* v, const int (*idx)[16], const double (*w)[16]) const {
    int d = fine_.d;
    if (d == 1) {
      double acc = 0.0;
      for (int j = 0; j < order_; ++j) acc += w[0][j] * v[idx[0][j]];
      return acc;
    }
    if (d == 2) {
      int n1 = fine_.n[1];
      double acc = 0.0;
      for (int j0 = 0; j0 < order_; ++j0) {
        const double* row = v + std::int64_t(idx[0][j0]) * n1;
        double r = 0.0;
        for (int j1 = 0; j1 < order_; ++j1) r += w[1][j1] * row[idx[1][j1]];
        acc += w[0][j0] * r;
      }
      return acc;
    }
    if (d == 3) {
      int n1 = fine_.n[1], n2 = fine_.n[2];
      double acc = 0.0;
      for (int j0 = 0; j0 < order_; ++j0) {
        const double* pl = v + std::int64_t(idx[0][j0]) * n1 * n2;
        double pa = 0.0;
        for (int j1 = 0; j1 < order_; ++j1) {
          const double* row = pl + std::int64_t(idx[1][j1]) * n2;
          double r = 0.0;
          for (int j2 = 0; j2 < order_; ++j2) r += w[2][j2] * row[idx[2][j2]];
          pa += w[1][j1] * r;
        }
        acc += w[0][j0] * pa;
      }
      return acc;
    }
    // generic fallback
    return contract_rec(v, idx, w, 0, 0);
  }

  double contract_rec(const double* v, const int (*idx)[16], const double (*w)[16], int axis,
                      std::int64_t base) const {
    std::int64_t stride = 1;
    for (int a = axis + 1; a < fine_.d; ++a) stride *= fine_.n[a];
    double acc = 0.0;
    for (int j = 0; j < order_; ++j) {
      std::int64_t off = base + std::int64_t(idx[axis][j]) * stride;
      acc += w[axis][j] * (axis + 1 == fine_.d ? v[off] : contract_rec(v, idx, w, axis + 1, off));
    }
    return acc;
  }

  static int mod(int a, int n) {
    int r = a % n;
    return r < 0 ? r + n : r;
  }

  PeriodicGrid fine_;
  std::vector<std::vector<double>> vals_;
  int order_ = kSamplerOrder;
};

}  // namespace eulerext
