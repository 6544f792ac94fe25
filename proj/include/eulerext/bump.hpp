#pragma once
// Smooth periodic bump machinery: exp(-1/t) glue steps, plateau bumps, the
// 8-piece partition of unity on the circle, and the normalized complement
// bumps (with tabulated antiderivatives) used for mean-zero adjustment.
//
// Everything here is evaluated in closed form at arbitrary points; these
// profiles have slowly decaying Fourier tails, so resampling them through a
// coarse spectral grid is never allowed.

#include <array>
#include <cmath>
#include <vector>

#include "core.hpp"
#include "fft.hpp"

namespace eulerext {

namespace bump {

// e(t) = exp(-1/t) for t > 0, else 0; C-infinity at 0.
inline double glue(double t) { return t <= 0.0 ? 0.0 : std::exp(-1.0 / t); }

inline double glue_deriv(double t) {
  if (t <= 0.0) return 0.0;
  double inv = 1.0 / t;
  return std::exp(-inv) * inv * inv;
}

// Monotone C-infinity step: 0 for s <= 0, 1 for s >= 1.
inline double step(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  double a = glue(s), b = glue(1.0 - s);
  return a / (a + b);
}

inline double step_deriv(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  double a = glue(s), b = glue(1.0 - s);
  double da = glue_deriv(s), db = -glue_deriv(1.0 - s);
  double denom = a + b;
  return (da * b - a * db) / (denom * denom);
}

// Periodic plateau bump: 1 on |y - center| <= half - trans, 0 outside
// |y - center| < half, glue-step transitions of width trans in between.
// Key identity: step(s) + step(1-s) = 1, so the integral over the circle is
// exactly 2*half - trans.
struct Plateau {
  double center = 0.0;
  double half = 0.125;
  double trans = 1.0 / 32.0;

  double value(double y) const {
    double z = std::abs(wrap_signed(y - center));
    if (z >= half) return 0.0;
    if (z <= half - trans) return 1.0;
    return step((half - z) / trans);
  }

  double deriv(double y) const {
    double zs = wrap_signed(y - center);
    double z = std::abs(zs);
    if (z >= half || z <= half - trans) return 0.0;
    double d = step_deriv((half - z) / trans) * (-1.0 / trans);
    return zs >= 0.0 ? d : -d;
  }

  double integral() const { return 2.0 * half - trans; }
};

constexpr int kPieces = 8;
constexpr double kHalf = 0.125;          // support length 1/4
constexpr double kTrans = 1.0 / 32.0;    // C-infinity transition width

inline const Plateau& piece_raw(int r) {
  static const std::array<Plateau, kPieces> p = [] {
    std::array<Plateau, kPieces> a{};
    for (int r = 0; r < kPieces; ++r) a[std::size_t(r)] = Plateau{r / 8.0, kHalf, kTrans};
    return a;
  }();
  return p[std::size_t(r)];
}

// chi_r = psi_r / sum_q psi_q: 8 bumps with supports of length 1/4 centered at
// r/8; the nearest center is within 1/16 of any point, where psi = 1, so the
// denominator is >= 1 everywhere and sum_r chi_r == 1.
inline double chi(int r, double y) {
  double num = piece_raw(r).value(y);
  if (num == 0.0) return 0.0;
  double den = 0.0;
  for (int q = 0; q < kPieces; ++q) den += piece_raw(q).value(y);
  return num / den;
}

inline double chi_deriv(int r, double y) {
  double num = piece_raw(r).value(y);
  double dnum = piece_raw(r).deriv(y);
  if (num == 0.0 && dnum == 0.0) return 0.0;
  double den = 0.0, dden = 0.0;
  for (int q = 0; q < kPieces; ++q) {
    den += piece_raw(q).value(y);
    dden += piece_raw(q).deriv(y);
  }
  return (dnum * den - num * dden) / (den * den);
}

// Support interval of piece r (closed, on the circle).
inline double piece_center(int r) { return r / 8.0; }
inline double interval_lo(int r) { return piece_center(r) - kHalf; }
inline double interval_hi(int r) { return piece_center(r) + kHalf; }

// The mean-zero adjuster for piece r: a bump phi_r with integral exactly 1
// supported in [c + 3/8, c + 5/8], the complement of the 1/4-neighborhood of
// the support interval of chi_r. Normalization is closed-form: the raw
// plateau integrates to 2*half - trans = 7/32.
inline double phi(int r, double y) {
  Plateau p{piece_center(r) + 0.5, kHalf, kTrans};
  return p.value(y) / p.integral();
}

inline double phi_deriv(int r, double y) {
  Plateau p{piece_center(r) + 0.5, kHalf, kTrans};
  return p.deriv(y) / p.integral();
}

constexpr int kTableSize = 8192;

namespace detail {
// Antiderivative table of the r = 0 adjuster phi_0 (centered at 1/2):
// Phi0(j/tablesize) = int_0^{j/ts} phi_0, built once by spectral quadrature.
inline const std::vector<double>& phi0_antiderivative_table() {
  static const std::vector<double> table = [] {
    PeriodicGrid g({kTableSize});
    std::vector<double> samples(kTableSize);
    for (int j = 0; j < kTableSize; ++j) samples[std::size_t(j)] = phi(0, double(j) / kTableSize);
    std::vector<cplx> c = fft_forward(g, samples.data());
    // mean is 1 by construction; antiderivative = y*mean + periodic part
    std::vector<cplx> anti(std::size_t(kTableSize), cplx(0.0, 0.0));
    for (int jm = 1; jm < kTableSize; ++jm) {
      double k = double(signed_freq(jm, kTableSize));
      if (k == 0.0) continue;  // Nyquist of a real odd-derivative pairing
      anti[std::size_t(jm)] = c[std::size_t(jm)] / (cplx(0.0, 1.0) * kTau * k);
    }
    std::vector<double> periodic = fft_inverse_real(g, anti);
    double mean = c[0].real();
    std::vector<double> out(kTableSize);
    for (int j = 0; j < kTableSize; ++j)
      out[std::size_t(j)] = mean * double(j) / kTableSize + periodic[std::size_t(j)] - periodic[0];
    return out;
  }();
  return table;
}
}  // namespace detail

// Phi_r(y) = int_0^y phi_r at table points y = j/kTableSize only (exact
// lookups; grid sizes are powers of two <= kTableSize so grid nodes land on
// table points). phi_r(y) = phi_0(y - r/8), so
// Phi_r(y) = Phi0(y - r/8) - Phi0(-r/8), with Phi0 extended by
// Phi0(y + 1) = Phi0(y) + 1.
inline double phi_antiderivative(int r, int j, int table_size = kTableSize) {
  require(table_size == kTableSize, "phi_antiderivative: table size mismatch");
  const std::vector<double>& t = detail::phi0_antiderivative_table();
  int shift = r * (kTableSize / kPieces);
  auto phi0_ext = [&](long idx) {
    long q = idx >= 0 ? idx / kTableSize : -((-idx + kTableSize - 1) / kTableSize);
    long rem = idx - q * kTableSize;
    return t[std::size_t(rem)] + double(q);
  };
  return phi0_ext(long(j) - shift) - phi0_ext(-long(shift));
}

}  // namespace bump

}  // namespace eulerext
