#pragma once
// Sampled periodic fields: transforms, spectral derivatives, exact trigonometric
// interpolation, C^k seminorms, and time-dependent stacks with order-4 stencils.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "core.hpp"
#include "fft.hpp"

namespace eulerext {

struct ScalarField {
  PeriodicGrid grid;
  std::vector<double> v;

  ScalarField() = default;
  explicit ScalarField(const PeriodicGrid& g) : grid(g), v(std::size_t(g.size()), 0.0) {}
  ScalarField(const PeriodicGrid& g, std::vector<double> vals) : grid(g), v(std::move(vals)) {
    require(std::int64_t(v.size()) == g.size(), "ScalarField: sample count does not match grid");
  }

  double& operator[](std::int64_t i) { return v[std::size_t(i)]; }
  double operator[](std::int64_t i) const { return v[std::size_t(i)]; }
};

using Spectrum = std::vector<cplx>;

inline Spectrum spectrum_of(const ScalarField& f) { return fft_forward(f.grid, f.v.data()); }

inline ScalarField field_of(const PeriodicGrid& g, const Spectrum& c) {
  return ScalarField(g, fft_inverse_real(g, c));
}

// Multiply bin (m_0..m_{d-1}) by (2*pi*i*k_axis)^order; odd orders zero the
// unmatched Nyquist bin so real fields stay real.
inline void spectral_derivative_inplace(const PeriodicGrid& g, Spectrum& c, int axis, int order) {
  require(axis >= 0 && axis < g.d, "spectral_derivative: axis out of range");
  require(order >= 1, "spectral_derivative: order must be >= 1");
  std::int64_t N = g.size();
  int idx[8];
  for (std::int64_t f = 0; f < N; ++f) {
    g.unflatten(f, idx);
    int m = idx[axis];
    int k = signed_freq(m, g.n[axis]);
    if ((order & 1) && m == g.n[axis] / 2) {
      c[std::size_t(f)] = 0.0;
      continue;
    }
    cplx w(0.0, kTau * double(k));
    cplx p(1.0, 0.0);
    for (int j = 0; j < order; ++j) p *= w;
    c[std::size_t(f)] *= p;
  }
}

inline ScalarField differentiate(const ScalarField& f, int axis, int order) {
  Spectrum c = spectrum_of(f);
  spectral_derivative_inplace(f.grid, c, axis, order);
  return field_of(f.grid, c);
}

// Exact interpolation of the trig polynomial with coefficients c at point x
// (unit-torus coordinates). The Nyquist bin is evaluated at frequency -n/2 and
// the real part returned; fields resolved on their grid carry negligible
// Nyquist mass, and nodal values are reproduced exactly either way.
inline double trig_interpolate(const PeriodicGrid& g, const Spectrum& c, const double* x) {
  // Per-axis phase tables e^{2 pi i k_m x_a}.
  static thread_local std::vector<cplx> phases;
  std::size_t total = 0;
  for (int a = 0; a < g.d; ++a) total += std::size_t(g.n[a]);
  phases.resize(total);
  std::size_t off = 0;
  std::vector<std::size_t> offs(std::size_t(g.d));
  for (int a = 0; a < g.d; ++a) {
    offs[std::size_t(a)] = off;
    int n = g.n[a];
    for (int m = 0; m < n; ++m) {
      double ang = kTau * double(signed_freq(m, n)) * x[a];
      phases[off + std::size_t(m)] = cplx(std::cos(ang), std::sin(ang));
    }
    off += std::size_t(n);
  }
  std::int64_t N = g.size();
  int idx[8];
  cplx acc(0.0, 0.0);
  for (std::int64_t f = 0; f < N; ++f) {
    g.unflatten(f, idx);
    cplx p = c[std::size_t(f)];
    for (int a = 0; a < g.d; ++a) p *= phases[offs[std::size_t(a)] + std::size_t(idx[a])];
    acc += p;
  }
  return acc.real();
}

inline double trig_interpolate(const ScalarField& f, const double* x) {
  Spectrum c = spectrum_of(f);
  return trig_interpolate(f.grid, c, x);
}

inline double sup_norm(const ScalarField& f) {
  double m = 0.0;
  for (double x : f.v) m = std::max(m, std::abs(x));
  return m;
}

inline double l2_norm(const ScalarField& f) {
  double s = 0.0;
  for (double x : f.v) s += x * x;
  return std::sqrt(s / double(f.v.size()));
}

namespace detail {
// All spatial multi-indices with 1 <= |alpha| <= k, d axes.
inline void multi_indices_upto(int d, int k, std::vector<std::vector<int>>& out) {
  std::vector<int> alpha(std::size_t(d), 0);
  // iterate over compositions by odometer up to total degree k
  while (true) {
    int total = 0;
    for (int a : alpha) total += a;
    if (total >= 1 && total <= k) out.push_back(alpha);
    int pos = d - 1;
    while (pos >= 0) {
      alpha[std::size_t(pos)]++;
      int t = 0;
      for (int a : alpha) t += a;
      if (t <= k) break;
      alpha[std::size_t(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
}
}  // namespace detail

// C^k seminorm: sup|f| for k = 0; max over derivative orders 1..k of sup-norms
// of spectral derivatives for k >= 1 (constants give 0 for k >= 1).
inline double seminorm(const ScalarField& f, int k) {
  require(k >= 0, "seminorm: order must be >= 0");
  if (k == 0) return sup_norm(f);
  Spectrum base = spectrum_of(f);
  std::vector<std::vector<int>> alphas;
  detail::multi_indices_upto(f.grid.d, k, alphas);
  double best = 0.0;
  for (const auto& alpha : alphas) {
    Spectrum c = base;
    for (int a = 0; a < f.grid.d; ++a)
      if (alpha[std::size_t(a)] > 0) spectral_derivative_inplace(f.grid, c, a, alpha[std::size_t(a)]);
    best = std::max(best, sup_norm(field_of(f.grid, c)));
  }
  return best;
}

// frames x components x nodes, uniform times on [0,T].
struct TimeDependentField {
  PeriodicGrid grid;
  int components = 0;
  int frames = 0;
  double T = 0.0;
  std::vector<double> data;

  TimeDependentField() = default;
  TimeDependentField(const PeriodicGrid& g, int comps, int nframes, double horizon)
      : grid(g), components(comps), frames(nframes), T(horizon),
        data(std::size_t(g.size()) * std::size_t(comps) * std::size_t(nframes), 0.0) {
    require(comps >= 1, "TimeDependentField: need at least one component");
    require(nframes >= 2, "TimeDependentField: need at least two frames");
    require(horizon > 0.0, "TimeDependentField: horizon must be positive");
  }

  double dt() const { return T / double(frames - 1); }
  double time(int f) const { return T * double(f) / double(frames - 1); }

  double* frame_component(int f, int c) {
    return data.data() + (std::size_t(f) * std::size_t(components) + std::size_t(c)) * std::size_t(grid.size());
  }
  const double* frame_component(int f, int c) const {
    return data.data() + (std::size_t(f) * std::size_t(components) + std::size_t(c)) * std::size_t(grid.size());
  }

  ScalarField field(int f, int c) const {
    const double* p = frame_component(f, c);
    return ScalarField(grid, std::vector<double>(p, p + grid.size()));
  }
  void set_field(int f, int c, const ScalarField& s) {
    require(s.grid == grid, "TimeDependentField::set_field: grid mismatch");
    std::copy(s.v.begin(), s.v.end(), frame_component(f, c));
  }
};

namespace detail {
// Order-4 first-derivative stencils over 5 uniformly spaced frames.
// offset = position of the evaluation frame within the stencil window.
inline const double* fd5_first(int offset) {
  static const double rows[5][5] = {
      {-25.0, 48.0, -36.0, 16.0, -3.0},
      {-3.0, -10.0, 18.0, -6.0, 1.0},
      {1.0, -8.0, 0.0, 8.0, -1.0},
      {-1.0, 6.0, -18.0, 10.0, 3.0},
      {3.0, -16.0, 36.0, -48.0, 25.0},
  };
  return rows[offset];
}
}  // namespace detail

// Order-4 time derivative of one component at one frame. Requires >= 5 frames.
inline ScalarField time_derivative(const TimeDependentField& u, int f, int c) {
  require(u.frames >= 5, "time_derivative: need at least 5 frames for the order-4 stencil");
  int start = std::clamp(f - 2, 0, u.frames - 5);
  int offset = f - start;
  const double* w = detail::fd5_first(offset);
  double inv = 1.0 / (12.0 * u.dt());
  ScalarField out(u.grid);
  std::int64_t N = u.grid.size();
  for (int j = 0; j < 5; ++j) {
    const double* src = u.frame_component(start + j, c);
    double wj = w[j] * inv;
    for (std::int64_t i = 0; i < N; ++i) out.v[std::size_t(i)] += wj * src[std::size_t(i)];
  }
  return out;
}

// Max over frames of the spatial C^k seminorm.
inline double seminorm(const TimeDependentField& u, int k) {
  double best = 0.0;
  for (int f = 0; f < u.frames; ++f)
    for (int c = 0; c < u.components; ++c) best = std::max(best, seminorm(u.field(f, c), k));
  return best;
}

}  // namespace eulerext
