#pragma once
// Riemannian structure on periodic grids: metric fields with per-node
// validation, Christoffel symbols, covariant calculus, divergence, vorticity,
// Laplace-Beltrami solves and Leray projection (Fourier-diagonal when flat,
// preconditioned CG otherwise).

#include <cmath>
#include <string>
#include <vector>

#include "core.hpp"
#include "field.hpp"

namespace eulerext {

using VectorField = std::vector<ScalarField>;  // contravariant components u^i
using OneForm = std::vector<ScalarField>;      // covariant components u_i

struct MetricField {
  PeriodicGrid grid;
  int d = 0;
  std::vector<ScalarField> g;     // d*d, row-major, symmetric
  std::vector<ScalarField> ginv;  // d*d
  ScalarField sqrt_det;
  bool flat = false;  // exactly the identity metric

  const ScalarField& at(int i, int j) const { return g[std::size_t(i * d + j)]; }
  const ScalarField& inv(int i, int j) const { return ginv[std::size_t(i * d + j)]; }
};

namespace detail {
// Cholesky of the d x d symmetric matrix a (row-major); returns false unless
// positive definite; on success det receives det(a).
inline bool cholesky_det(int d, const double* a, double& det) {
  double L[8][8];
  det = 1.0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i * d + j];
      for (int k = 0; k < d; ++k)
        if (k < j) s -= L[i][k] * L[j][k];
      if (i == j) {
        if (s <= 0.0) return false;
        L[i][i] = std::sqrt(s);
        det *= s;
      } else {
        L[i][j] = s / L[j][j];
      }
    }
  }
  return true;
}

// Inverse of a small symmetric positive definite matrix by Gauss-Jordan.
inline void invert_spd(int d, const double* a, double* out) {
  double m[8][16];
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      m[i][j] = a[i * d + j];
      m[i][d + j] = i == j ? 1.0 : 0.0;
    }
  }
  for (int c = 0; c < d; ++c) {
    int p = c;
    for (int r = c + 1; r < d; ++r)
      if (std::abs(m[r][c]) > std::abs(m[p][c])) p = r;
    for (int j = 0; j < 2 * d; ++j) std::swap(m[c][j], m[p][j]);
    double piv = m[c][c];
    for (int j = 0; j < 2 * d; ++j) m[c][j] /= piv;
    for (int r = 0; r < d; ++r) {
      if (r == c) continue;
      double f = m[r][c];
      if (f == 0.0) continue;
      for (int j = 0; j < 2 * d; ++j) m[r][j] -= f * m[c][j];
    }
  }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out[i * d + j] = m[i][d + j];
}
}  // namespace detail

// Assemble and validate a metric from sampled entries (row-major, d*d fields).
inline MetricField build_metric(const PeriodicGrid& grid, const std::vector<ScalarField>& entries) {
  int d = grid.d;
  require(int(entries.size()) == d * d, "build_metric: expected d*d component fields");
  for (const auto& e : entries) require(e.grid == grid, "build_metric: component grid mismatch");

  MetricField m;
  m.grid = grid;
  m.d = d;
  m.g = entries;
  m.ginv.assign(std::size_t(d * d), ScalarField(grid));
  m.sqrt_det = ScalarField(grid);

  std::int64_t N = grid.size();
  double a[64], inv[64], x[8];
  bool flat = true;
  for (std::int64_t f = 0; f < N; ++f) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double gij = entries[std::size_t(i * d + j)][f];
        double gji = entries[std::size_t(j * d + i)][f];
        if (std::abs(gij - gji) > 1e-14) {
          grid.node(f, x);
          throw std::invalid_argument("build_metric: metric not symmetric at node " + std::to_string(f));
        }
        a[i * d + j] = gij;
        if (gij != (i == j ? 1.0 : 0.0)) flat = false;
      }
    double det = 0.0;
    if (!detail::cholesky_det(d, a, det)) {
      grid.node(f, x);
      std::string where;
      for (int i = 0; i < d; ++i) where += (i ? "," : "(") + std::to_string(x[i]);
      throw std::invalid_argument("build_metric: metric not positive definite at node " + where + ")");
    }
    m.sqrt_det[f] = std::sqrt(det);
    detail::invert_spd(d, a, inv);
    for (int i = 0; i < d * d; ++i) m.ginv[std::size_t(i)][f] = inv[i];
  }
  m.flat = flat;
  return m;
}

inline MetricField flat_metric(const PeriodicGrid& grid) {
  std::vector<ScalarField> e;
  for (int i = 0; i < grid.d; ++i)
    for (int j = 0; j < grid.d; ++j) {
      ScalarField s(grid);
      if (i == j) std::fill(s.v.begin(), s.v.end(), 1.0);
      e.push_back(std::move(s));
    }
  return build_metric(grid, e);
}

inline OneForm metric_lower(const MetricField& m, const VectorField& u) {
  OneForm out(std::size_t(m.d), ScalarField(m.grid));
  std::int64_t N = m.grid.size();
  for (int i = 0; i < m.d; ++i)
    for (int j = 0; j < m.d; ++j) {
      const ScalarField& gij = m.at(i, j);
      for (std::int64_t f = 0; f < N; ++f) out[std::size_t(i)][f] += gij[f] * u[std::size_t(j)][f];
    }
  return out;
}

inline VectorField metric_raise(const MetricField& m, const OneForm& w) {
  VectorField out(std::size_t(m.d), ScalarField(m.grid));
  std::int64_t N = m.grid.size();
  for (int i = 0; i < m.d; ++i)
    for (int j = 0; j < m.d; ++j) {
      const ScalarField& gij = m.inv(i, j);
      for (std::int64_t f = 0; f < N; ++f) out[std::size_t(i)][f] += gij[f] * w[std::size_t(j)][f];
    }
  return out;
}

// Christoffel symbols of the Levi-Civita connection; index [k][i][j] flattened
// as (k*d+i)*d+j.
inline std::vector<ScalarField> christoffel(const MetricField& m) {
  int d = m.d;
  std::int64_t N = m.grid.size();
  // dg[l][i][j] = partial_l g_ij
  std::vector<ScalarField> dg(std::size_t(d * d * d), ScalarField(m.grid));
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      Spectrum c0 = spectrum_of(m.at(i, j));
      for (int l = 0; l < d; ++l) {
        Spectrum c = c0;
        spectral_derivative_inplace(m.grid, c, l, 1);
        ScalarField der = field_of(m.grid, c);
        dg[std::size_t((l * d + i) * d + j)] = der;
        dg[std::size_t((l * d + j) * d + i)] = std::move(der);
      }
    }
  std::vector<ScalarField> gamma(std::size_t(d * d * d), ScalarField(m.grid));
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        ScalarField& out = gamma[std::size_t((k * d + i) * d + j)];
        for (int l = 0; l < d; ++l) {
          const ScalarField& gkl = m.inv(k, l);
          const ScalarField& a = dg[std::size_t((i * d + l) * d + j)];
          const ScalarField& b = dg[std::size_t((j * d + l) * d + i)];
          const ScalarField& c = dg[std::size_t((l * d + i) * d + j)];
          for (std::int64_t f = 0; f < N; ++f)
            out[f] += 0.5 * gkl[f] * (a[f] + b[f] - c[f]);
        }
      }
  return gamma;
}

// nabla_j u^i = partial_j u^i + Gamma^i_{jl} u^l; index [i][j] as i*d+j.
inline std::vector<ScalarField> covariant_derivative_vector(const MetricField& m,
                                                            const std::vector<ScalarField>& gamma,
                                                            const VectorField& u) {
  int d = m.d;
  std::int64_t N = m.grid.size();
  std::vector<ScalarField> out(std::size_t(d * d), ScalarField(m.grid));
  for (int i = 0; i < d; ++i) {
    Spectrum c0 = spectrum_of(u[std::size_t(i)]);
    for (int j = 0; j < d; ++j) {
      Spectrum c = c0;
      spectral_derivative_inplace(m.grid, c, j, 1);
      out[std::size_t(i * d + j)] = field_of(m.grid, c);
      for (int l = 0; l < d; ++l) {
        const ScalarField& gam = gamma[std::size_t((i * d + j) * d + l)];
        ScalarField& o = out[std::size_t(i * d + j)];
        const ScalarField& ul = u[std::size_t(l)];
        for (std::int64_t f = 0; f < N; ++f) o[f] += gam[f] * ul[f];
      }
    }
  }
  return out;
}

// nabla_j w_i = partial_j w_i - Gamma^l_{ji} w_l; index [i][j] as i*d+j.
inline std::vector<ScalarField> covariant_derivative_oneform(const MetricField& m,
                                                             const std::vector<ScalarField>& gamma,
                                                             const OneForm& w) {
  int d = m.d;
  std::int64_t N = m.grid.size();
  std::vector<ScalarField> out(std::size_t(d * d), ScalarField(m.grid));
  for (int i = 0; i < d; ++i) {
    Spectrum c0 = spectrum_of(w[std::size_t(i)]);
    for (int j = 0; j < d; ++j) {
      Spectrum c = c0;
      spectral_derivative_inplace(m.grid, c, j, 1);
      out[std::size_t(i * d + j)] = field_of(m.grid, c);
      for (int l = 0; l < d; ++l) {
        const ScalarField& gam = gamma[std::size_t((l * d + j) * d + i)];
        ScalarField& o = out[std::size_t(i * d + j)];
        const ScalarField& wl = w[std::size_t(l)];
        for (std::int64_t f = 0; f < N; ++f) o[f] -= gam[f] * wl[f];
      }
    }
  }
  return out;
}

// div_g u = (1/sqrt g) partial_i (sqrt g u^i), spectrally differentiated.
inline ScalarField divergence(const MetricField& m, const VectorField& u) {
  std::int64_t N = m.grid.size();
  ScalarField acc(m.grid);
  for (int i = 0; i < m.d; ++i) {
    ScalarField prod(m.grid);
    const ScalarField& ui = u[std::size_t(i)];
    for (std::int64_t f = 0; f < N; ++f) prod[f] = m.sqrt_det[f] * ui[f];
    Spectrum c = spectrum_of(prod);
    spectral_derivative_inplace(m.grid, c, i, 1);
    ScalarField der = field_of(m.grid, c);
    for (std::int64_t f = 0; f < N; ++f) acc[f] += der[f];
  }
  for (std::int64_t f = 0; f < N; ++f) acc[f] /= m.sqrt_det[f];
  return acc;
}

// (d w)_{ij} = partial_i w_j - partial_j w_i; antisymmetric, index i*d+j.
inline std::vector<ScalarField> vorticity_two_form(const PeriodicGrid& grid, const OneForm& w) {
  int d = grid.d;
  std::vector<Spectrum> spec;
  for (int i = 0; i < d; ++i) spec.push_back(spectrum_of(w[std::size_t(i)]));
  std::vector<ScalarField> out(std::size_t(d * d), ScalarField(grid));
  std::int64_t N = grid.size();
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      Spectrum a = spec[std::size_t(j)];
      spectral_derivative_inplace(grid, a, i, 1);
      Spectrum b = spec[std::size_t(i)];
      spectral_derivative_inplace(grid, b, j, 1);
      ScalarField fa = field_of(grid, a), fb = field_of(grid, b);
      ScalarField& oij = out[std::size_t(i * d + j)];
      ScalarField& oji = out[std::size_t(j * d + i)];
      for (std::int64_t f = 0; f < N; ++f) {
        oij[f] = fa[f] - fb[f];
        oji[f] = -oij[f];
      }
    }
  return out;
}

// Integral over the torus with the metric volume element.
inline double integrate(const MetricField& m, const ScalarField& f) {
  double s = 0.0;
  std::int64_t N = m.grid.size();
  for (std::int64_t i = 0; i < N; ++i) s += f[i] * m.sqrt_det[i];
  return s / double(N);
}

namespace detail {
// Apply B p = -partial_i (sqrt g g^{ij} partial_j p); SPD on mean-zero fields.
inline void apply_weighted_laplacian(const MetricField& m, const std::vector<double>& p,
                                     std::vector<double>& out) {
  const PeriodicGrid& grid = m.grid;
  std::int64_t N = grid.size();
  ScalarField pf(grid, p);
  Spectrum c0 = spectrum_of(pf);
  std::vector<ScalarField> grad;
  for (int j = 0; j < grid.d; ++j) {
    Spectrum c = c0;
    spectral_derivative_inplace(grid, c, j, 1);
    grad.push_back(field_of(grid, c));
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (int i = 0; i < grid.d; ++i) {
    ScalarField q(grid);
    for (int j = 0; j < grid.d; ++j) {
      const ScalarField& w = m.inv(i, j);
      const ScalarField& gj = grad[std::size_t(j)];
      for (std::int64_t f = 0; f < N; ++f) q[f] += m.sqrt_det[f] * w[f] * gj[f];
    }
    Spectrum c = spectrum_of(q);
    spectral_derivative_inplace(grid, c, i, 1);
    ScalarField der = field_of(grid, c);
    for (std::int64_t f = 0; f < N; ++f) out[std::size_t(f)] -= der[f];
  }
}

// Flat inverse Laplacian preconditioner, zero-mean output.
inline void flat_inverse_laplacian(const PeriodicGrid& grid, const std::vector<double>& r,
                                   std::vector<double>& out) {
  ScalarField rf(grid, r);
  Spectrum c = spectrum_of(rf);
  std::int64_t N = grid.size();
  int idx[8];
  for (std::int64_t f = 0; f < N; ++f) {
    grid.unflatten(f, idx);
    double k2 = 0.0;
    for (int a = 0; a < grid.d; ++a) {
      double k = double(signed_freq(idx[a], grid.n[a]));
      k2 += k * k;
    }
    c[std::size_t(f)] = k2 == 0.0 ? 0.0 : c[std::size_t(f)] / (kTau * kTau * k2);
  }
  std::vector<double> v = fft_inverse_real(grid, c);
  out = std::move(v);
}
}  // namespace detail

struct LerayResult {
  VectorField projected;
  ScalarField potential;  // p with projected^i = L^i - g^{ij} partial_j p
  int iterations = 0;
};

// Leray decomposition of a contravariant field. Flat metrics are projected
// bin-by-bin; otherwise solve the weighted Poisson problem by CG with the flat
// inverse Laplacian as preconditioner (relative tolerance 1e-10, 500 iterations).
inline LerayResult leray_project(const MetricField& m, const VectorField& L) {
  const PeriodicGrid& grid = m.grid;
  int d = grid.d;
  std::int64_t N = grid.size();
  LerayResult res;
  res.projected.assign(std::size_t(d), ScalarField(grid));
  res.potential = ScalarField(grid);

  if (m.flat) {
    std::vector<Spectrum> spec;
    for (int i = 0; i < d; ++i) spec.push_back(spectrum_of(L[std::size_t(i)]));
    Spectrum pot(std::size_t(N), cplx(0.0, 0.0));
    int idx[8];
    for (std::int64_t f = 0; f < N; ++f) {
      grid.unflatten(f, idx);
      double k[8], k2 = 0.0;
      for (int a = 0; a < d; ++a) {
        k[a] = double(signed_freq(idx[a], grid.n[a]));
        k2 += k[a] * k[a];
      }
      if (k2 == 0.0) continue;
      cplx dot(0.0, 0.0);
      for (int a = 0; a < d; ++a) dot += k[a] * spec[std::size_t(a)][std::size_t(f)];
      for (int a = 0; a < d; ++a) spec[std::size_t(a)][std::size_t(f)] -= k[a] * dot / k2;
      // L = P L + grad p: grad p bin = i 2 pi k_a p_k, so p_k = dot/(i 2 pi k2)
      pot[std::size_t(f)] = dot / (cplx(0.0, 1.0) * kTau * k2);
    }
    for (int i = 0; i < d; ++i) res.projected[std::size_t(i)] = field_of(grid, spec[std::size_t(i)]);
    res.potential = field_of(grid, pot);
    return res;
  }

  // div_g(L - grad p) = 0 needs partial_i(sqrt g g^{ij} partial_j p) =
  // partial_i(sqrt g L^i); with B = -partial_i(sqrt g g^{ij} partial_j .)
  // that is B p = b, b = -partial_i(sqrt g L^i).
  std::vector<double> b(std::size_t(N), 0.0);
  for (int i = 0; i < d; ++i) {
    ScalarField prod(grid);
    const ScalarField& Li = L[std::size_t(i)];
    for (std::int64_t f = 0; f < N; ++f) prod[f] = m.sqrt_det[f] * Li[f];
    Spectrum c = spectrum_of(prod);
    spectral_derivative_inplace(grid, c, i, 1);
    ScalarField der = field_of(grid, c);
    for (std::int64_t f = 0; f < N; ++f) b[std::size_t(f)] -= der[f];
  }

  std::size_t NN = std::size_t(N);
  std::vector<double> p(NN, 0.0), r = b, z(NN), q(NN);
  double bnorm = 0.0;
  for (double v : b) bnorm += v * v;
  bnorm = std::sqrt(bnorm);

  // Absolute floor: for an already-solenoidal L the assembled b sits at the
  // roundoff of the derivative scale and a relative test can never be met.
  double lscale = 0.0;
  int nmax = 0;
  for (int a = 0; a < d; ++a) nmax = std::max(nmax, grid.n[a]);
  for (int i = 0; i < d; ++i) {
    double s2 = 0.0;
    const ScalarField& Li = L[std::size_t(i)];
    for (std::int64_t f = 0; f < N; ++f) {
      double v = m.sqrt_det[f] * Li[f];
      s2 += v * v;
    }
    lscale = std::max(lscale, std::sqrt(s2));
  }
  double floor_ = 1e-13 * lscale * kTau * 0.5 * double(nmax) * double(d);
  double tol = std::max(1e-10 * bnorm, floor_);

  int it = 0;
  if (bnorm > tol) {
    detail::flat_inverse_laplacian(grid, r, z);
    std::vector<double> s = z;
    double rz = 0.0;
    for (std::int64_t f = 0; f < N; ++f) rz += r[std::size_t(f)] * z[std::size_t(f)];
    for (it = 1; it <= 500; ++it) {
      detail::apply_weighted_laplacian(m, s, q);
      double sq = 0.0;
      for (std::int64_t f = 0; f < N; ++f) sq += s[std::size_t(f)] * q[std::size_t(f)];
      double alpha = rz / sq;
      double rnorm = 0.0;
      for (std::int64_t f = 0; f < N; ++f) {
        p[std::size_t(f)] += alpha * s[std::size_t(f)];
        r[std::size_t(f)] -= alpha * q[std::size_t(f)];
        rnorm += r[std::size_t(f)] * r[std::size_t(f)];
      }
      if (std::sqrt(rnorm) <= tol) break;
      if (it == 500)
        throw std::runtime_error("leray_project: CG did not reach 1e-10 within 500 iterations");
      detail::flat_inverse_laplacian(grid, r, z);
      double rz_new = 0.0;
      for (std::int64_t f = 0; f < N; ++f) rz_new += r[std::size_t(f)] * z[std::size_t(f)];
      double beta = rz_new / rz;
      rz = rz_new;
      for (std::int64_t f = 0; f < N; ++f) s[std::size_t(f)] = z[std::size_t(f)] + beta * s[std::size_t(f)];
    }
  }
  res.iterations = it;

  double mean = 0.0;
  for (double v : p) mean += v;
  mean /= double(N);
  for (double& v : p) v -= mean;
  res.potential = ScalarField(grid, p);

  Spectrum c0 = spectrum_of(res.potential);
  std::vector<ScalarField> grad;
  for (int j = 0; j < d; ++j) {
    Spectrum c = c0;
    spectral_derivative_inplace(grid, c, j, 1);
    grad.push_back(field_of(grid, c));
  }
  for (int i = 0; i < d; ++i) {
    ScalarField& o = res.projected[std::size_t(i)];
    o = L[std::size_t(i)];
    for (int j = 0; j < d; ++j) {
      const ScalarField& w = m.inv(i, j);
      const ScalarField& gj = grad[std::size_t(j)];
      for (std::int64_t f = 0; f < N; ++f) o[f] -= w[f] * gj[f];
    }
  }
  return res;
}

// Project a one-form by raising, projecting, and subtracting the gradient part:
// sigma_i = w_i - partial_i p with Delta_g p = div_g(w sharp).
struct LerayOneFormResult {
  OneForm projected;
  ScalarField potential;
};

inline LerayOneFormResult leray_project_oneform(const MetricField& m, const OneForm& w) {
  LerayResult r = leray_project(m, metric_raise(m, w));
  LerayOneFormResult out;
  out.potential = r.potential;
  Spectrum c0 = spectrum_of(r.potential);
  out.projected.assign(std::size_t(m.d), ScalarField(m.grid));
  std::int64_t N = m.grid.size();
  for (int i = 0; i < m.d; ++i) {
    Spectrum c = c0;
    spectral_derivative_inplace(m.grid, c, i, 1);
    ScalarField dp = field_of(m.grid, c);
    ScalarField& o = out.projected[std::size_t(i)];
    o = w[std::size_t(i)];
    for (std::int64_t f = 0; f < N; ++f) o[f] -= dp[f];
  }
  return out;
}

}  // namespace eulerext
