#pragma once
// The force a flow needs and its separable spectral model.
//
//   material_force   G_i = -(dt u_i + u^j grad_j u_i), the covariant force
//                    one-form that would sustain the flow.
//   image_samples    scatter the force onto image coordinates: for each
//                    direction i a sample ((A(t,x) mod 1, x^i mod 1), G_i).
//   fit_separable    joint ridge least squares over the (d+1)-dimensional
//                    trigonometric box [-K,K]^(d+1); terms are emitted one
//                    per circle mode n, so every h factor is a single mode.
//
// The normal equations' Gram matrix is multilevel Toeplitz (differences of
// sample phases), assembled by a type-1 scattered sum. Small boxes are solved
// densely; large ones by bandwidth continuation: solve a coarse box densely,
// embed the result as the initial guess for twice the bandwidth, and repeat
// with restarted CG until the sample misfit stops improving. The warm start
// cancels the in-box residual each time, so CG only has to resolve the
// freshly added modes — the full cold system is never iterated.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "core.hpp"
#include "field.hpp"
#include "flowgen.hpp"
#include "geometry.hpp"
#include "lagrange.hpp"
#include "nufft.hpp"

namespace eulerext {

// ---------------------------------------------------------------------------
// material force

inline TimeDependentField material_force(const Flow& flow) {
  require(flow.u.frames >= 5,
          "material_force: need at least 5 frames for the order-4 time stencil");
  const PeriodicGrid& grid = flow.grid();
  int d = flow.d();
  // lowered velocity per frame
  TimeDependentField low(grid, d, flow.u.frames, flow.T);
  for (int f = 0; f < flow.u.frames; ++f) {
    VectorField uf;
    for (int c = 0; c < d; ++c) uf.push_back(flow.u.field(f, c));
    OneForm ui = metric_lower(flow.metric, uf);
    for (int c = 0; c < d; ++c) low.set_field(f, c, ui[std::size_t(c)]);
  }
  TimeDependentField G(grid, d, flow.u.frames, flow.T);
  std::int64_t N = grid.size();
  std::vector<ScalarField> gamma = christoffel(flow.metric);
  for (int f = 0; f < flow.u.frames; ++f) {
    VectorField uf;
    for (int c = 0; c < d; ++c) uf.push_back(flow.u.field(f, c));
    OneForm ui;
    for (int c = 0; c < d; ++c) ui.push_back(low.field(f, c));
    std::vector<ScalarField> cov = covariant_derivative_oneform(flow.metric, gamma, ui);
    for (int i = 0; i < d; ++i) {
      ScalarField dt = time_derivative(low, f, i);
      double* out = G.frame_component(f, i);
      for (std::int64_t m = 0; m < N; ++m) {
        double adv = 0.0;
        for (int j = 0; j < d; ++j) adv += uf[std::size_t(j)][m] * cov[std::size_t(i * d + j)][m];
        out[m] = -(dt[m] + adv);
      }
    }
  }
  return G;
}

// ---------------------------------------------------------------------------
// image samples

struct SampleSet {
  int D = 0;                 // flow dimension + 1 (the trailing circle axis)
  std::vector<double> pts;   // size S*D, wrapped into [0,1)
  std::vector<double> val;   // size S
  std::size_t size() const { return val.size(); }
};

namespace detail {
inline std::string bit_key(const double* p, int D) {
  std::string key(std::size_t(D) * 8, '\0');
  std::memcpy(key.data(), p, std::size_t(D) * 8);
  return key;
}
}  // namespace detail

// One sample set per direction i: point (A(t,x) mod 1, x^i mod 1), value
// G_i(t,x), taken at every node of every frame_stride-th frame. Points that
// repeat bit-exactly have their values averaged.
inline std::vector<SampleSet> image_samples(const LabelMap& lm, const TimeDependentField& G,
                                            int frame_stride = 1) {
  require(lm.A.grid == G.grid, "image_samples: grid mismatch");
  require(lm.A.frames == G.frames, "image_samples: frame count mismatch");
  require(frame_stride >= 1, "image_samples: stride must be positive");
  const PeriodicGrid& grid = G.grid;
  int d = G.components;
  int D = d + 1;
  std::int64_t N = grid.size();
  std::vector<SampleSet> out(static_cast<std::size_t>(d));
  double pt[8];
  double xc[8];
  for (int i = 0; i < d; ++i) {
    SampleSet& set = out[std::size_t(i)];
    set.D = D;
    std::unordered_map<std::string, std::pair<double, int>> dedupe;
    std::vector<std::string> order;
    for (int f = 0; f < G.frames; f += frame_stride) {
      const double* g = G.frame_component(f, i);
      for (std::int64_t m = 0; m < N; ++m) {
        grid.node(m, xc);
        for (int a = 0; a < d; ++a) pt[a] = wrap_unit(lm.A.frame_component(f, a)[m]);
        pt[d] = wrap_unit(xc[i]);
        std::string key = detail::bit_key(pt, D);
        auto it = dedupe.find(key);
        if (it == dedupe.end()) {
          dedupe.emplace(std::move(key), std::make_pair(g[m], 1));
          order.push_back(detail::bit_key(pt, D));
        } else {
          it->second.first += g[m];
          it->second.second += 1;
        }
      }
    }
    set.pts.reserve(order.size() * std::size_t(D));
    set.val.reserve(order.size());
    for (const std::string& key : order) {
      const auto& acc = dedupe.at(key);
      double p[8];
      std::memcpy(p, key.data(), std::size_t(D) * 8);
      for (int a = 0; a < D; ++a) set.pts.push_back(p[a]);
      set.val.push_back(acc.first / acc.second);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// separable model

struct SeparableTerm {
  int K = 0;
  std::vector<cplx> fcoef;  // (2K+1)^d box over the flow axes, index k+K
  std::vector<cplx> hcoef;  // 2K+1 circle modes, index n+K
};

struct SeparableForcing {
  int d = 0;
  std::vector<std::vector<SeparableTerm>> dirs;  // per direction i

  // sum_m f_m(a) h_m(y), real part
  double evaluate(int i, const double* a, double y) const {
    cplx total(0.0, 0.0);
    for (const SeparableTerm& t : dirs[std::size_t(i)]) {
      int nm = 2 * t.K + 1;
      cplx f(0.0, 0.0);
      std::int64_t box = 1;
      for (int ax = 0; ax < d; ++ax) box *= nm;
      for (std::int64_t m = 0; m < box; ++m) {
        std::int64_t rem = m;
        double phase = 0.0;
        for (int ax = d - 1; ax >= 0; --ax) {
          int k = int(rem % nm) - t.K;
          rem /= nm;
          phase += k * a[ax];
        }
        f += t.fcoef[std::size_t(m)] * std::polar(1.0, kTau * phase);
      }
      cplx h(0.0, 0.0);
      for (int n = -t.K; n <= t.K; ++n)
        h += t.hcoef[std::size_t(n + t.K)] * std::polar(1.0, kTau * n * y);
      total += f * h;
    }
    return total.real();
  }
};

struct FitDirectionReport {
  std::size_t samples = 0;
  std::int64_t unknowns = 0;
  double lambda = 0.0;
  int iterations = 0;        // 0 on the dense path
  double rms_residual = 0.0;
  double sup_residual = 0.0;
  double value_scale = 0.0;  // sup |sample value|
  int terms = 0;
};

struct FitResult {
  SeparableForcing forcing;
  std::vector<FitDirectionReport> reports;
};

inline constexpr std::int64_t kDenseFitLimit = 1100;

namespace detail {

// Hermitian positive definite solve by in-place Cholesky; throws the shared
// ill-conditioning diagnostic when a pivot collapses.
inline void dense_cholesky_solve(std::vector<cplx>& A, std::vector<cplx>& b, std::int64_t n) {
  double scale = 0.0;
  for (std::int64_t j = 0; j < n; ++j) scale = std::max(scale, A[std::size_t(j * n + j)].real());
  for (std::int64_t j = 0; j < n; ++j) {
    cplx diag = A[std::size_t(j * n + j)];
    for (std::int64_t k = 0; k < j; ++k) diag -= std::norm(A[std::size_t(j * n + k)]);
    double dj = diag.real();
    if (!(dj > scale * 1e-14))
      throw std::runtime_error(
          "fit_separable: normal equations are numerically singular; "
          "increase lambda or reduce K");
    double root = std::sqrt(dj);
    A[std::size_t(j * n + j)] = root;
    for (std::int64_t i = j + 1; i < n; ++i) {
      cplx v = A[std::size_t(i * n + j)];
      for (std::int64_t k = 0; k < j; ++k)
        v -= A[std::size_t(i * n + k)] * std::conj(A[std::size_t(j * n + k)]);
      A[std::size_t(i * n + j)] = v / root;
    }
  }
  // forward L y = b
  for (std::int64_t i = 0; i < n; ++i) {
    cplx v = b[std::size_t(i)];
    for (std::int64_t k = 0; k < i; ++k) v -= A[std::size_t(i * n + k)] * b[std::size_t(k)];
    b[std::size_t(i)] = v / A[std::size_t(i * n + i)].real();
  }
  // backward L^H x = y
  for (std::int64_t i = n - 1; i >= 0; --i) {
    cplx v = b[std::size_t(i)];
    for (std::int64_t k = i + 1; k < n; ++k)
      v -= std::conj(A[std::size_t(k * n + i)]) * b[std::size_t(k)];
    b[std::size_t(i)] = v / A[std::size_t(i * n + i)].real();
  }
}

inline std::int64_t mode_box_size(int D, int K) {
  std::int64_t u = 1;
  for (int a = 0; a < D; ++a) u *= 2 * K + 1;
  return u;
}

// ridge weights (1 + |k|^2 + n^2)^2 over the (2K+1)^D box, circle mode last
inline std::vector<double> ridge_weights(int D, int K) {
  int nm = 2 * K + 1;
  std::int64_t unknowns = mode_box_size(D, K);
  std::vector<double> omega(static_cast<std::size_t>(unknowns));
  for (std::int64_t m = 0; m < unknowns; ++m) {
    std::int64_t rem = m;
    double q = 1.0;
    for (int a = D - 1; a >= 0; --a) {
      int k = int(rem % nm) - K;
      rem /= nm;
      q += double(k) * double(k);
    }
    omega[std::size_t(m)] = q * q;
  }
  return omega;
}

// centered sub-box |k|_inf <= Ksub of a coefficient box |k|_inf <= Kfull
inline std::vector<cplx> central_box(const std::vector<cplx>& full, int D, int Kfull, int Ksub) {
  int nf = 2 * Kfull + 1, ns = 2 * Ksub + 1;
  std::int64_t total = mode_box_size(D, Ksub);
  std::vector<cplx> out(static_cast<std::size_t>(total));
  for (std::int64_t m = 0; m < total; ++m) {
    std::int64_t rem = m, src = 0, stride = 1;
    for (int a = D - 1; a >= 0; --a) {
      src += stride * (rem % ns + (Kfull - Ksub));
      stride *= nf;
      rem /= ns;
    }
    out[std::size_t(m)] = full[std::size_t(src)];
  }
  return out;
}

// embed a coefficient box |k|_inf <= Ksub into |k|_inf <= Kfull, zero outside
inline std::vector<cplx> embed_box(const std::vector<cplx>& sub, int D, int Ksub, int Kfull) {
  int nf = 2 * Kfull + 1, ns = 2 * Ksub + 1;
  std::int64_t total = mode_box_size(D, Ksub);
  std::vector<cplx> out(static_cast<std::size_t>(mode_box_size(D, Kfull)), cplx(0.0, 0.0));
  for (std::int64_t m = 0; m < total; ++m) {
    std::int64_t rem = m, dst = 0, stride = 1;
    for (int a = D - 1; a >= 0; --a) {
      dst += stride * (rem % ns + (Kfull - Ksub));
      stride *= nf;
      rem /= ns;
    }
    out[std::size_t(dst)] = sub[std::size_t(m)];
  }
  return out;
}

// dense normal equations from the difference table (modes up to 2K per axis)
inline std::vector<cplx> dense_ridge_solve(const std::vector<cplx>& tbl,
                                           const std::vector<cplx>& rhs,
                                           const std::vector<double>& omega, double lam, int D,
                                           int K) {
  int nm = 2 * K + 1, nd = 4 * K + 1;
  std::int64_t n = mode_box_size(D, K);
  std::vector<cplx> A(static_cast<std::size_t>(n * n));
  std::vector<int> kr(static_cast<std::size_t>(D)), kc(static_cast<std::size_t>(D));
  for (std::int64_t r = 0; r < n; ++r) {
    std::int64_t rem = r;
    for (int a = D - 1; a >= 0; --a) {
      kr[std::size_t(a)] = int(rem % nm) - K;
      rem /= nm;
    }
    for (std::int64_t cc = 0; cc < n; ++cc) {
      rem = cc;
      std::int64_t bin = 0;
      for (int a = D - 1; a >= 0; --a) {
        kc[std::size_t(a)] = int(rem % nm) - K;
        rem /= nm;
      }
      for (int a = 0; a < D; ++a) bin = bin * nd + (kr[std::size_t(a)] - kc[std::size_t(a)] + 2 * K);
      A[std::size_t(r * n + cc)] = tbl[std::size_t(bin)];
    }
    A[std::size_t(r * n + r)] += lam * omega[std::size_t(r)];
  }
  std::vector<cplx> c = rhs;
  dense_cholesky_solve(A, c, n);
  return c;
}

inline double sample_rms(const SampleSet& set, const std::vector<cplx>& c, int D, int K) {
  std::vector<cplx> eval = nufft::type2(set.pts, c, D, K);
  double rss = 0.0;
  for (std::size_t s = 0; s < set.size(); ++s) {
    double r = eval[s].real() - set.val[s];
    rss += r * r;
  }
  return std::sqrt(rss / double(set.size()));
}

struct StageSolveInfo {
  int iterations = 0;
  double relative_residual = 0.0;
};

// Bandwidth continuation for one direction's normal equations. tbl/rhs are
// the full-bandwidth scattered sums; coarse stages read centered sub-boxes
// of them (the sums are nested in the mode index). Each iterative stage runs
// CG in restarted chunks from the embedded previous solution and keeps the
// iterate with the smallest sample misfit, so the returned misfit never rises
// when K grows.
inline std::vector<cplx> ridge_continuation(const SampleSet& set, const std::vector<cplx>& tbl,
                                            const std::vector<cplx>& rhs, double lam, int D, int K,
                                            StageSolveInfo& info) {
  double vrms = 0.0;
  for (double v : set.val) vrms += v * v;
  vrms = std::sqrt(vrms / double(set.size()));
  if (vrms <= 1e-14) {
    // numerically zero data: the zero model fits it exactly, and CG residual
    // ratios on rounding dust would be meaningless
    return std::vector<cplx>(static_cast<std::size_t>(mode_box_size(D, K)));
  }

  std::vector<int> stages;
  for (int k = std::min(4, K); k < K; k = std::min(2 * k, K)) stages.push_back(k);
  stages.push_back(K);

  std::vector<cplx> x;
  int prevK = -1;
  for (int ks : stages) {
    std::vector<cplx> tbl_s = ks == K ? tbl : central_box(tbl, D, 2 * K, 2 * ks);
    std::vector<cplx> rhs_s = ks == K ? rhs : central_box(rhs, D, K, ks);
    std::vector<double> omega = ridge_weights(D, ks);
    if (mode_box_size(D, ks) <= kDenseFitLimit) {
      x = dense_ridge_solve(tbl_s, rhs_s, omega, lam, D, ks);
    } else {
      std::vector<cplx> cur = prevK >= 0 ? embed_box(x, D, prevK, ks)
                                         : std::vector<cplx>(static_cast<std::size_t>(
                                               mode_box_size(D, ks)));
      nufft::ToeplitzOperator op(tbl_s, D, ks);
      const int chunk = 500;
      const int max_chunks = ks == K ? 8 : 5;
      const bool dbg = std::getenv("EULEREXT_FIT_DEBUG") != nullptr;
      double best_rms = sample_rms(set, cur, D, ks);
      if (dbg)
        std::fprintf(stderr, "fit stage K=%d warm rms %.3e\n", ks, best_rms);
      std::vector<cplx> best = cur;
      for (int ch = 0; ch < max_chunks; ++ch) {
        nufft::RidgeSolveResult res = nufft::ridge_cg(op, omega, lam, rhs_s, 1e-12, chunk, &cur);
        cur = std::move(res.c);
        info.iterations += res.iterations;
        info.relative_residual = res.relative_residual;
        double rms = sample_rms(set, cur, D, ks);
        if (dbg)
          std::fprintf(stderr, "fit stage K=%d chunk %d relres %.3e rms %.3e\n", ks, ch,
                       res.relative_residual, rms);
        bool improved = rms < best_rms;
        if (improved) {
          best = cur;
        }
        bool stalled = rms > 0.7 * best_rms;  // < 30% gain in a whole chunk
        if (improved) best_rms = rms;
        if (res.converged || stalled) break;
      }
      x = std::move(best);
    }
    prevK = ks;
  }
  return x;
}

}  // namespace detail

// Joint ridge fit of all directions. lambda = 0 selects the default
// 1e-6 * (sample count); the penalty weight per mode (k, n) is
// (1 + |k|^2 + n^2)^2.
inline FitResult fit_separable(const std::vector<SampleSet>& samples, int K, double lambda = 0.0) {
  require(K >= 0, "fit_separable: K must be nonnegative");
  require(!samples.empty(), "fit_separable: no sample sets");
  FitResult result;
  int d = int(samples.size());
  result.forcing.d = d;
  result.forcing.dirs.resize(std::size_t(d));

  // components that are numerically zero relative to the strongest one get no
  // terms at all: fitting them would only model rounding dust
  double global_scale = 0.0;
  for (const SampleSet& set : samples)
    for (double v : set.val) global_scale = std::max(global_scale, std::abs(v));

  for (int i = 0; i < d; ++i) {
    const SampleSet& set = samples[std::size_t(i)];
    require(set.D == d + 1, "fit_separable: sample dimension mismatch");
    std::size_t S = set.size();
    require(S > 0, "fit_separable: empty sample set");
    int D = set.D;
    double dir_scale = 0.0, dir_rss = 0.0;
    for (double v : set.val) {
      dir_scale = std::max(dir_scale, std::abs(v));
      dir_rss += v * v;
    }
    if (dir_scale <= 1e-12 * global_scale) {
      FitDirectionReport rep;
      rep.samples = S;
      rep.unknowns = 0;
      rep.lambda = lambda;
      rep.rms_residual = std::sqrt(dir_rss / double(S));
      rep.sup_residual = dir_scale;
      rep.value_scale = dir_scale;
      rep.terms = 0;
      result.reports.push_back(rep);
      continue;
    }
    int nm = 2 * K + 1;
    std::int64_t unknowns = 1;
    for (int a = 0; a < D; ++a) unknowns *= nm;

    double lam = lambda == 0.0 ? 1e-6 * double(S) : lambda;

    // Gram differences and right-hand side by scattered sums
    std::vector<double> ones(S, 1.0);
    std::vector<cplx> tbl = nufft::type1(set.pts, ones, D, 2 * K);
    std::vector<cplx> rhs = nufft::type1(set.pts, set.val, D, K);

    std::vector<cplx> c;
    int iterations = 0;
    if (unknowns <= kDenseFitLimit) {
      c = detail::dense_ridge_solve(tbl, rhs, detail::ridge_weights(D, K), lam, D, K);
    } else {
      detail::StageSolveInfo info;
      c = detail::ridge_continuation(set, tbl, rhs, lam, D, K, info);
      iterations = info.iterations;
      if (info.relative_residual > 1e-4) {
        // distinguish a genuinely intractable system from a residual ratio
        // degraded by near-zero data: only a solve that also leaves a large
        // relative misfit is declared sick
        double vrms = 0.0, mrms = detail::sample_rms(set, c, D, K);
        for (double v : set.val) vrms += v * v;
        vrms = std::sqrt(vrms / double(S));
        if (mrms > 1e-3 * vrms) {
          std::ostringstream msg;
          msg << "fit_separable: normal equations are numerically singular "
                 "(iterative solve stalled at relative residual "
              << info.relative_residual << "); increase lambda or reduce K";
          throw std::runtime_error(msg.str());
        }
      }
    }

    // real data: enforce the conjugate symmetry c_{-kappa} = conj(c_kappa)
    for (std::int64_t m = 0; m < unknowns; ++m) {
      std::int64_t rev = unknowns - 1 - m;  // full box reversal negates every mode
      if (rev < m) break;
      cplx avg = 0.5 * (c[std::size_t(m)] + std::conj(c[std::size_t(rev)]));
      c[std::size_t(m)] = avg;
      c[std::size_t(rev)] = std::conj(avg);
    }

    // prune negligible circle modes: amplitude proxy per n is max_k |c_{k,n}|
    // (a sum would let solver dust accumulated over the whole k-box outvote
    // the relative cut)
    std::int64_t box = unknowns / nm;  // flow-axis box size
    std::vector<double> amp(static_cast<std::size_t>(nm), 0.0);
    for (std::int64_t m = 0; m < unknowns; ++m)
      amp[std::size_t(m % nm)] = std::max(amp[std::size_t(m % nm)], std::abs(c[std::size_t(m)]));
    double peak = 0.0;
    for (double v : amp) peak = std::max(peak, v);
    double cut = 1e-9 * peak;
    for (std::int64_t m = 0; m < unknowns; ++m)
      if (amp[std::size_t(m % nm)] <= cut) c[std::size_t(m)] = cplx(0.0, 0.0);

    // residual of the (pruned) model on its own samples
    std::vector<cplx> eval = nufft::type2(set.pts, c, D, K);
    double rss = 0.0, sup = 0.0, scale = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      double r = eval[s].real() - set.val[s];
      rss += r * r;
      sup = std::max(sup, std::abs(r));
      scale = std::max(scale, std::abs(set.val[s]));
    }

    // emit one term per surviving circle mode, ordered (|n|, n)
    std::vector<SeparableTerm>& terms = result.forcing.dirs[std::size_t(i)];
    for (int rank = 0; rank < nm; ++rank) {
      int n = (rank + 1) / 2 * ((rank % 2) ? 1 : -1);  // 0, 1, -1, 2, -2, ...
      if (rank == 0) n = 0;
      if (amp[std::size_t(n + K)] <= cut) continue;
      SeparableTerm t;
      t.K = K;
      t.fcoef.assign(static_cast<std::size_t>(box), cplx(0.0, 0.0));
      t.hcoef.assign(static_cast<std::size_t>(nm), cplx(0.0, 0.0));
      t.hcoef[std::size_t(n + K)] = cplx(1.0, 0.0);
      for (std::int64_t b = 0; b < box; ++b) t.fcoef[std::size_t(b)] = c[std::size_t(b * nm + (n + K))];
      terms.push_back(std::move(t));
    }

    FitDirectionReport rep;
    rep.samples = S;
    rep.unknowns = unknowns;
    rep.lambda = lam;
    rep.iterations = iterations;
    rep.rms_residual = std::sqrt(rss / double(S));
    rep.sup_residual = sup;
    rep.value_scale = scale;
    rep.terms = int(terms.size());
    result.reports.push_back(rep);
  }
  return result;
}

// ---------------------------------------------------------------------------
// serialization: u32 direction count; per direction u32 term count; per term
// u32 K, then (2K+1)^d complex float64 pairs for f (row-major box, index
// k+K, last axis fastest) and 2K+1 pairs for h (index n+K).

inline void write_forcing(const std::string& path, const SeparableForcing& f) {
  std::ofstream os(path, std::ios::binary);
  require(bool(os), "write_forcing: cannot open " + path);
  auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto f64 = [&](double v) { os.write(reinterpret_cast<const char*>(&v), 8); };
  u32(std::uint32_t(f.d));
  for (int i = 0; i < f.d; ++i) {
    const auto& terms = f.dirs[std::size_t(i)];
    u32(std::uint32_t(terms.size()));
    for (const SeparableTerm& t : terms) {
      u32(std::uint32_t(t.K));
      for (const cplx& v : t.fcoef) {
        f64(v.real());
        f64(v.imag());
      }
      for (const cplx& v : t.hcoef) {
        f64(v.real());
        f64(v.imag());
      }
    }
  }
  require(bool(os), "write_forcing: write failed for " + path);
}

inline SeparableForcing read_forcing(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "read_forcing: cannot open " + path);
  auto u32 = [&]() {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    require(bool(is), "read_forcing: truncated file " + path);
    return v;
  };
  auto f64 = [&]() {
    double v = 0.0;
    is.read(reinterpret_cast<char*>(&v), 8);
    require(bool(is), "read_forcing: truncated file " + path);
    return v;
  };
  SeparableForcing f;
  f.d = int(u32());
  require(f.d >= 1 && f.d <= 8, "read_forcing: implausible direction count in " + path);
  f.dirs.resize(std::size_t(f.d));
  for (int i = 0; i < f.d; ++i) {
    std::uint32_t m = u32();
    require(m <= 100000, "read_forcing: implausible term count in " + path);
    for (std::uint32_t t = 0; t < m; ++t) {
      SeparableTerm term;
      term.K = int(u32());
      require(term.K >= 0 && term.K <= 4096, "read_forcing: implausible K in " + path);
      std::int64_t box = 1;
      for (int a = 0; a < f.d; ++a) box *= 2 * term.K + 1;
      term.fcoef.resize(static_cast<std::size_t>(box));
      for (auto& v : term.fcoef) {
        double re = f64(), im = f64();
        v = cplx(re, im);
      }
      term.hcoef.resize(std::size_t(2 * term.K + 1));
      for (auto& v : term.hcoef) {
        double re = f64(), im = f64();
        v = cplx(re, im);
      }
      f.dirs[std::size_t(i)].push_back(std::move(term));
    }
  }
  return f;
}

}  // namespace eulerext
