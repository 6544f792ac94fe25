#pragma once
// Forward pseudospectral solver on the periodic base: classical RK4 in time,
// spectral derivatives in space, 2/3-rule dealiasing on every quadratic
// product, Leray projection per stage.  The evolved state is
//
//   u        contravariant velocity (projected each stage, re-projected per
//            step so divergence never accumulates),
//   labels   back-to-label map A, advected as d unwrapped scalars.  A itself
//            is not periodic; its deviation from the identity is, so the
//            identity part is split off and advected analytically:
//            d/dt (A - x) = -u - u . grad(A - x),
//   rho_s    transported densities (optional), driving a buoyancy force
//            rho_s h_s(x^i) along the profile axes.
//
// Forcing enters as F(A(t,x), x) for a fitted separable forcing — the label
// factors are sampled at the solver's own labels with the shared spectral
// stencil sampler — plus an optional fixed field scaled by a knob, which is
// what stability experiments perturb.  Pressure is recovered diagnostically
// at emitted frames from the projection potential of the instantaneous
// right-hand side.
//
// The solver refuses to start when max|u0| dt max(n) exceeds the CFL bound
// and aborts with the step index once any field leaves [-guard, guard].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "extender.hpp"
#include "io.hpp"

namespace eulerext {

// One buoyancy profile: an axis table for g~ on `direction` and its
// derivative, matching the certificate's slot tables.
struct BuoyancySlot {
  int direction = 0;
  std::vector<double> g;  // profile on the axis lattice
  std::vector<double> h;  // its derivative on the same lattice
};

struct SolverProblem {
  MetricField metric;
  VectorField u0;                            // divergence-free initial velocity
  std::optional<SeparableForcing> forcing;   // evaluated at (A(t,x), x)
  VectorField force_mode;                    // optional fixed extra force
  double force_mode_scale = 0.0;
  std::vector<BuoyancySlot> slots;           // buoyancy profiles
  std::vector<ScalarField> rho0;             // one density per slot
};

struct SolverConfig {
  double T = 1.0;
  double dt = 1.0 / 256.0;
  int emit_stride = 1;          // keep every emit_stride-th step
  bool track_labels = true;     // forced on when separable forcing is present
  double cfl_limit = 0.5;
  double blowup_guard = 1e6;
};

struct SolverState {
  double t = 0.0;
  VectorField u;
  std::vector<ScalarField> labels;  // full A components (identity added back)
  std::vector<ScalarField> rho;
  ScalarField pressure;
};

struct Trajectory {
  PeriodicGrid grid;
  MetricField metric;
  int d = 0;
  int nslots = 0;
  double T = 0.0, dt = 0.0;
  int emit_stride = 1;
  bool has_labels = false;
  TimeDependentField u;         // d components per emitted frame
  TimeDependentField labels;    // displacement A - x (d components)
  TimeDependentField rho;       // nslots components (absent when nslots = 0)
  TimeDependentField pressure;  // diagnostic, 1 component
  // per-step energy trace (every step, not only emitted frames)
  std::vector<double> energy_times;
  std::vector<double> energy_horizontal;
  std::vector<double> energy_total;

  int frames() const { return u.frames; }
  double time(int f) const { return u.time(f); }

  SolverState state(int f) const {
    require(f >= 0 && f < u.frames, "Trajectory::state: frame out of range");
    SolverState st;
    st.t = u.time(f);
    for (int c = 0; c < d; ++c) st.u.push_back(u.field(f, c));
    if (has_labels) {
      int idx[8];
      for (int c = 0; c < d; ++c) {
        ScalarField a = labels.field(f, c);
        for (std::int64_t p = 0; p < grid.size(); ++p) {
          grid.unflatten(p, idx);
          a[p] += grid.coord(c, idx[c]);
        }
        st.labels.push_back(std::move(a));
      }
    }
    for (int s = 0; s < nslots; ++s) st.rho.push_back(rho.field(f, s));
    st.pressure = pressure.field(f, 0);
    return st;
  }
};

namespace detail {

// Zero every spectral bin with any |k_j| > n_j/3; the classical rule that
// keeps quadratic products alias-free.
inline void dealias_23(ScalarField& f) {
  const PeriodicGrid& g = f.grid;
  std::vector<cplx> c = fft_forward(g, f.v.data());
  std::int64_t M = g.size();
  int idx[8];
  for (std::int64_t b = 0; b < M; ++b) {
    g.unflatten(b, idx);
    bool keep = true;
    for (int a = 0; a < g.d; ++a) {
      int k = signed_freq(idx[a], g.n[std::size_t(a)]);
      if (3 * std::abs(k) > g.n[std::size_t(a)]) {
        keep = false;
        break;
      }
    }
    if (!keep) c[std::size_t(b)] = cplx(0.0, 0.0);
  }
  f.v = fft_inverse_real(g, c);
}

// H^k seminorm squared via the spectrum: sum over bins of |c|^2 |2 pi k|^(2k).
inline double hk_seminorm2(const ScalarField& f, int k) {
  const PeriodicGrid& g = f.grid;
  std::vector<cplx> c = fft_forward(g, f.v.data());
  std::int64_t M = g.size();
  int idx[8];
  double acc = 0.0;
  for (std::int64_t b = 0; b < M; ++b) {
    g.unflatten(b, idx);
    double w2 = 0.0;
    for (int a = 0; a < g.d; ++a) {
      double w = kTau * signed_freq(idx[a], g.n[std::size_t(a)]);
      w2 += w * w;
    }
    double mul = 1.0;
    for (int j = 0; j < k; ++j) mul *= w2;
    acc += mul * std::norm(c[std::size_t(b)]);
  }
  return acc;
}

// Sampler over the realified label factors of a separable forcing: one field
// per real term, shared stencil, order and padding as for certificate
// densities.  Terms keep their axis-profile identity (flat / cos n / sin n).
struct ForcingSampler {
  std::vector<LocalizedTerm> terms;
  std::vector<std::vector<double>> htab;  // per-term axis table on its axis
  FastSamplerGroup group;
  int d = 0;

  ForcingSampler() = default;
  ForcingSampler(const SeparableForcing& F, const PeriodicGrid& grid)
      : terms(detail::realify_terms(F)), d(F.d) {
    int K = 0;
    for (const LocalizedTerm& t : terms) K = std::max(K, t.K);
    htab.resize(terms.size());
    for (std::size_t m = 0; m < terms.size(); ++m) {
      const LocalizedTerm& t = terms[m];
      int n = grid.n[std::size_t(t.direction)];
      std::vector<double>& tab = htab[m];
      tab.assign(std::size_t(n), 0.0);
      for (int j = 0; j < n; ++j) {
        double y = double(j) / double(n);
        tab[std::size_t(j)] = t.kind == CircleKind::Flat ? t.a0
                              : t.kind == CircleKind::Cos ? std::cos(kTau * t.nmode * y)
                                                          : std::sin(kTau * t.nmode * y);
      }
    }
    if (terms.empty()) return;
    int gn = pow2_at_least(std::max(16, 8 * K));
    PeriodicGrid mg(std::vector<int>(std::size_t(d), gn));
    std::vector<Spectrum> spectra;
    for (const LocalizedTerm& t : terms) {
      int nm = 2 * t.K + 1;
      std::int64_t box = 1;
      for (int ax = 0; ax < d; ++ax) box *= nm;
      Spectrum sp(std::size_t(mg.size()), cplx(0.0, 0.0));
      int idx[8];
      for (std::int64_t b = 0; b < box; ++b) {
        const cplx& v = t.fcoef[std::size_t(b)];
        if (v == cplx(0.0, 0.0)) continue;
        std::int64_t rem = b;
        for (int ax = d - 1; ax >= 0; --ax) {
          int k = int(rem % nm) - t.K;
          rem /= nm;
          idx[ax] = k >= 0 ? k : k + gn;
        }
        sp[std::size_t(mg.flatten(idx))] += v;
      }
      spectra.push_back(std::move(sp));
    }
    group = FastSamplerGroup(mg, spectra, kSamplerPad, kLabelSamplerOrder);
  }

  bool empty() const { return terms.empty(); }

  // Accumulate F_i(A(x), x) into force[i] for one node; fvals is scratch of
  // size terms.size().
  void accumulate(const double* a, const int* idx, double* force, double* fvals) const {
    group.eval(a, fvals);
    for (std::size_t m = 0; m < terms.size(); ++m) {
      const LocalizedTerm& t = terms[m];
      force[t.direction] += fvals[m] * htab[m][std::size_t(idx[t.direction])];
    }
  }
};

}  // namespace detail

inline Trajectory solve(const SolverProblem& prob, const SolverConfig& cfg) {
  const MetricField& metric = prob.metric;
  const PeriodicGrid& grid = metric.grid;
  int d = metric.d;
  std::int64_t N = grid.size();
  require(int(prob.u0.size()) == d, "solve: u0 component count mismatch");
  for (const ScalarField& c : prob.u0)
    require(c.grid.n == grid.n, "solve: u0 grid mismatch");
  require(prob.rho0.size() == prob.slots.size(), "solve: one initial density per slot");
  for (std::size_t s = 0; s < prob.slots.size(); ++s) {
    require(prob.slots[s].direction >= 0 && prob.slots[s].direction < d,
            "solve: buoyancy direction out of range");
    require(int(prob.slots[s].g.size()) == grid.n[std::size_t(prob.slots[s].direction)] &&
                prob.slots[s].h.size() == prob.slots[s].g.size(),
            "solve: buoyancy axis table sized to its axis");
    require(prob.rho0[s].grid.n == grid.n, "solve: rho0 grid mismatch");
  }
  if (!prob.force_mode.empty()) {
    require(int(prob.force_mode.size()) == d, "solve: force mode component count mismatch");
    for (const ScalarField& c : prob.force_mode)
      require(c.grid.n == grid.n, "solve: force mode grid mismatch");
  }
  require(cfg.dt > 0.0 && cfg.T > 0.0, "solve: need positive dt and T");
  long steps = std::lround(cfg.T / cfg.dt);
  require(steps >= 1 && std::abs(double(steps) * cfg.dt - cfg.T) < 1e-9 * cfg.T,
          "solve: dt must divide T");
  require(cfg.emit_stride >= 1 && steps % cfg.emit_stride == 0,
          "solve: emit stride must divide the step count");
  require(sup_norm(divergence(metric, prob.u0)) <= 1e-8, "solve: u0 is not divergence-free");

  double umax = 0.0;
  for (const ScalarField& c : prob.u0) umax = std::max(umax, sup_norm(c));
  int nmax = *std::max_element(grid.n.begin(), grid.n.end());
  require(umax * cfg.dt * double(nmax) <= cfg.cfl_limit,
          "solve: CFL violation, refuse to start (max|u| dt n = " +
              std::to_string(umax * cfg.dt * double(nmax)) + ")");

  bool labels_on = cfg.track_labels || prob.forcing.has_value();
  int S = int(prob.slots.size());
  std::vector<ScalarField> gamma = christoffel(metric);
  bool flat_gamma = true;
  for (const ScalarField& gk : gamma)
    if (sup_norm(gk) > 0.0) flat_gamma = false;

  detail::ForcingSampler fs;
  if (prob.forcing.has_value()) fs = detail::ForcingSampler(*prob.forcing, grid);

  // volume weights sqrt(det g)/N and per-slot vertical-energy weights
  std::vector<double> vw(std::size_t(N), 0.0);
  for (std::int64_t p = 0; p < N; ++p) vw[std::size_t(p)] = metric.sqrt_det[p] / double(N);
  std::vector<std::vector<double>> slotw;
  slotw.resize(std::size_t(S));
  {
    int idx[8];
    for (int s = 0; s < S; ++s) {
      slotw[std::size_t(s)].assign(std::size_t(N), 0.0);
      for (std::int64_t p = 0; p < N; ++p) {
        grid.unflatten(p, idx);
        slotw[std::size_t(s)][std::size_t(p)] =
            vw[std::size_t(p)] * prob.slots[std::size_t(s)].g[std::size_t(idx[prob.slots[std::size_t(s)].direction])];
      }
    }
  }

  // state layout: d velocity comps, then d displacement comps (if tracked),
  // then S densities, each N doubles
  int comps = d + (labels_on ? d : 0) + S;
  std::vector<double> Y(std::size_t(comps) * std::size_t(N), 0.0);
  auto comp = [&](std::vector<double>& v, int c) { return v.data() + std::size_t(c) * std::size_t(N); };
  for (int c = 0; c < d; ++c)
    std::copy(prob.u0[std::size_t(c)].v.begin(), prob.u0[std::size_t(c)].v.end(), comp(Y, c));
  for (int s = 0; s < S; ++s)
    std::copy(prob.rho0[std::size_t(s)].v.begin(), prob.rho0[std::size_t(s)].v.end(),
              comp(Y, d + (labels_on ? d : 0) + s));

  // right-hand side of the projected system; also returns the projection
  // potential so emitted frames can report pressure
  auto rhs = [&](const std::vector<double>& state, std::vector<double>& out,
                 ScalarField* pressure_out) {
    std::fill(out.begin(), out.end(), 0.0);
    const double* uc[8];
    VectorField u;
    for (int c = 0; c < d; ++c) {
      ScalarField f(grid);
      std::copy(state.data() + std::size_t(c) * std::size_t(N),
                state.data() + std::size_t(c + 1) * std::size_t(N), f.v.begin());
      u.push_back(std::move(f));
      uc[c] = state.data() + std::size_t(c) * std::size_t(N);
    }
    // grad u (contravariant components, plain partials)
    std::vector<ScalarField> du;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) du.push_back(differentiate(u[std::size_t(i)], j, 1));

    // momentum: R^i = -u^j d_j u^i - Gamma^i_{jl} u^j u^l - g^{ij}(F_j + B_j)
    VectorField R;
    for (int i = 0; i < d; ++i) R.push_back(ScalarField(grid));
    int idx[8];
    std::vector<double> fvals(fs.terms.size(), 0.0);
    double force[8];
    const double* lab[8];
    for (int c = 0; c < d && labels_on; ++c)
      lab[c] = state.data() + std::size_t(d + c) * std::size_t(N);
    for (std::int64_t p = 0; p < N; ++p) {
      grid.unflatten(p, idx);
      for (int i = 0; i < d; ++i) force[i] = 0.0;
      // covariant force pieces: separable forcing at the labels, fixed mode,
      // buoyancy rho_s h_s along the slot axes
      if (!fs.empty()) {
        double a[8];
        for (int c = 0; c < d; ++c)
          a[c] = lab[c][p] + grid.coord(c, idx[c]);  // displacement + identity
        fs.accumulate(a, idx, force, fvals.data());
      }
      if (prob.force_mode_scale != 0.0 && !prob.force_mode.empty())
        for (int i = 0; i < d; ++i)
          force[i] += prob.force_mode_scale * prob.force_mode[std::size_t(i)][p];
      for (int s = 0; s < S; ++s) {
        const BuoyancySlot& bs = prob.slots[std::size_t(s)];
        force[bs.direction] += state[std::size_t(d + (labels_on ? d : 0) + s) * std::size_t(N) +
                                     std::size_t(p)] *
                               bs.h[std::size_t(idx[bs.direction])];
      }
      for (int i = 0; i < d; ++i) {
        double adv = 0.0;
        for (int j = 0; j < d; ++j) adv += uc[j][p] * du[std::size_t(i * d + j)][p];
        if (!flat_gamma)
          for (int j = 0; j < d; ++j)
            for (int l = 0; l < d; ++l)
              adv += gamma[std::size_t((i * d + j) * d + l)][p] * uc[j][p] * uc[l][p];
        double fi = 0.0;
        for (int j = 0; j < d; ++j) fi += metric.ginv[std::size_t(i * d + j)][p] * force[j];
        R[std::size_t(i)][p] = -adv - fi;
      }
    }
    for (int i = 0; i < d; ++i) detail::dealias_23(R[std::size_t(i)]);
    LerayResult lr = leray_project(metric, R);
    for (int i = 0; i < d; ++i)
      std::copy(lr.projected[std::size_t(i)].v.begin(), lr.projected[std::size_t(i)].v.end(),
                out.data() + std::size_t(i) * std::size_t(N));
    if (pressure_out != nullptr) {
      *pressure_out = lr.potential;
      for (std::int64_t p = 0; p < N; ++p) (*pressure_out)[p] = -(*pressure_out)[p];
    }

    // labels: d/dt D^a = -u^a - u^j d_j D^a
    if (labels_on) {
      for (int a = 0; a < d; ++a) {
        ScalarField Da(grid);
        std::copy(state.data() + std::size_t(d + a) * std::size_t(N),
                  state.data() + std::size_t(d + a + 1) * std::size_t(N), Da.v.begin());
        ScalarField adv(grid);
        for (int j = 0; j < d; ++j) {
          ScalarField dj = differentiate(Da, j, 1);
          for (std::int64_t p = 0; p < N; ++p) adv[p] += uc[j][p] * dj[p];
        }
        detail::dealias_23(adv);
        double* o = out.data() + std::size_t(d + a) * std::size_t(N);
        for (std::int64_t p = 0; p < N; ++p) o[p] = -uc[a][p] - adv[p];
      }
    }
    // densities: d/dt rho_s = -u^j d_j rho_s
    for (int s = 0; s < S; ++s) {
      ScalarField rs(grid);
      std::copy(state.data() + std::size_t(d + (labels_on ? d : 0) + s) * std::size_t(N),
                state.data() + std::size_t(d + (labels_on ? d : 0) + s + 1) * std::size_t(N),
                rs.v.begin());
      ScalarField adv(grid);
      for (int j = 0; j < d; ++j) {
        ScalarField dj = differentiate(rs, j, 1);
        for (std::int64_t p = 0; p < N; ++p) adv[p] += uc[j][p] * dj[p];
      }
      detail::dealias_23(adv);
      double* o = out.data() + std::size_t(d + (labels_on ? d : 0) + s) * std::size_t(N);
      for (std::int64_t p = 0; p < N; ++p) o[p] = -adv[p];
    }
  };

  int frames = int(steps / cfg.emit_stride) + 1;
  Trajectory traj;
  traj.grid = grid;
  traj.metric = metric;
  traj.d = d;
  traj.nslots = S;
  traj.T = cfg.T;
  traj.dt = cfg.dt;
  traj.emit_stride = cfg.emit_stride;
  traj.has_labels = labels_on;
  traj.u = TimeDependentField(grid, d, frames, cfg.T);
  if (labels_on) traj.labels = TimeDependentField(grid, d, frames, cfg.T);
  if (S > 0) traj.rho = TimeDependentField(grid, S, frames, cfg.T);
  traj.pressure = TimeDependentField(grid, 1, frames, cfg.T);

  auto record_energy = [&](double t, const std::vector<double>& state) {
    double hor = 0.0;
    int idx[8];
    for (std::int64_t p = 0; p < N; ++p) {
      grid.unflatten(p, idx);
      double k = 0.0;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          k += metric.g[std::size_t(i * d + j)][p] * state[std::size_t(i) * std::size_t(N) + std::size_t(p)] *
               state[std::size_t(j) * std::size_t(N) + std::size_t(p)];
      hor += 0.5 * k * vw[std::size_t(p)];
    }
    double vert = 0.0;
    for (int s = 0; s < S; ++s) {
      const double* rs = state.data() + std::size_t(d + (labels_on ? d : 0) + s) * std::size_t(N);
      const std::vector<double>& w = slotw[std::size_t(s)];
      for (std::int64_t p = 0; p < N; ++p) vert += w[std::size_t(p)] * rs[p];
    }
    traj.energy_times.push_back(t);
    traj.energy_horizontal.push_back(hor);
    traj.energy_total.push_back(hor + vert);
  };

  auto emit = [&](int frame, double t, const std::vector<double>& state) {
    for (int c = 0; c < d; ++c) {
      ScalarField f(grid);
      std::copy(state.data() + std::size_t(c) * std::size_t(N),
                state.data() + std::size_t(c + 1) * std::size_t(N), f.v.begin());
      traj.u.set_field(frame, c, f);
    }
    if (labels_on)
      for (int c = 0; c < d; ++c) {
        ScalarField f(grid);
        std::copy(state.data() + std::size_t(d + c) * std::size_t(N),
                  state.data() + std::size_t(d + c + 1) * std::size_t(N), f.v.begin());
        traj.labels.set_field(frame, c, f);
      }
    for (int s = 0; s < S; ++s) {
      ScalarField f(grid);
      std::copy(state.data() + std::size_t(d + (labels_on ? d : 0) + s) * std::size_t(N),
                state.data() + std::size_t(d + (labels_on ? d : 0) + s + 1) * std::size_t(N),
                f.v.begin());
      traj.rho.set_field(frame, s, f);
    }
    std::vector<double> scratch(Y.size());
    ScalarField pr(grid);
    rhs(state, scratch, &pr);
    traj.pressure.set_field(frame, 0, pr);
    (void)t;
  };

  std::vector<double> k1(Y.size()), k2(Y.size()), k3(Y.size()), k4(Y.size()), tmp(Y.size());
  record_energy(0.0, Y);
  emit(0, 0.0, Y);
  int frame = 1;
  for (long step = 0; step < steps; ++step) {
    rhs(Y, k1, nullptr);
    for (std::size_t q = 0; q < Y.size(); ++q) tmp[q] = Y[q] + 0.5 * cfg.dt * k1[q];
    rhs(tmp, k2, nullptr);
    for (std::size_t q = 0; q < Y.size(); ++q) tmp[q] = Y[q] + 0.5 * cfg.dt * k2[q];
    rhs(tmp, k3, nullptr);
    for (std::size_t q = 0; q < Y.size(); ++q) tmp[q] = Y[q] + cfg.dt * k3[q];
    rhs(tmp, k4, nullptr);
    for (std::size_t q = 0; q < Y.size(); ++q)
      Y[q] += cfg.dt / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);

    // re-project the velocity: stage projections keep the step divergence-free
    // to rounding, this pins it there
    {
      VectorField u;
      for (int c = 0; c < d; ++c) {
        ScalarField f(grid);
        std::copy(Y.data() + std::size_t(c) * std::size_t(N),
                  Y.data() + std::size_t(c + 1) * std::size_t(N), f.v.begin());
        u.push_back(std::move(f));
      }
      LerayResult lr = leray_project(metric, u);
      for (int c = 0; c < d; ++c)
        std::copy(lr.projected[std::size_t(c)].v.begin(), lr.projected[std::size_t(c)].v.end(),
                  Y.data() + std::size_t(c) * std::size_t(N));
    }

    double t = double(step + 1) * cfg.dt;
    double worst = 0.0;
    for (double v : Y) worst = std::max(worst, std::abs(v));
    if (!(worst < cfg.blowup_guard))
      throw std::runtime_error("solve: blowup guard tripped at step " +
                               std::to_string(step + 1) + " (sup " + std::to_string(worst) + ")");
    record_energy(t, Y);
    if ((step + 1) % cfg.emit_stride == 0) {
      emit(frame, t, Y);
      ++frame;
    }
  }
  return traj;
}

// Sobolev-type energy of the difference between two trajectories emitted on
// the same grid and time lattice: E_s(t) sums, over derivative orders k <= s,
// half the squared H^k seminorms of the velocity difference and of the label
// difference.  s is capped at 2: higher orders only amplify the spectral tail
// at the working resolutions.
struct EnergyTrace {
  std::vector<double> times;
  std::vector<double> E[3];
  int smax = 0;
};

inline EnergyTrace energy_sobolev(const Trajectory& ref, const Trajectory& pert, int s) {
  require(s >= 0 && s <= 2, "energy_sobolev: s must be 0, 1, or 2");
  require(ref.grid.n == pert.grid.n, "energy_sobolev: grid mismatch");
  require(ref.frames() == pert.frames(), "energy_sobolev: frame count mismatch");
  require(std::abs(ref.T - pert.T) < 1e-12, "energy_sobolev: horizon mismatch");
  require(ref.has_labels && pert.has_labels, "energy_sobolev: both runs must track labels");
  EnergyTrace tr;
  tr.smax = s;
  int d = ref.d;
  std::int64_t N = ref.grid.size();
  for (int f = 0; f < ref.frames(); ++f) {
    tr.times.push_back(ref.time(f));
    double acc[3] = {0.0, 0.0, 0.0};
    for (int c = 0; c < 2 * d; ++c) {
      const double* a = c < d ? ref.u.frame_component(f, c)
                              : ref.labels.frame_component(f, c - d);
      const double* b = c < d ? pert.u.frame_component(f, c)
                              : pert.labels.frame_component(f, c - d);
      ScalarField diff(ref.grid);
      for (std::int64_t p = 0; p < N; ++p) diff[p] = b[p] - a[p];
      for (int k = 0; k <= s; ++k) acc[k] += 0.5 * detail::hk_seminorm2(diff, k);
    }
    double running = 0.0;
    for (int k = 0; k <= s; ++k) {
      running += acc[k];  // E_s accumulates all orders up to s
      tr.E[k].push_back(running);
    }
  }
  return tr;
}

struct StabilityRow {
  int N = 0;
  double delta = 0.0;
  double sup_E0_sqrt = 0.0;
  double sup_seminorm[3] = {0.0, 0.0, 0.0};  // H^k of the velocity difference
  double energy_drift = 0.0;                 // total-energy drift of the run
  bool diverged = false;
};

struct StabilityTable {
  std::vector<StabilityRow> rows;
  double slope = 0.0;   // fitted d log2(sup E_0^(1/2)) / d(-N); 1 = linear response
  bool monotone = true; // distances nonincreasing in N
};

inline void write_stability_csv(std::ostream& os, const StabilityTable& tab) {
  os << "N,delta,sup_E0_sqrt,sup_L2,sup_H1,sup_H2,energy_drift,diverged\n";
  for (const StabilityRow& r : tab.rows) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%d,%.6e,%.12e,%.12e,%.12e,%.12e,%.12e,%d\n", r.N,
                  r.delta, r.sup_E0_sqrt, r.sup_seminorm[0], r.sup_seminorm[1],
                  r.sup_seminorm[2], r.energy_drift, int(r.diverged));
    os << buf;
  }
}

// Forcing-continuity experiment: solve the forced system with
// F_N = F + 2^(-N) * mode for each requested N, identical initial data, and
// report the distance of each run to the reference flow.  The reference must
// satisfy the system with forcing F up to small residual, so the distances
// isolate the response to the forcing perturbation; a linear response shows
// as slope 1 in log2(distance) against N.  Runs that trip the blowup guard
// are recorded as diverged.
inline StabilityTable stability_experiment(const Flow& ref, const LabelMap& ref_labels,
                                           const SeparableForcing& F, const VectorField& mode,
                                           const std::vector<int>& Ns, SolverConfig cfg) {
  require(!Ns.empty(), "stability_experiment: no N values");
  const PeriodicGrid& grid = ref.grid();
  int d = ref.d();
  std::int64_t N = grid.size();
  double ref_dt = ref.T / double(ref.u.frames - 1);
  long per = std::lround(ref_dt / cfg.dt);
  require(per >= 1 && std::abs(double(per) * cfg.dt - ref_dt) < 1e-9 * ref_dt,
          "stability_experiment: dt must divide the reference frame spacing");
  cfg.T = ref.T;
  cfg.emit_stride = int(per);
  cfg.track_labels = true;

  SolverProblem prob;
  prob.metric = ref.metric;
  for (int c = 0; c < d; ++c) prob.u0.push_back(ref.u.field(0, c));
  prob.forcing = F;
  prob.force_mode = mode;

  StabilityTable tab;
  int idx[8];
  for (int n : Ns) {
    StabilityRow row;
    row.N = n;
    row.delta = std::ldexp(1.0, -n);
    prob.force_mode_scale = row.delta;
    try {
      Trajectory traj = solve(prob, cfg);
      require(traj.frames() == ref.u.frames, "stability_experiment: frame alignment failed");
      for (int f = 0; f < traj.frames(); ++f) {
        double e0 = 0.0;
        for (int c = 0; c < d; ++c) {
          ScalarField dv(grid);
          const double* a = ref.u.frame_component(f, c);
          const double* b = traj.u.frame_component(f, c);
          for (std::int64_t p = 0; p < N; ++p) dv[p] = b[p] - a[p];
          for (int k = 0; k <= 2; ++k) {
            double s2 = detail::hk_seminorm2(dv, k);
            if (k == 0) e0 += 0.5 * s2;
            row.sup_seminorm[k] = std::max(row.sup_seminorm[k], std::sqrt(s2));
          }
          // label difference: stored displacement vs reference map minus identity
          ScalarField db(grid);
          const double* Ar = ref_labels.A.frame_component(f, c);
          const double* Dp = traj.labels.frame_component(f, c);
          for (std::int64_t p = 0; p < N; ++p) {
            grid.unflatten(p, idx);
            db[p] = Dp[p] - (Ar[p] - grid.coord(c, idx[c]));
          }
          e0 += 0.5 * detail::hk_seminorm2(db, 0);
        }
        row.sup_E0_sqrt = std::max(row.sup_E0_sqrt, std::sqrt(e0));
      }
      double e0t = traj.energy_total.front();
      for (double e : traj.energy_total)
        row.energy_drift = std::max(row.energy_drift, std::abs(e - e0t));
    } catch (const std::exception&) {
      row.diverged = true;
    }
    tab.rows.push_back(row);
  }

  // least-squares slope of log2 distance against N over the converged rows
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int m = 0;
  for (const StabilityRow& r : tab.rows) {
    if (r.diverged || r.sup_E0_sqrt <= 0.0) continue;
    double x = double(r.N), y = std::log2(r.sup_E0_sqrt);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  if (m >= 2) tab.slope = -(double(m) * sxy - sx * sy) / (double(m) * sxx - sx * sx);
  for (std::size_t r = 1; r < tab.rows.size(); ++r) {
    if (tab.rows[r].diverged || tab.rows[r - 1].diverged) continue;
    if (tab.rows[r].sup_E0_sqrt > tab.rows[r - 1].sup_E0_sqrt * (1.0 + 1e-9))
      tab.monotone = false;
  }
  return tab;
}

struct ConservationReport {
  bool pass = false;
  double max_drift = 0.0;
  double relative_drift = 0.0;
  double horizontal_variation = 0.0;
  std::string failure;
};

// Total-energy drift of a buoyancy run: the horizontal kinetic energy plus
// the profile-weighted densities is an invariant of the continuous system,
// so its discrete drift measures the scheme.  Recomputed from the emitted
// frames and cross-checked against the per-step trace recorded by solve();
// the report also carries how much the horizontal part alone moved, which is
// the energy actually exchanged with the swirl.
inline ConservationReport conserved_energy_check(const Trajectory& traj,
                                                 const std::vector<BuoyancySlot>& slots,
                                                 double tol = 1e-6) {
  ConservationReport rep;
  require(int(slots.size()) == traj.nslots, "conserved_energy_check: slot count mismatch");
  const PeriodicGrid& grid = traj.grid;
  std::int64_t N = grid.size();
  int d = traj.d;
  std::vector<double> totals, horizontals;
  int idx[8];
  for (int f = 0; f < traj.frames(); ++f) {
    double hor = 0.0;
    for (std::int64_t p = 0; p < N; ++p) {
      grid.unflatten(p, idx);
      double k = 0.0;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          k += traj.metric.g[std::size_t(i * d + j)][p] * traj.u.frame_component(f, i)[p] *
               traj.u.frame_component(f, j)[p];
      hor += 0.5 * k * traj.metric.sqrt_det[p] / double(N);
    }
    double vert = 0.0;
    for (int s = 0; s < traj.nslots; ++s) {
      const BuoyancySlot& bs = slots[std::size_t(s)];
      require(int(bs.g.size()) == grid.n[std::size_t(bs.direction)],
              "conserved_energy_check: axis table mismatch");
      const double* rs = traj.rho.frame_component(f, s);
      for (std::int64_t p = 0; p < N; ++p) {
        grid.unflatten(p, idx);
        vert += bs.g[std::size_t(idx[bs.direction])] * rs[p] * traj.metric.sqrt_det[p] / double(N);
      }
    }
    horizontals.push_back(hor);
    totals.push_back(hor + vert);
  }
  for (std::size_t f = 0; f < totals.size(); ++f) {
    rep.max_drift = std::max(rep.max_drift, std::abs(totals[f] - totals[0]));
    rep.horizontal_variation =
        std::max(rep.horizontal_variation, std::abs(horizontals[f] - horizontals[0]));
  }
  // the per-step trace catches drift between emitted frames
  if (!traj.energy_total.empty()) {
    double t0 = traj.energy_total.front();
    for (double e : traj.energy_total)
      rep.max_drift = std::max(rep.max_drift, std::abs(e - t0));
  }
  rep.relative_drift = rep.max_drift / std::max(std::abs(totals[0]), 1e-300);
  rep.pass = rep.max_drift <= tol;
  if (!rep.pass)
    rep.failure = "total energy drifts by " + std::to_string(rep.max_drift) +
                  " (tolerance " + std::to_string(tol) + ")";
  return rep;
}

// Trajectory container on disk: "TRAJ1", scalar header, then the shared
// field blocks in a fixed order (u, labels?, rho?, pressure), then the
// per-step energy trace.
inline void save_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path, std::ios::binary);
  require(bool(os), "save_trajectory: cannot open " + path);
  os.write("TRAJ1", 5);
  detail::put_u32(os, std::uint32_t(traj.d));
  detail::put_u32(os, std::uint32_t(traj.nslots));
  detail::put_u32(os, std::uint32_t(traj.emit_stride));
  detail::put_u32(os, std::uint32_t(traj.has_labels ? 1 : 0));
  detail::put_f64(os, traj.T);
  detail::put_f64(os, traj.dt);
  write_field_binary(os, traj.u);
  for (int c = 0; c < traj.d * traj.d; ++c)  // metric entries, raw, after u fixes the grid
    os.write(reinterpret_cast<const char*>(traj.metric.g[std::size_t(c)].v.data()),
             std::streamsize(traj.grid.size() * 8));
  if (traj.has_labels) write_field_binary(os, traj.labels);
  if (traj.nslots > 0) write_field_binary(os, traj.rho);
  write_field_binary(os, traj.pressure);
  detail::put_u32(os, std::uint32_t(traj.energy_times.size()));
  for (std::size_t q = 0; q < traj.energy_times.size(); ++q) {
    detail::put_f64(os, traj.energy_times[q]);
    detail::put_f64(os, traj.energy_horizontal[q]);
    detail::put_f64(os, traj.energy_total[q]);
  }
  require(bool(os), "save_trajectory: write failed for " + path);
}

inline Trajectory load_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "load_trajectory: cannot open " + path);
  char magic[5] = {};
  is.read(magic, 5);
  require(bool(is) && std::string(magic, 5) == "TRAJ1", "load_trajectory: bad magic in " + path);
  Trajectory traj;
  traj.d = int(detail::get_u32(is));
  traj.nslots = int(detail::get_u32(is));
  traj.emit_stride = int(detail::get_u32(is));
  traj.has_labels = detail::get_u32(is) != 0;
  traj.T = detail::get_f64(is);
  traj.dt = detail::get_f64(is);
  require(bool(is) && traj.d >= 1 && traj.d <= 8 && traj.nslots >= 0,
          "load_trajectory: corrupt header in " + path);
  traj.u = read_field_binary(is, path + " (velocity)");
  require(traj.u.components == traj.d, "load_trajectory: velocity block mismatch");
  traj.grid = traj.u.grid;
  std::vector<ScalarField> entries;
  for (int c = 0; c < traj.d * traj.d; ++c) {
    ScalarField e(traj.grid);
    is.read(reinterpret_cast<char*>(e.v.data()), std::streamsize(traj.grid.size() * 8));
    entries.push_back(std::move(e));
  }
  require(bool(is), "load_trajectory: truncated metric block in " + path);
  traj.metric = build_metric(traj.grid, entries);
  if (traj.has_labels) {
    traj.labels = read_field_binary(is, path + " (labels)");
    require(traj.labels.grid.n == traj.grid.n && traj.labels.components == traj.d &&
                traj.labels.frames == traj.u.frames,
            "load_trajectory: label block mismatch");
  }
  if (traj.nslots > 0) {
    traj.rho = read_field_binary(is, path + " (densities)");
    require(traj.rho.grid.n == traj.grid.n && traj.rho.components == traj.nslots &&
                traj.rho.frames == traj.u.frames,
            "load_trajectory: density block mismatch");
  }
  traj.pressure = read_field_binary(is, path + " (pressure)");
  require(traj.pressure.grid.n == traj.grid.n && traj.pressure.components == 1 &&
              traj.pressure.frames == traj.u.frames,
          "load_trajectory: pressure block mismatch");
  std::uint32_t ne = detail::get_u32(is);
  for (std::uint32_t q = 0; q < ne; ++q) {
    traj.energy_times.push_back(detail::get_f64(is));
    traj.energy_horizontal.push_back(detail::get_f64(is));
    traj.energy_total.push_back(detail::get_f64(is));
  }
  require(bool(is), "load_trajectory: truncated energy trace in " + path);
  return traj;
}

}  // namespace eulerext
