#pragma once
// Characteristic maps of a flow: the forward trajectory map X(t,a) and the
// backward label map A(t,x), both integrated per seed point with classical
// RK4 (never by grid transport). Outputs are in universal-cover coordinates:
// wrapping happens only when interpolating the velocity, so displacement
// bounds remain checkable on R.

#include <cmath>
#include <string>
#include <vector>

#include "core.hpp"
#include "field.hpp"
#include "flowgen.hpp"
#include "io.hpp"
#include "sampler.hpp"

namespace eulerext {

struct TrajectoryMap {
  TimeDependentField X;  // d components over label coordinates, X(0,a) = a
  double max_displacement = 0.0;
};

struct LabelMap {
  TimeDependentField A;  // d components over Eulerian x, A(0,x) = x
  double max_displacement = 0.0;
};

namespace detail {

// Point evaluator for the velocity field. Steady flows sample one spectral
// interpolant; unsteady flows sample four neighbouring frames and combine
// with cubic Lagrange weights in time.
class VelocityEval {
 public:
  explicit VelocityEval(const Flow& flow) : flow_(flow), d_(flow.d()) {
    if (flow.steady) {
      groups_.push_back(build_frame(0));
    } else {
      require(flow.u.frames >= 4, "velocity interpolation needs at least 4 frames");
      for (int f = 0; f < flow.u.frames; ++f) groups_.push_back(build_frame(f));
    }
  }

  void eval(double t, const double* x, double* out) const {
    if (flow_.steady) {
      groups_[0].eval(x, out);
      return;
    }
    double dt = flow_.u.dt();
    double s = t / dt;
    int base = int(std::floor(s)) - 1;
    if (base < 0) base = 0;
    if (base > flow_.u.frames - 4) base = flow_.u.frames - 4;
    double r = s - base;
    double w[4];
    w[0] = -(r - 1) * (r - 2) * (r - 3) / 6.0;
    w[1] = r * (r - 2) * (r - 3) / 2.0;
    w[2] = -r * (r - 1) * (r - 3) / 2.0;
    w[3] = r * (r - 1) * (r - 2) / 6.0;
    double tmp[8];
    for (int c = 0; c < d_; ++c) out[c] = 0.0;
    for (int j = 0; j < 4; ++j) {
      groups_[std::size_t(base + j)].eval(x, tmp);
      for (int c = 0; c < d_; ++c) out[c] += w[j] * tmp[c];
    }
  }

  int d() const { return d_; }

 private:
  FastSamplerGroup build_frame(int f) const {
    std::vector<Spectrum> spec;
    for (int c = 0; c < d_; ++c) spec.push_back(spectrum_of(flow_.u.field(f, c)));
    return FastSamplerGroup(flow_.grid(), spec);
  }

  const Flow& flow_;
  int d_;
  std::vector<FastSamplerGroup> groups_;
};

inline void rk4_step(const VelocityEval& vel, double t, double h, double* p, int d) {
  double k1[8], k2[8], k3[8], k4[8], q[8];
  vel.eval(t, p, k1);
  for (int c = 0; c < d; ++c) q[c] = p[c] + 0.5 * h * k1[c];
  vel.eval(t + 0.5 * h, q, k2);
  for (int c = 0; c < d; ++c) q[c] = p[c] + 0.5 * h * k2[c];
  vel.eval(t + 0.5 * h, q, k3);
  for (int c = 0; c < d; ++c) q[c] = p[c] + h * k3[c];
  vel.eval(t + h, q, k4);
  for (int c = 0; c < d; ++c) p[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
}

inline void check_finite(const double* p, int d, const char* who, int frame) {
  for (int c = 0; c < d; ++c)
    if (!std::isfinite(p[c]))
      throw std::runtime_error(std::string(who) + ": non-finite position at frame " + std::to_string(frame));
}

}  // namespace detail

// Forward integration of dX/dt = u(t, X) from X(0) = a, one trajectory per
// label node, positions recorded at every flow frame.
inline TrajectoryMap trajectory_map(const Flow& flow, int substeps_per_unit = 256) {
  require(flow.in_U, "trajectory_map: flow must lie in U");
  require(substeps_per_unit >= 1, "trajectory_map: substeps must be positive");
  const PeriodicGrid& grid = flow.grid();
  int d = flow.d();
  int frames = flow.u.frames;
  double dt = flow.u.dt();
  int sub = std::max(1, int(std::llround(substeps_per_unit * dt)));
  double h = dt / sub;

  detail::VelocityEval vel(flow);
  TrajectoryMap out;
  out.X = TimeDependentField(grid, d, frames, flow.T);
  std::int64_t N = grid.size();
  double p[8];
  for (std::int64_t node = 0; node < N; ++node) {
    grid.node(node, p);
    double a[8];
    for (int c = 0; c < d; ++c) {
      a[c] = p[c];
      out.X.frame_component(0, c)[node] = p[c];
    }
    for (int f = 0; f < frames - 1; ++f) {
      for (int s = 0; s < sub; ++s) detail::rk4_step(vel, f * dt + s * h, h, p, d);
      detail::check_finite(p, d, "trajectory_map", f + 1);
      for (int c = 0; c < d; ++c) {
        out.X.frame_component(f + 1, c)[node] = p[c];
        out.max_displacement = std::max(out.max_displacement, std::abs(p[c] - a[c]));
      }
    }
  }
  return out;
}

// Backward integration: A(t,x) is the time-0 foot of the characteristic
// through (t,x). For steady flows the flow property gives all frames from a
// single backward trajectory per node; otherwise each frame is traced
// separately through the time-interpolated field.
inline LabelMap label_map(const Flow& flow, int substeps_per_unit = 256) {
  require(flow.in_U, "label_map: flow must lie in U");
  require(substeps_per_unit >= 1, "label_map: substeps must be positive");
  const PeriodicGrid& grid = flow.grid();
  int d = flow.d();
  int frames = flow.u.frames;
  double dt = flow.u.dt();
  int sub = std::max(1, int(std::llround(substeps_per_unit * dt)));
  double h = dt / sub;

  detail::VelocityEval vel(flow);
  LabelMap out;
  out.A = TimeDependentField(grid, d, frames, flow.T);
  std::int64_t N = grid.size();
  double p[8];
  for (std::int64_t node = 0; node < N; ++node) {
    grid.node(node, p);
    double x0[8];
    for (int c = 0; c < d; ++c) {
      x0[c] = p[c];
      out.A.frame_component(0, c)[node] = p[c];
    }
    if (flow.steady) {
      // autonomous: foot of duration-t backward trace, recorded cumulatively
      for (int f = 0; f < frames - 1; ++f) {
        for (int s = 0; s < sub; ++s) detail::rk4_step(vel, 0.0, -h, p, d);
        detail::check_finite(p, d, "label_map", f + 1);
        for (int c = 0; c < d; ++c) {
          out.A.frame_component(f + 1, c)[node] = p[c];
          out.max_displacement = std::max(out.max_displacement, std::abs(p[c] - x0[c]));
        }
      }
    } else {
      for (int f = 1; f < frames; ++f) {
        double q[8];
        for (int c = 0; c < d; ++c) q[c] = x0[c];
        for (int s = 0; s < f * sub; ++s) detail::rk4_step(vel, f * dt - s * h, -h, q, d);
        detail::check_finite(q, d, "label_map", f);
        for (int c = 0; c < d; ++c) {
          out.A.frame_component(f, c)[node] = q[c];
          out.max_displacement = std::max(out.max_displacement, std::abs(q[c] - x0[c]));
        }
      }
    }
  }
  return out;
}

// max over frames and label nodes of |A(t, X(t,a)) - a|.
inline double roundtrip_check(const TrajectoryMap& tm, const LabelMap& lm) {
  require(tm.X.grid == lm.A.grid, "roundtrip_check: grid mismatch");
  const PeriodicGrid& grid = tm.X.grid;
  int d = tm.X.components;
  std::int64_t N = grid.size();
  double worst = 0.0;
  for (int f = 0; f < tm.X.frames; ++f) {
    // displacement D(x) = A(t_f, x) - x is periodic; sample it spectrally
    std::vector<Spectrum> spec;
    for (int c = 0; c < d; ++c) {
      ScalarField D = lm.A.field(f, c);
      double x[8];
      for (std::int64_t i = 0; i < N; ++i) {
        grid.node(i, x);
        D[i] -= x[c];
      }
      spec.push_back(spectrum_of(D));
    }
    FastSamplerGroup disp(grid, spec);
    double a[8], xq[8], dv[8];
    for (std::int64_t i = 0; i < N; ++i) {
      grid.node(i, a);
      for (int c = 0; c < d; ++c) xq[c] = tm.X.frame_component(f, c)[i];
      disp.eval(xq, dv);
      for (int c = 0; c < d; ++c)
        worst = std::max(worst, std::abs(xq[c] + dv[c] - a[c]));
    }
  }
  return worst;
}

// Lagrangian volume preservation: det(dX/da) * sqrt(det g)(X) / sqrt(det g)(a)
// should be 1; returns the max deviation over frames and nodes.
inline double volume_check(const TrajectoryMap& tm, const MetricField& metric) {
  const PeriodicGrid& grid = tm.X.grid;
  int d = tm.X.components;
  std::int64_t N = grid.size();
  std::vector<Spectrum> gspec{spectrum_of(metric.sqrt_det)};
  FastSamplerGroup gsamp(grid, gspec);
  double worst = 0.0;
  for (int f = 0; f < tm.X.frames; ++f) {
    // J_ij = delta_ij + d_j D^i with D = X - a periodic over labels
    std::vector<ScalarField> grad(std::size_t(d * d), ScalarField(grid));
    for (int i = 0; i < d; ++i) {
      ScalarField D = tm.X.field(f, i);
      double a[8];
      for (std::int64_t n = 0; n < N; ++n) {
        grid.node(n, a);
        D[n] -= a[i];
      }
      Spectrum c0 = spectrum_of(D);
      for (int j = 0; j < d; ++j) {
        Spectrum c = c0;
        spectral_derivative_inplace(grid, c, j, 1);
        grad[std::size_t(i * d + j)] = field_of(grid, c);
      }
    }
    double xq[8], gq[1];
    for (std::int64_t n = 0; n < N; ++n) {
      double J[8][8];
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          J[i][j] = (i == j ? 1.0 : 0.0) + grad[std::size_t(i * d + j)][n];
      // determinant by Gaussian elimination (d <= 8)
      double det = 1.0;
      for (int c = 0; c < d; ++c) {
        int piv = c;
        for (int r = c + 1; r < d; ++r)
          if (std::abs(J[r][c]) > std::abs(J[piv][c])) piv = r;
        if (piv != c) {
          for (int k = 0; k < d; ++k) std::swap(J[c][k], J[piv][k]);
          det = -det;
        }
        det *= J[c][c];
        for (int r = c + 1; r < d; ++r) {
          double fac = J[r][c] / J[c][c];
          for (int k = c; k < d; ++k) J[r][k] -= fac * J[c][k];
        }
      }
      for (int c = 0; c < d; ++c) xq[c] = tm.X.frame_component(f, c)[n];
      gsamp.eval(xq, gq);
      double ratio = det * gq[0] / metric.sqrt_det[n];
      worst = std::max(worst, std::abs(ratio - 1.0));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Label-map files: "LABL1", the label components in the field format, then
// the recorded displacement bound.

inline void save_labels(const std::string& path, const LabelMap& lm) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("LABL1", 5);
  write_field_binary(os, lm.A);
  detail::put_f64(os, lm.max_displacement);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline LabelMap load_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "LABL1", 5) != 0)
    throw std::runtime_error(path + ": bad magic (expected LABL1)");
  LabelMap lm;
  lm.A = read_field_binary(is, path);
  lm.max_displacement = detail::get_f64(is);
  if (!is) throw std::runtime_error(path + ": truncated trailer");
  require(lm.A.components == lm.A.grid.d, "load_labels: component count must match dimension");
  return lm;
}

}  // namespace eulerext
