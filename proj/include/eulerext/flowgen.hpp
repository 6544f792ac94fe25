#pragma once
// Incompressible flows with componentwise drift bounds: the canonical
// analytic shear, randomized drift flows from antisymmetric potentials, and
// the admissibility report (every velocity component strictly between 1/(8T)
// and 1/(4T), which caps total displacement below 1/4).

#include <random>
#include <sstream>
#include <vector>

#include "core.hpp"
#include "field.hpp"
#include "geometry.hpp"
#include "io.hpp"

namespace eulerext {

struct Flow {
  MetricField metric;
  TimeDependentField u;  // d velocity components per frame
  double T = 1.0;
  bool steady = false;
  bool in_U = false;

  int d() const { return metric.d; }
  const PeriodicGrid& grid() const { return metric.grid; }
};

struct URangeReport {
  double lo = 0.0, hi = 0.0;               // required open interval
  std::vector<double> cmin, cmax;          // per-component extremes over spacetime
  bool pass = false;
  double margin = 0.0;                     // min distance to either bound
};

inline URangeReport check_in_U(const Flow& flow) {
  URangeReport rep;
  rep.lo = 1.0 / (8.0 * flow.T);
  rep.hi = 1.0 / (4.0 * flow.T);
  int d = flow.d();
  rep.cmin.assign(std::size_t(d), 1e300);
  rep.cmax.assign(std::size_t(d), -1e300);
  for (int f = 0; f < flow.u.frames; ++f)
    for (int c = 0; c < d; ++c) {
      const double* v = flow.u.frame_component(f, c);
      for (std::int64_t i = 0; i < flow.grid().size(); ++i) {
        rep.cmin[std::size_t(c)] = std::min(rep.cmin[std::size_t(c)], v[i]);
        rep.cmax[std::size_t(c)] = std::max(rep.cmax[std::size_t(c)], v[i]);
      }
    }
  rep.pass = true;
  rep.margin = 1e300;
  for (int c = 0; c < d; ++c) {
    if (!(rep.cmin[std::size_t(c)] > rep.lo && rep.cmax[std::size_t(c)] < rep.hi)) rep.pass = false;
    rep.margin = std::min(rep.margin, rep.cmin[std::size_t(c)] - rep.lo);
    rep.margin = std::min(rep.margin, rep.hi - rep.cmax[std::size_t(c)]);
  }
  return rep;
}

// Max |div_g u| over frames (steady flows are checked once).
inline double max_divergence(const Flow& flow) {
  double worst = 0.0;
  int last = flow.steady ? 1 : flow.u.frames;
  for (int f = 0; f < last; ++f) {
    VectorField uf;
    for (int c = 0; c < flow.d(); ++c) uf.push_back(flow.u.field(f, c));
    worst = std::max(worst, sup_norm(divergence(flow.metric, uf)));
  }
  return worst;
}

// Steady shear on the flat 2-torus: u = (3/(16T), 3/(16T) + eps sin 2pi x1).
// Divergence vanishes identically; membership in U needs eps < 1/(16T).
inline Flow canonical_shear(const PeriodicGrid& grid, int frames, double T, double eps) {
  require(grid.d == 2, "canonical_shear: requires a 2-dimensional grid");
  require(T > 0.0, "canonical_shear: T must be positive");
  double bound = 1.0 / (16.0 * T);
  if (!(eps > 0.0 && eps < bound)) {
    std::ostringstream os;
    os << "canonical_shear: epsilon must lie in (0, 1/(16T)) = (0, " << bound << "), got " << eps;
    throw std::invalid_argument(os.str());
  }
  Flow flow;
  flow.metric = flat_metric(grid);
  flow.T = T;
  flow.steady = true;
  flow.u = TimeDependentField(grid, 2, frames, T);
  double drift = 3.0 / (16.0 * T);
  std::size_t N = std::size_t(grid.size());
  std::vector<double> u1(N), u2(N);
  double x[2];
  for (std::size_t i = 0; i < N; ++i) {
    grid.node(std::int64_t(i), x);
    u1[i] = drift;
    u2[i] = drift + eps * std::sin(kTau * x[0]);
  }
  for (int f = 0; f < frames; ++f) {
    std::copy(u1.begin(), u1.end(), flow.u.frame_component(f, 0));
    std::copy(u2.begin(), u2.end(), flow.u.frame_component(f, 1));
  }
  flow.in_U = check_in_U(flow).pass;
  return flow;
}

// Random steady flow u^i = (drift + w^i)/sqrt(det g), with w^i = sum_j d_j q_ij
// for a random band-limited antisymmetric potential q. The potential makes w
// exactly divergence-free in the flat sense, and the sqrt(det g) division
// turns that into div_g u = 0 exactly. w is rescaled so sup|w| = amplitude.
inline Flow make_drift_flow(const PeriodicGrid& grid, int frames, double T,
                            const MetricField& metric, std::uint64_t seed, double amplitude) {
  require(T > 0.0, "make_drift_flow: T must be positive");
  require(amplitude >= 0.0, "make_drift_flow: amplitude must be nonnegative");
  require(metric.grid == grid, "make_drift_flow: metric grid mismatch");
  int d = grid.d;
  std::int64_t N = grid.size();
  double drift = 3.0 / (16.0 * T);

  // q_ij = -q_ji, each a few random low modes.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<ScalarField> q(std::size_t(d * d), ScalarField(grid));
  const int kmax = 2;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      ScalarField& qij = q[std::size_t(i * d + j)];
      std::vector<int> mode(std::size_t(d), 0);
      // sum over a handful of modes with |k|_inf <= kmax
      for (int t = 0; t < 4; ++t) {
        for (int a = 0; a < d; ++a) mode[std::size_t(a)] = int(std::llround(unif(rng) * kmax));
        double amp_c = unif(rng), amp_s = unif(rng);
        double x[8];
        for (std::int64_t f = 0; f < N; ++f) {
          grid.node(f, x);
          double phase = 0.0;
          for (int a = 0; a < d; ++a) phase += mode[std::size_t(a)] * x[a];
          qij[f] += amp_c * std::cos(kTau * phase) + amp_s * std::sin(kTau * phase);
        }
      }
      ScalarField& qji = q[std::size_t(j * d + i)];
      for (std::int64_t f = 0; f < N; ++f) qji[f] = -qij[f];
    }

  // w^i = sum_j partial_j q_ij (spectral derivatives)
  std::size_t nd = std::size_t(d);
  VectorField w(nd, ScalarField(grid));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      if (i == j) continue;
      Spectrum c = spectrum_of(q[std::size_t(i * d + j)]);
      spectral_derivative_inplace(grid, c, j, 1);
      ScalarField der = field_of(grid, c);
      for (std::int64_t f = 0; f < N; ++f) w[std::size_t(i)][f] += der[f];
    }
  double wmax = 0.0;
  for (int i = 0; i < d; ++i) wmax = std::max(wmax, sup_norm(w[std::size_t(i)]));
  if (amplitude == 0.0 || wmax == 0.0) {
    for (int i = 0; i < d; ++i) std::fill(w[std::size_t(i)].v.begin(), w[std::size_t(i)].v.end(), 0.0);
  } else {
    double scale = amplitude / wmax;
    for (int i = 0; i < d; ++i)
      for (std::int64_t f = 0; f < N; ++f) w[std::size_t(i)][f] *= scale;
  }

  Flow flow;
  flow.metric = metric;
  flow.T = T;
  flow.steady = true;
  flow.u = TimeDependentField(grid, d, frames, T);
  std::size_t NN = std::size_t(N);
  for (int i = 0; i < d; ++i) {
    std::vector<double> ui(NN);
    for (std::int64_t f = 0; f < N; ++f)
      ui[std::size_t(f)] = (drift + w[std::size_t(i)][f]) / metric.sqrt_det[f];
    for (int fr = 0; fr < frames; ++fr)
      std::copy(ui.begin(), ui.end(), flow.u.frame_component(fr, i));
  }

  URangeReport rep = check_in_U(flow);
  if (!rep.pass) {
    // locate the worst offending node for the error message
    int worst_c = 0;
    double worst_excess = -1.0;
    std::int64_t worst_node = 0;
    for (int c = 0; c < d; ++c) {
      const double* v = flow.u.frame_component(0, c);
      for (std::int64_t f = 0; f < N; ++f) {
        double excess = std::max(rep.lo - v[f], v[f] - rep.hi);
        if (excess > worst_excess) {
          worst_excess = excess;
          worst_c = c;
          worst_node = f;
        }
      }
    }
    double x[8];
    grid.node(worst_node, x);
    std::ostringstream os;
    os << "make_drift_flow: component " << (worst_c + 1) << " leaves ("
       << rep.lo << ", " << rep.hi << ") by " << worst_excess << " at node (";
    for (int a = 0; a < d; ++a) os << (a ? "," : "") << x[a];
    os << "); reduce amplitude";
    throw std::invalid_argument(os.str());
  }
  flow.in_U = true;
  return flow;
}

// ---------------------------------------------------------------------------
// Flow and metric files. A flow file is "FLOW1", the steady and membership
// flags, the velocity frames in the field format (which fixes the grid and
// horizon), then the raw metric entries (d*d scalar fields, row-major). A
// metric file is "METR1", the grid header, then the same raw entries.

inline void write_metric_entries(std::ostream& os, const MetricField& m) {
  std::int64_t N = m.grid.size();
  for (int i = 0; i < m.d * m.d; ++i)
    os.write(reinterpret_cast<const char*>(m.g[std::size_t(i)].v.data()),
             std::streamsize(N * 8));
}

inline MetricField read_metric_entries(std::istream& is, const PeriodicGrid& grid, int d,
                                       const std::string& what) {
  std::vector<ScalarField> entries;
  for (int i = 0; i < d * d; ++i) {
    ScalarField e(grid);
    is.read(reinterpret_cast<char*>(e.v.data()), std::streamsize(grid.size() * 8));
    entries.push_back(std::move(e));
  }
  if (!is) throw std::runtime_error(what + ": truncated metric block");
  return build_metric(grid, entries);
}

inline void save_flow(const std::string& path, const Flow& flow) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("FLOW1", 5);
  detail::put_u32(os, flow.steady ? 1 : 0);
  detail::put_u32(os, flow.in_U ? 1 : 0);
  write_field_binary(os, flow.u);
  write_metric_entries(os, flow.metric);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline Flow load_flow(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "FLOW1", 5) != 0)
    throw std::runtime_error(path + ": bad magic (expected FLOW1)");
  Flow flow;
  flow.steady = detail::get_u32(is) != 0;
  flow.in_U = detail::get_u32(is) != 0;
  flow.u = read_field_binary(is, path);
  flow.T = flow.u.T;
  require(flow.u.components == flow.u.grid.d, "load_flow: component count must match dimension");
  flow.metric = read_metric_entries(is, flow.u.grid, flow.u.grid.d, path);
  return flow;
}

inline void save_metric(const std::string& path, const MetricField& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("METR1", 5);
  detail::put_u32(os, std::uint32_t(m.grid.d));
  for (int a = 0; a < m.grid.d; ++a) detail::put_u32(os, std::uint32_t(m.grid.n[a]));
  write_metric_entries(os, m);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline MetricField load_metric(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "METR1", 5) != 0)
    throw std::runtime_error(path + ": bad magic (expected METR1)");
  std::uint32_t d = detail::get_u32(is);
  if (d < 1 || d > 8) throw std::runtime_error(path + ": unsupported dimension");
  std::vector<int> dims;
  for (std::uint32_t a = 0; a < d; ++a) dims.push_back(int(detail::get_u32(is)));
  if (!is) throw std::runtime_error(path + ": truncated header");
  return read_metric_entries(is, PeriodicGrid(dims), int(d), path);
}

}  // namespace eulerext
