// Command-line driver: generate admissible flows, run the extension pipeline,
// verify certificates, run the solver and stability experiments, and print
// jet-space dimension tables. Deterministic by construction: all randomness
// is seeded, no timestamps reach any output.
//
// Exit codes: 0 success, 1 verification failure, 2 I/O or argument error.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <eulerext/boussinesq.hpp>
#include <eulerext/dof.hpp>
#include <eulerext/extender.hpp>
#include <eulerext/flowgen.hpp>
#include <eulerext/forcing.hpp>
#include <eulerext/lagrange.hpp>
#include <eulerext/verifier.hpp>

namespace {

using namespace eulerext;

std::vector<int> expand_grid(std::vector<int> dims, int d) {
  if (int(dims.size()) == 1 && d > 1) dims.assign(std::size_t(d), dims[0]);
  require(int(dims.size()) == d, "--grid must give one size or one per dimension");
  for (int n : dims) require(n >= 4, "--grid entries must be >= 4");
  return dims;
}

int label_substeps(double dt) {
  require(dt > 0.0, "--dt must be positive");
  long s = std::lround(1.0 / dt);
  require(s >= 1 && std::abs(double(s) * dt - 1.0) <= 1e-9,
          "--dt must divide the unit time interval");
  return int(s);
}

VectorField frame_velocity(const Flow& flow, int frame) {
  VectorField u;
  for (int c = 0; c < flow.d(); ++c) u.push_back(flow.u.field(frame, c));
  return u;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

// --- gen -------------------------------------------------------------------

struct GenArgs {
  int d = 2;
  double T = 1.0;
  std::vector<int> grid{64};
  int frames = 257;
  std::uint64_t seed = 1;
  double amplitude = 1.0 / 32.0;
  std::string family = "auto";
  std::string metric = "flat";
  std::string out;
};

int run_gen(const GenArgs& a) {
  PeriodicGrid grid(expand_grid(a.grid, a.d));
  std::string family = a.family;
  if (family == "auto") family = a.d == 2 ? "shear" : "drift";

  Flow flow;
  if (family == "shear") {
    require(a.metric == "flat", "the shear family fixes the flat metric");
    flow = canonical_shear(grid, a.frames, a.T, a.amplitude);
  } else if (family == "drift") {
    MetricField m = a.metric == "flat" ? flat_metric(grid) : load_metric(a.metric);
    flow = make_drift_flow(grid, a.frames, a.T, m, a.seed, a.amplitude);
  } else {
    throw std::invalid_argument("--family must be auto, shear or drift");
  }

  save_flow(a.out, flow);
  std::printf("wrote flow: %s (d=%d, frames=%d, T=%g, family=%s)\n", a.out.c_str(), a.d,
              a.frames, a.T, family.c_str());
  URangeReport rep = check_in_U(flow);
  std::printf("in U: %s (components within (%.6g, %.6g), margin %.6g)\n",
              rep.pass ? "yes" : "no", rep.lo, rep.hi, rep.margin);
  std::printf("max divergence: %.3e\n", max_divergence(flow));
  return 0;
}

// --- extend ------------------------------------------------------------------

struct ExtendArgs {
  std::string flow;
  int K = 16;
  double dt = 1.0 / 256.0;
  int sample_stride = 32;
  double lambda = 1e-9;
  std::string out;
  std::string labels_out;
  std::string forcing_out;
};

int run_extend(const ExtendArgs& a) {
  Flow flow = load_flow(a.flow);
  require(a.K >= 0, "--K must be nonnegative");
  int substeps = label_substeps(a.dt);

  LabelMap lm = label_map(flow, substeps);
  std::printf("labels: max displacement %.6f (bound 0.25)\n", lm.max_displacement);

  std::vector<SampleSet> sets = image_samples(lm, material_force(flow), a.sample_stride);
  double lam = a.lambda * double(sets[0].val.size());
  FitResult fit = fit_separable(sets, a.K, lam);
  for (std::size_t i = 0; i < fit.reports.size(); ++i)
    std::printf("fit direction %zu: rms %.3e over %zu samples (%d terms)\n", i + 1,
                fit.reports[i].rms_residual, fit.reports[i].samples, fit.reports[i].terms);

  std::vector<LocalizedTerm> terms = partition_localize(fit.forcing);
  for (auto& t : terms) t = antiderivative(mean_zero_adjust(t));
  ExtensionData ext = assemble_extension(terms, lm, flow);
  positivize(ext);
  close_volume(ext);
  write_extension(ext, a.out);
  std::printf("wrote extension: %s (%d swirl slots + closure, K=%d)\n", a.out.c_str(),
              ext.swirl_slots(), a.K);
  if (!a.labels_out.empty()) {
    save_labels(a.labels_out, lm);
    std::printf("wrote labels: %s\n", a.labels_out.c_str());
  }
  if (!a.forcing_out.empty()) {
    write_forcing(a.forcing_out, fit.forcing);
    std::printf("wrote forcing: %s\n", a.forcing_out.c_str());
  }

  VerifyReport vr = verify_boussinesq_form(ext, lm, flow);
  std::printf("residual summary: projected momentum %.6e, transport %.6e\n", vr.momentum_max,
              vr.transport_max);
  if (vr.momentum_max > 1e-3)
    std::printf("warning: momentum residual exceeds 1e-3; consider a larger --K\n");
  return 0;
}

// --- verify ------------------------------------------------------------------

struct VerifyArgs {
  std::string flow;
  std::string ext;
  VerifyOptions opt;
  std::string csv_residual;
  std::string csv_energy;
};

int run_verify(const VerifyArgs& a) {
  Flow flow = load_flow(a.flow);
  ExtensionData ext = read_extension(a.ext);
  int substeps = ext.substeps > 0 ? ext.substeps : 256;
  LabelMap lm = label_map(flow, substeps);

  CertificateReport rep = verify_certificate(ext, lm, flow, a.opt);
  std::printf("volume condition:    %s (max deviation %.3e, tol %.1e)\n",
              rep.volume.pass ? "pass" : "FAIL", rep.volume.max_deviation, a.opt.volume_tol);
  std::printf("incompressibility:   %s (max divergence %.3e, tol %.1e)\n",
              rep.divergence.pass ? "pass" : "FAIL", rep.divergence.max_divergence,
              a.opt.divergence_tol);
  std::printf("momentum residual:   %s (projected %.3e, tol %.1e)\n",
              rep.momentum.pass ? "pass" : "FAIL", rep.momentum.momentum_max, a.opt.momentum_tol);
  std::printf("transport residual:  %s (max %.3e, tol %.1e)\n",
              rep.momentum.transport_max <= a.opt.transport_tol ? "pass" : "FAIL",
              rep.momentum.transport_max, a.opt.transport_tol);
  std::printf("pressure chain:      %s (worst %.3e, tol %.1e, min density %.6f)\n",
              rep.chain.pass ? "pass" : "FAIL", rep.chain.worst, a.opt.chain_tol,
              rep.chain.min_rho);
  if (!rep.energy.frames.empty())
    std::printf("energy: drift %.3e (relative %.3e), horizontal variation %.3e\n",
                rep.energy.max_drift, rep.energy.relative_drift,
                rep.energy.horizontal_variation);

  if (!a.csv_residual.empty()) {
    std::ofstream os = open_out(a.csv_residual);
    write_residual_csv(os, rep.momentum);
  }
  if (!a.csv_energy.empty()) {
    std::ofstream os = open_out(a.csv_energy);
    write_energy_csv(os, rep.energy);
  }

  if (rep.pass) {
    std::printf("VERIFY: PASS\n");
    return 0;
  }
  std::printf("VERIFY: FAIL — %s\n", rep.failure.c_str());
  return 1;
}

// --- simulate ----------------------------------------------------------------

struct SimulateArgs {
  std::string flow;
  std::string forcing = "none";
  double T = 0.0;  // 0 = use the flow horizon
  double dt = 1.0 / 256.0;
  int emit_stride = 1;
  bool no_labels = false;
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  Flow flow = load_flow(a.flow);
  SolverProblem prob;
  prob.metric = flow.metric;
  prob.u0 = frame_velocity(flow, 0);
  if (a.forcing != "none") prob.forcing = read_forcing(a.forcing);

  SolverConfig cfg;
  cfg.T = a.T > 0.0 ? a.T : flow.T;
  cfg.dt = a.dt;
  cfg.emit_stride = a.emit_stride;
  cfg.track_labels = !a.no_labels;

  Trajectory traj = solve(prob, cfg);
  ConservationReport rep = conserved_energy_check(traj, prob.slots);
  std::printf("simulated %d steps (dt=%g, %d frames kept)\n",
              int(std::lround(cfg.T / cfg.dt)), cfg.dt, traj.frames());
  std::printf("energy drift: %.6e (relative %.6e)\n", rep.max_drift, rep.relative_drift);
  if (!a.out.empty()) {
    save_trajectory(a.out, traj);
    std::printf("wrote trajectory: %s\n", a.out.c_str());
  }
  return 0;
}

// --- stability ---------------------------------------------------------------

struct StabilityArgs {
  std::string flow;
  std::string labels;
  std::string forcing;
  int levels = 5;
  double dt = 0.0;  // 0 = reference frame spacing
  std::string out;
};

int run_stability(const StabilityArgs& a) {
  Flow flow = load_flow(a.flow);
  LabelMap lm = load_labels(a.labels);
  SeparableForcing F = read_forcing(a.forcing);
  require(a.levels >= 1, "--levels must be >= 1");

  // fixed low-mode perturbation direction: first component sin(2 pi x^2)
  const PeriodicGrid& grid = flow.grid();
  require(flow.d() >= 2, "stability: need d >= 2");
  VectorField mode;
  for (int c = 0; c < flow.d(); ++c) mode.push_back(ScalarField(grid));
  int idx[8];
  for (std::int64_t p = 0; p < grid.size(); ++p) {
    grid.unflatten(p, idx);
    mode[0][p] = std::sin(kTau * grid.coord(1, idx[1]));
  }

  std::vector<int> Ns;
  for (int n = 2; n < 2 + a.levels; ++n) Ns.push_back(n);

  SolverConfig cfg;
  cfg.dt = a.dt > 0.0 ? a.dt : flow.T / double(flow.u.frames - 1);

  StabilityTable table = stability_experiment(flow, lm, F, mode, Ns, cfg);
  if (!a.out.empty()) {
    std::ofstream os = open_out(a.out);
    write_stability_csv(os, table);
  } else {
    write_stability_csv(std::cout, table);
  }
  std::printf("slope: %.4f (linear response = 1)\n", table.slope);
  std::printf("monotone: %s\n", table.monotone ? "yes" : "no");
  return 0;
}

// --- dof -----------------------------------------------------------------

struct DofArgs {
  int d = 3;
  int m = 1;
  int N_max = 20;
  std::string method = "auto";
  std::string out;
};

int run_dof(const DofArgs& a) {
  RankMethod method = RankMethod::Auto;
  if (a.method == "eliminate") method = RankMethod::Eliminate;
  else if (a.method == "certificate") method = RankMethod::Certificate;
  else require(a.method == "auto", "--method must be auto, eliminate or certificate");

  ThresholdReport rep = find_threshold(a.d, a.m, a.N_max, method);
  if (!a.out.empty()) {
    std::ofstream os = open_out(a.out);
    write_threshold_csv(os, rep);
  } else {
    write_threshold_csv(std::cout, rep);
  }
  if (rep.threshold) {
    const ThresholdRow& row = rep.rows[std::size_t(*rep.threshold)];
    std::printf("# threshold: N = %lld (dim_WN %lld > M %lld)\n", (long long)*rep.threshold,
                (long long)row.dim_W, (long long)row.params);
  } else {
    std::printf("# threshold: none up to N = %d\n", a.N_max);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"warped-product extensions of incompressible flows"};
  app.require_subcommand(1);
  app.set_config("--config", "", "plain-text key = value file; flags override");
  int threads = 1;
  app.add_option("--threads", threads, "worker cap (modules in this build are single-threaded)")
      ->check(CLI::PositiveNumber);

  GenArgs gen;
  CLI::App* cgen = app.add_subcommand("gen", "generate an admissible flow");
  cgen->fallthrough();
  cgen->add_option("--d", gen.d, "spatial dimension")->check(CLI::Range(2, 4));
  cgen->add_option("--T", gen.T, "time horizon");
  cgen->add_option("--grid", gen.grid, "grid size (one value or one per dimension)")
      ->delimiter(',');
  cgen->add_option("--frames", gen.frames, "stored time frames");
  cgen->add_option("--seed", gen.seed, "random seed (drift family)");
  cgen->add_option("--amplitude", gen.amplitude, "deviation amplitude");
  cgen->add_option("--family", gen.family, "auto | shear | drift");
  cgen->add_option("--metric", gen.metric, "flat or a metric file path");
  cgen->add_option("--out", gen.out, "output flow file")->required();

  ExtendArgs ext;
  CLI::App* cext = app.add_subcommand("extend", "run the extension pipeline");
  cext->fallthrough();
  cext->add_option("--flow", ext.flow, "input flow file")->required();
  cext->add_option("--K", ext.K, "separable fit bandwidth");
  cext->add_option("--dt", ext.dt, "label integration step");
  cext->add_option("--sample-stride", ext.sample_stride, "use every n-th frame for samples");
  cext->add_option("--lambda", ext.lambda, "per-sample ridge weight");
  cext->add_option("--out", ext.out, "output extension file")->required();
  cext->add_option("--labels-out", ext.labels_out, "also save the label map");
  cext->add_option("--forcing-out", ext.forcing_out, "also save the fitted forcing");

  VerifyArgs ver;
  CLI::App* cver = app.add_subcommand("verify", "verify an extension certificate");
  cver->fallthrough();
  cver->add_option("--flow", ver.flow, "flow file")->required();
  cver->add_option("--ext", ver.ext, "extension file")->required();
  cver->add_option("--tol-momentum", ver.opt.momentum_tol, "projected momentum tolerance");
  cver->add_option("--tol-transport", ver.opt.transport_tol, "transport tolerance");
  cver->add_option("--tol-chain", ver.opt.chain_tol, "pressure-chain tolerance");
  cver->add_option("--stride", ver.opt.stride, "verify every n-th frame (0 = auto)");
  cver->add_option("--csv-residual", ver.csv_residual, "write per-frame residual CSV");
  cver->add_option("--csv-energy", ver.csv_energy, "write per-frame energy CSV");

  SimulateArgs sim;
  CLI::App* csim = app.add_subcommand("simulate", "integrate the reduced system");
  csim->fallthrough();
  csim->add_option("--flow", sim.flow, "flow file (metric + initial velocity)")->required();
  csim->add_option("--F", sim.forcing, "forcing file or 'none'");
  csim->add_option("--T", sim.T, "horizon (default: flow horizon)");
  csim->add_option("--dt", sim.dt, "time step");
  csim->add_option("--emit-stride", sim.emit_stride, "keep every n-th step");
  csim->add_flag("--no-labels", sim.no_labels, "skip label transport");
  csim->add_option("--out", sim.out, "output trajectory file");

  StabilityArgs stab;
  CLI::App* cstab = app.add_subcommand("stability", "forcing-perturbation response");
  cstab->fallthrough();
  cstab->add_option("--flow", stab.flow, "reference flow file")->required();
  cstab->add_option("--labels", stab.labels, "reference label file")->required();
  cstab->add_option("--F", stab.forcing, "fitted forcing file")->required();
  cstab->add_option("--levels", stab.levels, "perturbation levels (N = 2..levels+1)");
  cstab->add_option("--dt", stab.dt, "solver step (default: reference frame spacing)");
  cstab->add_option("--out", stab.out, "write the distance table CSV here");

  DofArgs dof;
  CLI::App* cdof = app.add_subcommand("dof", "jet-space dimension table");
  cdof->fallthrough();
  cdof->add_option("--d", dof.d, "spatial dimension")->check(CLI::Range(1, 6));
  cdof->add_option("--m", dof.m, "number of swirl directions")->check(CLI::NonNegativeNumber);
  cdof->add_option("--N-max", dof.N_max, "largest jet order")->check(CLI::NonNegativeNumber);
  cdof->add_option("--method", dof.method, "auto | eliminate | certificate");
  cdof->add_option("--out", dof.out, "write the CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cgen->parsed()) return run_gen(gen);
    if (cext->parsed()) return run_extend(ext);
    if (cver->parsed()) return run_verify(ver);
    if (csim->parsed()) return run_simulate(sim);
    if (cstab->parsed()) return run_stability(stab);
    if (cdof->parsed()) return run_dof(dof);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
