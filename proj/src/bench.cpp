#include "bscloth/bench.hpp"

#include "bscloth/world.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace bscloth {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double max_abs_z(const std::vector<Vec3>& p) {
  double m = 0.0;
  for (const Vec3& v : p) m = std::max(m, std::abs(v.z()));
  return m;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

double plate_reference_deflection() {
  const SceneConfig c = builtin_scene("plate");
  const SheetMaterial& m = c.sheets[0].material;
  const double q = m.density * m.thickness * std::abs(c.gravity.z());
  const double a = c.sheets[0].lx;
  return 0.048744 * q * std::pow(a, 4) * (1.0 - m.poisson * m.poisson) /
         (m.e_bend * m.thickness * m.thickness * m.thickness);
}

PlateResult run_plate(int resolution) {
  const auto t0 = Clock::now();
  World w(builtin_scene("plate", resolution));
  const SolverParams& p = w.config().solver;
  w.relax(p.dt, w.config().frames, p.tol * p.dt);
  return {w.max_deflection(Vec3::UnitZ()), ms_since(t0)};
}

WrinkleResult run_wrinkling(int resolution) {
  const auto t0 = Clock::now();
  World w(builtin_scene("wrinkling", resolution));
  const SolverParams& p = w.config().solver;
  WrinkleResult r;
  r.step_tol = p.tol * p.dt;
  r.relax_steps = w.relax(p.dt, w.config().frames, r.step_tol);
  r.amplitude = max_abs_z(w.mesh_positions());
  r.wall_ms = ms_since(t0);
  return r;
}

MomentumResult run_momentum(int resolution, int frames) {
  const auto t0 = Clock::now();
  World w(builtin_scene("momentum", resolution));
  const Metrics m0 = w.metrics();
  MomentumResult r;
  for (const Vec3& p : m0.sheet_momentum) r.reference += p.norm();
  for (int k = 0; k < frames; ++k) {
    const StepReport rep = w.step();
    r.max_pairs = std::max(r.max_pairs, rep.max_pairs);
    r.drift = std::max(r.drift, (w.momentum() - m0.momentum).norm() / r.reference);
  }
  r.frames = frames;
  r.wall_ms = ms_since(t0);
  return r;
}

ParityResult run_hanging_parity(int resolution, int steps) {
  const auto t0 = Clock::now();
  ParityResult r;
  std::vector<std::vector<Vec3>> eq;
  for (const char* scheme : {"reduced", "full2x2"}) {
    SceneConfig c = builtin_scene("hanging", resolution);
    c.sheets[0].membrane = scheme;
    World w(c);
    long iters = 0;
    for (int k = 0; k < steps; ++k) iters += w.step().iters;
    (eq.empty() ? r.mean_iters_reduced : r.mean_iters_full) = static_cast<double>(iters) / steps;
    w.relax(1.0, 200, 1e-4);
    eq.push_back(w.positions());
  }
  const double size = builtin_scene("hanging", resolution).sheets[0].lx;
  for (std::size_t i = 0; i < eq[0].size(); ++i)
    r.equilibrium_diff = std::max(r.equilibrium_diff, (eq[0][i] - eq[1][i]).cwiseAbs().maxCoeff() / size);
  r.iter_ratio = std::max(r.mean_iters_reduced, r.mean_iters_full) /
                 std::max(std::min(r.mean_iters_reduced, r.mean_iters_full), 1e-300);
  r.wall_ms = ms_since(t0);
  return r;
}

namespace {

int near_zero_modes(const SplineSheet& s, const QuadRule& rule, const MaterialParams& mat) {
  const auto qps = precompute_quadpoints(s, rule);
  const int n = 3 * s.num_control();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (const QuadPoint& qp : qps) {
    const LocalSystem ls = membrane_local(qp, s.world_cp, mat, Projection::None);
    for (std::size_t a = 0; a < ls.stencil.size(); ++a)
      for (std::size_t b = 0; b < ls.stencil.size(); ++b)
        k.block<3, 3>(3 * ls.stencil[a], 3 * ls.stencil[b]) += ls.hess.block<3, 3>(3 * a, 3 * b);
  }
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k, Eigen::EigenvaluesOnly).eigenvalues();
  const double cut = 1e-8 * ev.maxCoeff();
  int count = 0;
  for (int i = 0; i < ev.size(); ++i) count += ev[i] < cut;
  return count;
}

}  // namespace

HourglassResult run_hourglass(int resolution) {
  // Flat square patch at rest, equal stretch and shear moduli.
  const SplineSheet s = SplineSheet::rectangle(resolution, resolution, 1.0, 1.0);
  const MaterialParams mat = MaterialParams::from_moduli(2e6, 2e6, 0.0, 1e-3, 0.3);
  HourglassResult r;
  r.dofs = 3 * s.num_control();
  r.near_zero_1x1 = near_zero_modes(s, build_membrane_rule(s, MembraneScheme::Interior1x1), mat);
  r.near_zero_reduced = near_zero_modes(s, build_membrane_rule(s, MembraneScheme::Reduced), mat);
  r.near_zero_full = near_zero_modes(s, build_membrane_rule(s, MembraneScheme::Interior2x2), mat);
  QuadRule all;
  all.kind = RuleKind::Membrane;
  for (int t = 0; t < s.knots_v.num_spans(); ++t) {
    for (int u = 0; u < s.knots_u.num_spans(); ++u) {
      QuadSite q;
      q.u = u + 0.5;
      q.v = t + 0.5;
      q.weight = 1.0;
      all.points.push_back(q);
    }
  }
  r.near_zero_1x1_all_spans = near_zero_modes(s, all, mat);
  return r;
}

std::vector<std::string> benchmark_names() {
  return {"plate", "wrinkling", "momentum", "hanging", "quadrature-ablation"};
}

std::vector<int> default_resolutions(const std::string& name) {
  if (name == "plate") return {16, 32, 64};
  if (name == "wrinkling") return {80, 100};
  if (name == "momentum") return {16};
  if (name == "hanging") return {32};
  if (name == "quadrature-ablation") return {6};
  throw ConfigError("unknown benchmark '" + name + "'");
}

std::vector<BenchRow> run_benchmark(const std::string& name, const std::vector<int>& resolutions) {
  default_resolutions(name);  // validates the name
  std::vector<BenchRow> rows;
  for (int n : resolutions) {
    if (name == "plate") {
      const double target = plate_reference_deflection();
      const PlateResult r = run_plate(n);
      rows.push_back({name, n, "max_deflection_m", r.deflection, target, std::abs(r.deflection - target) / target,
                      r.wall_ms});
    } else if (name == "wrinkling") {
      const WrinkleResult r = run_wrinkling(n);
      rows.push_back({name, n, "out_of_plane_amplitude_m", r.amplitude, kNaN, kNaN, r.wall_ms});
    } else if (name == "momentum") {
      const MomentumResult r = run_momentum(n);
      rows.push_back({name, n, "momentum_drift_rel", r.drift, 0.0, r.drift, r.wall_ms});
      rows.push_back({name, n, "max_contact_pairs", static_cast<double>(r.max_pairs), kNaN, kNaN, 0.0});
    } else if (name == "hanging") {
      const ParityResult r = run_hanging_parity(n);
      rows.push_back({name, n, "mean_newton_reduced", r.mean_iters_reduced, kNaN, kNaN, r.wall_ms});
      rows.push_back({name, n, "mean_newton_full2x2", r.mean_iters_full, kNaN, kNaN, 0.0});
      rows.push_back({name, n, "newton_ratio", r.iter_ratio, 1.0, r.iter_ratio - 1.0, 0.0});
      rows.push_back({name, n, "equilibrium_diff_rel", r.equilibrium_diff, 0.0, r.equilibrium_diff, 0.0});
    } else {
      const auto t0 = Clock::now();
      const HourglassResult r = run_hourglass(n);
      const double ms = ms_since(t0);
      rows.push_back({name, n, "near_zero_modes_1x1", static_cast<double>(r.near_zero_1x1), kNaN, kNaN, ms});
      rows.push_back({name, n, "near_zero_modes_reduced", static_cast<double>(r.near_zero_reduced), kNaN, kNaN, 0.0});
      rows.push_back({name, n, "near_zero_modes_full2x2", static_cast<double>(r.near_zero_full), kNaN, kNaN, 0.0});
      rows.push_back({name, n, "near_zero_modes_1x1_all_spans", static_cast<double>(r.near_zero_1x1_all_spans), kNaN,
                      kNaN, 0.0});
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream s;
  s << "benchmark,resolution,quantity,measured,target,rel_error,wall_ms\n";
  auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  for (const BenchRow& r : rows)
    s << r.benchmark << ',' << r.resolution << ',' << r.quantity << ',' << num(r.measured) << ',' << num(r.target)
      << ',' << num(r.rel_error) << ',' << num(r.wall_ms) << '\n';
  return s.str();
}

}  // namespace bscloth
