#include "bscloth/checks.hpp"

#include "bscloth/scene.hpp"
#include "bscloth/solver.hpp"
#include "bscloth/sparse.hpp"
#include "bscloth/system.hpp"
#include "bscloth/world.hpp"

#include <tbb/global_control.h>

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

namespace bscloth {

CheckResult make_check(const std::string& suite, const std::string& name, double value,
                       double threshold, const std::string& detail, bool at_least) {
  CheckResult r{suite, name, value, threshold, at_least, false, detail};
  r.pass = std::isfinite(value) && (at_least ? value >= threshold : value < threshold);
  return r;
}

std::string format_check(const CheckResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s %s/%s value=%.6g %s %.6g", r.pass ? "PASS" : "FAIL", r.suite.c_str(),
                r.name.c_str(), r.value, r.at_least ? ">=" : "<", r.threshold);
  std::string s = buf;
  if (!r.detail.empty()) s += " (" + r.detail + ")";
  return s;
}

// ---------------------------------------------------------------------------
// basis

std::vector<CheckResult> check_basis() {
  std::mt19937 rng(7);
  double pou = 0.0, neg = 0.0, d1_sum = 0.0, d2_sum = 0.0, fd = 0.0;
  for (int n : {3, 4, 7, 12}) {
    const KnotVector k(n);
    std::uniform_real_distribution<double> xi(k.front(), k.back());
    for (int t = 0; t < 200; ++t) {
      const double x = t == 0 ? k.front() : t == 1 ? k.back() : xi(rng);
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const double b = eval_basis_1d(k, i, x);
        s += b;
        neg = std::max(neg, -b);
      }
      pou = std::max(pou, std::abs(s - 1.0));
      const ActiveBasis a = active_basis(k, x);
      double s1 = 0.0, s2 = 0.0;
      for (const auto& b : a.b) {
        s1 += b.d1;
        s2 += b.d2;
      }
      d1_sum = std::max(d1_sum, std::abs(s1));
      d2_sum = std::max(d2_sum, std::abs(s2));
      // Derivative vs central differences, away from knots.
      const double h = 1e-6;
      if (std::abs(x - std::round(x)) > 10 * h) {
        for (int i = 0; i < n; ++i) {
          const double d = (eval_basis_1d(k, i, x + h) - eval_basis_1d(k, i, x - h)) / (2 * h);
          fd = std::max(fd, std::abs(d - eval_basis_derivs_1d(k, i, x).d1));
        }
      }
    }
  }
  return {make_check("basis", "partition_of_unity", pou, 1e-12),
          make_check("basis", "non_negative", neg, 1e-15),
          make_check("basis", "derivative_sum", std::max(d1_sum, d2_sum), 1e-10),
          make_check("basis", "derivative_vs_fd", fd, 1e-6)};
}

// ---------------------------------------------------------------------------
// gradients

namespace {

SheetSetup check_sheet(int n) {
  SheetSetup st;
  st.sheet = SplineSheet::rectangle(n, n, 1.0, 1.0);
  st.material = MaterialParams::from_moduli(2e6, 1e4, 8e3, 3.18e-4, 0.243);
  st.areal_density = 0.15;
  return st;
}

double max_abs(const Eigen::VectorXd& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

std::vector<CheckResult> check_gradients(const std::vector<int>& resolutions, int configs) {
  std::mt19937 rng(11);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double worst_g = 0.0, worst_h = 0.0;
  int count = 0;
  for (int n : resolutions) {
    const SheetSetup st = check_sheet(n);
    ContactSetup contact;
    contact.params = {1e-3, 1e3};
    contact.colliders = {Collider{}};
    const ClothSystem with_contact = build_system({st}, contact, Vec3(0, 0, -9.81));
    ContactSetup none;
    none.enabled = false;
    const ClothSystem elastic_only = build_system({st}, none, Vec3(0, 0, -9.81));
    const double spacing = 1.0 / (n - 1);
    const int nc = with_contact.num_control;
    for (int c = 0; c < configs; ++c, ++count) {
      std::vector<Vec3> x = with_contact.initial_positions(), xhat(nc);
      for (auto& p : x) {
        p.x() += 0.05 * spacing * n01(rng);
        p.y() += 0.05 * spacing * n01(rng);
        p.z() = 5e-4 + 2e-4 * uni(rng);  // every mesh vertex inside the barrier band
      }
      for (int i = 0; i < nc; ++i) xhat[i] = x[i] + 1e-3 * Vec3(n01(rng), n01(rng), n01(rng));

      // Gradient against central differences of the potential.
      const double dt = 0.01;
      const auto g = ip_gradient(with_contact, x, xhat, dt);
      Eigen::VectorXd ga(3 * nc), gf(3 * nc);
      const double h = 1e-7;
      for (int i = 0; i < nc; ++i) {
        for (int a = 0; a < 3; ++a) {
          ga[3 * i + a] = g[i][a];
          std::vector<Vec3> xp = x, xm = x;
          xp[i][a] += h;
          xm[i][a] -= h;
          gf[3 * i + a] = (incremental_potential(with_contact, xp, xhat, dt) -
                           incremental_potential(with_contact, xm, xhat, dt)) /
                          (2 * h);
        }
      }
      worst_g = std::max(worst_g, max_abs(ga - gf) / max_abs(ga));

      // Unprojected elastic Hessian against differences of the gradient.
      const double dt_h = 1.0;
      Derivatives der;
      evaluate_derivatives(elastic_only, x, xhat, dt_h, der, Projection::None);
      const Eigen::MatrixXd ha = der.elastic.to_dense();
      Eigen::MatrixXd hf(3 * nc, 3 * nc);
      const double hh = 1e-6;
      for (int i = 0; i < nc; ++i) {
        for (int a = 0; a < 3; ++a) {
          std::vector<Vec3> xp = x, xm = x;
          xp[i][a] += hh;
          xm[i][a] -= hh;
          const auto gp = ip_gradient(elastic_only, xp, xhat, dt_h);
          const auto gm = ip_gradient(elastic_only, xm, xhat, dt_h);
          for (int j = 0; j < nc; ++j)
            for (int b = 0; b < 3; ++b) hf(3 * j + b, 3 * i + a) = (gp[j][b] - gm[j][b]) / (2 * hh);
        }
      }
      worst_h = std::max(worst_h, (ha - hf).cwiseAbs().maxCoeff() / ha.cwiseAbs().maxCoeff());
    }
  }
  const std::string detail = std::to_string(count) + " configurations";
  return {make_check("gradients", "ip_gradient_vs_fd", worst_g, 1e-4, detail),
          make_check("gradients", "elastic_hessian_vs_fd", worst_h, 1e-3, detail)};
}

// ---------------------------------------------------------------------------
// assembly

namespace {

double sparse_max_diff(const Eigen::SparseMatrix<double>& a, const Eigen::SparseMatrix<double>& b) {
  const Eigen::SparseMatrix<double> d = a - b;
  double m = 0.0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(d, k); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

}  // namespace

std::vector<CheckResult> check_assembly(const std::vector<int>& workers) {
  // Two stacked sheets closer than the barrier band: dense self contact.
  std::mt19937 rng(5);
  std::normal_distribution<double> n01;
  std::vector<SheetSetup> setups;
  for (int s = 0; s < 2; ++s) {
    SheetSetup st = check_sheet(12);
    for (auto& p : st.sheet.world_cp) p.z() = s * 6e-4 + 5e-5 * n01(rng);
    st.pinned = {0};
    setups.push_back(st);
  }
  ContactSetup contact;
  contact.params = {1e-3, 1e3};
  const ClothSystem sys = build_system(setups, contact, Vec3::Zero());
  const int n = sys.num_control;
  const std::vector<Vec3> x = sys.initial_positions();

  std::vector<double> hm(sys.plan.membrane.hess_size);
  for (std::size_t q = 0; q < sys.membrane.size(); ++q)
    membrane_eval(sys.membrane[q], x, sys.materials[sys.membrane_sheet[q]], Projection::Psd, nullptr,
                  hm.data() + sys.plan.membrane.hess_offset[q]);
  const Eigen::SparseMatrix<double> elastic_oracle =
      elasticity_triplets(sys.membrane, hm, sys.plan.membrane, n, sys.pinned) +
      elasticity_triplets(sys.bending, sys.bending_hess, sys.plan.bending, n, sys.pinned);

  const auto xm = sys.mesh.positions(x);
  auto pairs = find_active_pairs(sys.mesh, xm, sys.contact.colliders, sys.contact.params, true);
  for (auto& p : pairs) barrier_local(p, xm, sys.contact.colliders, sys.contact.params);
  const Eigen::SparseMatrix<double> contact_oracle = contact_hessian_triplets(pairs, sys.mesh, n, sys.pinned);

  std::vector<CheckResult> out;
  out.push_back(make_check("assembly", "active_pairs", static_cast<double>(pairs.size()), 500.0, {}, true));
  for (int w : workers) {
    tbb::global_control gc(tbb::global_control::max_allowed_parallelism, w);
    BlockSparseMatrix m = sys.plan.skeleton;
    assemble_elasticity(sys.plan.membrane, hm, m);
    assemble_elasticity(sys.plan.bending, sys.bending_hess, m, true);
    ContactAssemblyStats stats;
    const BlockSparseMatrix c = convert_contact_hessian(pairs, sys.mesh, xm, n, sys.pinned, contact_cells(), &stats);
    const std::string tag = "workers=" + std::to_string(w);
    out.push_back(make_check("assembly", "elasticity_vs_oracle[" + tag + "]", sparse_max_diff(m.to_eigen(), elastic_oracle),
                             1e-12));
    out.push_back(make_check("assembly", "contact_vs_oracle[" + tag + "]", sparse_max_diff(c.to_eigen(), contact_oracle),
                             1e-12, std::to_string(stats.cells) + " cells, " +
                                        std::to_string(stats.cross_cell_merges) + " cross-cell blocks"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// solver

std::vector<CheckResult> check_solver() {
  std::vector<CheckResult> out;
  {
    auto solve_d = [](const Eigen::VectorXd& v) { return Eigen::VectorXd(v / 2.0); };
    auto apply_b = [](const Eigen::VectorXd& v) { return Eigen::VectorXd(v.reverse()); };
    const auto r = neumann_solve(solve_d, apply_b, Eigen::VectorXd::Ones(2), 1e-11, 40);
    const double err = (r.x - Eigen::VectorXd::Constant(2, 1.0 / 3.0)).cwiseAbs().maxCoeff();
    out.push_back(make_check("solver", "neumann_hand_example_error", r.accepted ? err : INFINITY, 1e-10,
                             std::to_string(r.terms) + " terms"));
  }
  SceneConfig cfg = builtin_scene("bounce");
  cfg.solver.verify_partial = true;
  World w(cfg);
  int triggers = 0, accepted = 0;
  double neumann = 0.0, gap = 0.0, direct = 0.0, min_d = INFINITY;
  for (int k = 0; k < cfg.frames; ++k) {
    const StepReport r = w.step();
    triggers += r.pf_triggers;
    accepted += r.pf_accepted;
    neumann = std::max(neumann, r.max_neumann_residual);
    gap = std::max(gap, r.max_partial_ip_gap);
    direct = std::max(direct, r.max_direct_residual);
    min_d = std::min(min_d, w.min_contact_distance());
  }
  const std::string detail = std::to_string(accepted) + "/" + std::to_string(triggers) + " accepted";
  out.push_back(make_check("solver", "partial_solves_accepted", accepted, 1.0, detail, true));
  out.push_back(make_check("solver", "neumann_residual", neumann, cfg.solver.neumann_tol, detail));
  out.push_back(make_check("solver", "partial_vs_direct_ip_gap", gap, 1e-8));
  out.push_back(make_check("solver", "direct_residual", direct, 1e-10));
  out.push_back(make_check("solver", "min_contact_distance", min_d, std::numeric_limits<double>::min(), {}, true));
  return out;
}

std::vector<std::string> check_suite_names() { return {"basis", "gradients", "assembly", "solver"}; }

std::vector<CheckResult> run_check_suite(const std::string& name) {
  if (name == "basis") return check_basis();
  if (name == "gradients") return check_gradients();
  if (name == "assembly") return check_assembly();
  if (name == "solver") return check_solver();
  throw ConfigError("unknown check suite '" + name + "'");
}

}  // namespace bscloth
