#include "bscloth/system.hpp"

#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace bscloth {

namespace {

void offset_stencils(std::vector<QuadPoint>& qps, int offset) {
  for (QuadPoint& qp : qps)
    for (int a = 0; a < qp.count; ++a) qp.stencil[a] += offset;
}

std::vector<Vec3> mesh_positions(const ContactMesh& mesh, std::span<const Vec3> x) {
  std::vector<Vec3> out(mesh.num_vertices);
  tbb::parallel_for(0, mesh.num_vertices, [&](int k) {
    const VertexWeights& w = mesh.weights[k];
    Vec3 p = Vec3::Zero();
    for (int e = 0; e < w.count; ++e) p += w.coeff[e] * x[w.control[e]];
    out[k] = p;
  });
  return out;
}

double sum_in_order(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e;
  return s;
}

double membrane_energy(const ClothSystem& sys, std::span<const Vec3> x) {
  std::vector<double> e(sys.membrane.size());
  tbb::parallel_for(std::size_t{0}, sys.membrane.size(), [&](std::size_t q) {
    e[q] = membrane_eval(sys.membrane[q], x, sys.materials[sys.membrane_sheet[q]],
                         Projection::None, nullptr, nullptr);
  });
  return sum_in_order(e);
}

double bending_energy(const ClothSystem& sys, std::span<const Vec3> x) {
  std::vector<double> e(sys.bending.size());
  tbb::parallel_for(std::size_t{0}, sys.bending.size(), [&](std::size_t q) {
    e[q] = bending_eval(sys.bending[q], x, sys.materials[sys.bending_sheet[q]], nullptr, nullptr);
  });
  return sum_in_order(e);
}

}  // namespace

int contact_cells() {
  const int limit =
      static_cast<int>(tbb::global_control::active_value(tbb::global_control::max_allowed_parallelism));
  return 4 * std::max(1, limit);
}

std::vector<Vec3> ClothSystem::initial_positions() const {
  std::vector<Vec3> x(num_control);
  for (std::size_t s = 0; s < sheets.size(); ++s)
    std::copy(sheets[s].world_cp.begin(), sheets[s].world_cp.end(), x.begin() + control_offset[s]);
  return x;
}

std::vector<Vec3> ClothSystem::initial_velocities() const {
  std::vector<Vec3> v(num_control);
  for (std::size_t s = 0; s < sheets.size(); ++s)
    std::copy(sheets[s].world_vel.begin(), sheets[s].world_vel.end(), v.begin() + control_offset[s]);
  return v;
}

ClothSystem build_system(const std::vector<SheetSetup>& setups, const ContactSetup& contact,
                         const Vec3& gravity) {
  ClothSystem sys;
  sys.gravity = gravity;
  sys.contact = contact;
  for (std::size_t s = 0; s < setups.size(); ++s) {
    const SheetSetup& st = setups[s];
    const SplineSheet& sheet = st.sheet;
    const int offset = sys.num_control;
    sys.sheets.push_back(sheet);
    sys.control_offset.push_back(offset);
    sys.materials.push_back(st.material);

    if (st.membrane) {
      auto qps = precompute_quadpoints(sheet, build_membrane_rule(sheet, st.scheme));
      offset_stencils(qps, offset);
      sys.membrane.insert(sys.membrane.end(), qps.begin(), qps.end());
      sys.membrane_sheet.insert(sys.membrane_sheet.end(), qps.size(), static_cast<int>(s));
    }
    if (st.bending) {
      auto qps = precompute_quadpoints(sheet, build_bending_rule(sheet));
      offset_stencils(qps, offset);
      sys.bending.insert(sys.bending.end(), qps.begin(), qps.end());
      sys.bending_sheet.insert(sys.bending_sheet.end(), qps.size(), static_cast<int>(s));
    }

    const MassMatrix m = build_mass(sheet, st.areal_density, 1.0);
    sys.mass.insert(sys.mass.end(), m.lumped.begin(), m.lumped.end());
    sys.pinned.resize(offset + sheet.num_control(), 0);
    for (int p : st.pinned) {
      if (p < 0 || p >= sheet.num_control()) throw ConfigError("pinned control index out of range");
      sys.pinned[offset + p] = 1;
    }

    const int su = sheet.knots_u.num_spans(), sv = sheet.knots_v.num_spans();
    const int mu = st.mesh_u > 0 ? st.mesh_u : std::max(1, static_cast<int>(std::lround(std::sqrt(2.0) * su)));
    const int mv = st.mesh_v > 0 ? st.mesh_v : std::max(1, static_cast<int>(std::lround(std::sqrt(2.0) * sv)));
    sys.mesh_vertex_offset.push_back(sys.mesh.num_vertices);
    sys.mesh.append(sample_embedded_mesh(sheet, mu, mv), offset, static_cast<int>(s));
    sys.num_control += sheet.num_control();
  }

  sys.plan = precompute_sparsity(sys.num_control, sys.membrane, sys.bending, sys.pinned);

  // The bending Hessian does not depend on the configuration.
  const std::vector<Vec3> x0 = sys.initial_positions();
  sys.bending_hess.assign(sys.plan.bending.hess_size, 0.0);
  tbb::parallel_for(std::size_t{0}, sys.bending.size(), [&](std::size_t q) {
    bending_eval(sys.bending[q], x0, sys.materials[sys.bending_sheet[q]], nullptr,
                 sys.bending_hess.data() + sys.plan.bending.hess_offset[q]);
  });
  sys.bending_matrix = sys.plan.skeleton;
  assemble_elasticity(sys.plan.bending, sys.bending_hess, sys.bending_matrix, false);
  return sys;
}

EnergyTerms potential_terms(const ClothSystem& sys, std::span<const Vec3> x) {
  EnergyTerms t;
  for (int i = 0; i < sys.num_control; ++i) t.gravity -= sys.mass[i] * sys.gravity.dot(x[i]);
  t.membrane = membrane_energy(sys, x);
  t.bending = bending_energy(sys, x);
  if (sys.contact.enabled) {
    const auto xm = mesh_positions(sys.mesh, x);
    t.barrier = barrier_energy(sys.mesh, xm, sys.contact.colliders, sys.contact.params,
                               sys.contact.self_contact);
  }
  return t;
}

double incremental_potential(const ClothSystem& sys, std::span<const Vec3> x,
                             std::span<const Vec3> xhat, double dt, EnergyTerms* terms) {
  EnergyTerms t = potential_terms(sys, x);
  const double inv = 0.5 / (dt * dt);
  for (int i = 0; i < sys.num_control; ++i) t.inertia += inv * sys.mass[i] * (x[i] - xhat[i]).squaredNorm();
  if (terms) *terms = t;
  const double total = t.total();
  return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
}

void evaluate_derivatives(const ClothSystem& sys, std::span<const Vec3> x,
                          std::span<const Vec3> xhat, double dt, Derivatives& out,
                          Projection proj, bool hessian) {
  const int n = sys.num_control;
  const double inv = 1.0 / (dt * dt);
  out.grad.assign(n, Vec3::Zero());
  EnergyTerms terms;

  // Membrane: local systems per site, then gather.
  const std::size_t nm = sys.membrane.size();
  std::vector<Vec3> local_grad(kMaxStencil * nm);
  std::vector<double> local_hess(hessian ? sys.plan.membrane.hess_size : 0);
  std::vector<double> me(nm);
  tbb::parallel_for(std::size_t{0}, nm, [&](std::size_t q) {
    me[q] = membrane_eval(sys.membrane[q], x, sys.materials[sys.membrane_sheet[q]], proj,
                          local_grad.data() + kMaxStencil * q,
                          hessian ? local_hess.data() + sys.plan.membrane.hess_offset[q] : nullptr);
  });
  terms.membrane = sum_in_order(me);
  assemble_gradient(sys.plan.membrane, local_grad, out.grad, true);

  // Bending: gradient only, the Hessian is precomputed.
  const std::size_t nb = sys.bending.size();
  local_grad.assign(kMaxStencil * nb, Vec3::Zero());
  std::vector<double> be(nb);
  tbb::parallel_for(std::size_t{0}, nb, [&](std::size_t q) {
    be[q] = bending_eval(sys.bending[q], x, sys.materials[sys.bending_sheet[q]],
                         local_grad.data() + kMaxStencil * q, nullptr);
  });
  terms.bending = sum_in_order(be);
  assemble_gradient(sys.plan.bending, local_grad, out.grad, true);

  for (int i = 0; i < n; ++i) {
    out.grad[i] += inv * sys.mass[i] * (x[i] - xhat[i]) - sys.mass[i] * sys.gravity;
    terms.inertia += 0.5 * inv * sys.mass[i] * (x[i] - xhat[i]).squaredNorm();
    terms.gravity -= sys.mass[i] * sys.gravity.dot(x[i]);
  }

  // Barrier.
  out.pairs.clear();
  if (sys.contact.enabled) {
    const auto xm = mesh_positions(sys.mesh, x);
    out.pairs = find_active_pairs(sys.mesh, xm, sys.contact.colliders, sys.contact.params,
                                  sys.contact.self_contact);
    std::vector<double> ce(out.pairs.size());
    tbb::parallel_for(std::size_t{0}, out.pairs.size(), [&](std::size_t p) {
      ce[p] = barrier_local(out.pairs[p], xm, sys.contact.colliders, sys.contact.params, proj);
    });
    terms.barrier = sum_in_order(ce);
    contact_gradient(out.pairs, sys.mesh, out.grad);
    if (hessian) {
      out.contact = convert_contact_hessian(out.pairs, sys.mesh, xm, n, sys.pinned, contact_cells());
    }
  }
  if (hessian && !sys.contact.enabled) out.contact = BlockSparseMatrix(n, std::vector<std::vector<int>>(n));

  for (int i = 0; i < n; ++i)
    if (sys.pinned[i]) out.grad[i].setZero();

  if (hessian) {
    out.elastic = sys.plan.skeleton;
    assemble_elasticity(sys.plan.membrane, local_hess, out.elastic, false);
    auto& dst = out.elastic.values();
    const auto& src = sys.bending_matrix.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    add_diagonal(out.elastic, sys.mass, dt, sys.pinned);
  }
  out.energy = terms.total();
}

std::vector<Vec3> ip_gradient(const ClothSystem& sys, std::span<const Vec3> x,
                              std::span<const Vec3> xhat, double dt) {
  Derivatives d;
  evaluate_derivatives(sys, x, xhat, dt, d, Projection::None, false);
  return d.grad;
}

}  // namespace bscloth
