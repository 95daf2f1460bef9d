#pragma once

#include "bscloth/contact.hpp"
#include "bscloth/elasticity.hpp"
#include "bscloth/geometry.hpp"
#include "bscloth/quadrature.hpp"
#include "bscloth/sparse.hpp"

#include <span>
#include <vector>

namespace bscloth {

/// One sheet as handed to the system builder.
struct SheetSetup {
  SplineSheet sheet;  // rest (material) grid plus initial world state
  MaterialParams material;
  double areal_density = 0.0;  // kg/m^2
  MembraneScheme scheme = MembraneScheme::Reduced;
  bool membrane = true;
  bool bending = true;
  int mesh_u = 0;  // embedded-mesh cells; 0 picks about twice the control count
  int mesh_v = 0;
  std::vector<int> pinned;  // sheet-local control indices
};

struct ContactSetup {
  bool enabled = true;
  bool self_contact = true;
  ContactParams params;
  std::vector<Collider> colliders;
};

/// Energy contributions of the incremental potential.
struct EnergyTerms {
  double inertia = 0.0;
  double gravity = 0.0;
  double membrane = 0.0;
  double bending = 0.0;
  double barrier = 0.0;
  double total() const { return inertia + gravity + membrane + bending + barrier; }
};

/// All sheets of a scene merged into one set of control points, with the
/// rest-state data the incremental potential needs.
struct ClothSystem {
  int num_control = 0;
  std::vector<SplineSheet> sheets;
  std::vector<int> control_offset;  // per sheet
  std::vector<MaterialParams> materials;  // per sheet

  std::vector<QuadPoint> membrane;  // stencils in global control indices
  std::vector<QuadPoint> bending;
  std::vector<int> membrane_sheet;
  std::vector<int> bending_sheet;

  std::vector<double> mass;   // lumped, kg
  std::vector<char> pinned;
  Vec3 gravity = Vec3::Zero();

  ContactMesh mesh;
  std::vector<int> mesh_vertex_offset;  // per sheet
  ContactSetup contact;

  SparsityPlan plan;
  std::vector<double> bending_hess;  // constant local Hessians
  BlockSparseMatrix bending_matrix;  // their assembly on the skeleton pattern

  std::vector<Vec3> initial_positions() const;
  std::vector<Vec3> initial_velocities() const;
};

ClothSystem build_system(const std::vector<SheetSetup>& sheets, const ContactSetup& contact,
                         const Vec3& gravity);

/// Incremental potential at `x` given the predicted position `xhat`.
/// Summation order is fixed, so the value does not depend on the worker count.
/// Returns +infinity when a contact distance is non-positive.
double incremental_potential(const ClothSystem& sys, std::span<const Vec3> x,
                             std::span<const Vec3> xhat, double dt, EnergyTerms* terms = nullptr);

/// Elastic and contact derivatives at one Newton iterate.
struct Derivatives {
  std::vector<Vec3> grad;         // zero on pinned control points
  BlockSparseMatrix elastic;      // inertia + membrane + bending on the skeleton
  BlockSparseMatrix contact;      // barrier Hessian (may be empty)
  std::vector<ContactPair> pairs;
  double energy = 0.0;
};

/// Gradient and (projected) Hessians of the incremental potential.
/// `proj` applies to the membrane and barrier terms.
void evaluate_derivatives(const ClothSystem& sys, std::span<const Vec3> x,
                          std::span<const Vec3> xhat, double dt, Derivatives& out,
                          Projection proj = Projection::Psd, bool hessian = true);

/// Gradient only (used by finite-difference checks).
std::vector<Vec3> ip_gradient(const ClothSystem& sys, std::span<const Vec3> x,
                              std::span<const Vec3> xhat, double dt);

/// Per-term energies without inertia, for metrics.
EnergyTerms potential_terms(const ClothSystem& sys, std::span<const Vec3> x);

/// Cells used by the contact conversion for the current worker count.
int contact_cells();

}  // namespace bscloth
