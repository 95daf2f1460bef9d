#pragma once

#include "bscloth/quadrature.hpp"
#include "bscloth/spline.hpp"

#include <array>
#include <span>
#include <vector>

namespace bscloth {

/// Tensor-product basis value and parametric derivatives of one stencil entry.
struct StencilBasis {
  double n = 0.0;
  double nu = 0.0, nv = 0.0;
  double nuu = 0.0, nvv = 0.0, nuv = 0.0;
};

/// Derivatives of the inverse material map (u, v)(X1, X2). First order in 1/m,
/// second order in 1/m^2; u12 = d^2u / dX1 dX2.
struct InverseMap {
  double u1 = 0, u2 = 0, v1 = 0, v2 = 0;
  double u11 = 0, u22 = 0, v11 = 0, v22 = 0, u12 = 0, v12 = 0;
};

inline constexpr int kMaxStencil = 9;

/// Rest-state data of a quadrature site. Stencil indices are sheet-local until
/// the owning system offsets them.
struct QuadPoint {
  double u = 0.0, v = 0.0;
  double w = 0.0;  // physical area weight (m^2)
  int count = 0;
  std::array<int, kMaxStencil> stencil{};
  std::array<StencilBasis, kMaxStencil> basis{};
  InverseMap inv_map;
  std::array<Vec2, kMaxStencil> grad{};      // (dN/dX1, dN/dX2)
  std::array<double, kMaxStencil> lap{};     // Laplacian coefficient
};

/// Precompute rest-state quantities for every site of `rule`. The stencil
/// keeps the entries the rule's energy actually touches: first-order data for
/// membrane and mass sites, Laplacian coefficients for bending sites.
/// Throws GeometryError on a singular or orientation-reversing material map.
std::vector<QuadPoint> precompute_quadpoints(const SplineSheet& sheet, const QuadRule& rule);

/// Parametric Jacobian dX/d(u,v) and its parametric derivatives.
struct MaterialJacobian {
  Mat2 j;
  Mat2 j_u;  // d/du of j
  Mat2 j_v;  // d/dv of j
};
MaterialJacobian material_jacobian(const SplineSheet& sheet, double u, double v);

/// F = sum_k C_k (dN_k/dX)^T, a 3x2 matrix.
Mat32 deformation_gradient(const QuadPoint& qp, std::span<const Vec3> world_cp);

/// Delta phi = sum_k lap_k C_k.
Vec3 surface_laplacian(const QuadPoint& qp, std::span<const Vec3> world_cp);

struct MassMatrix {
  std::vector<double> lumped;  // kg per control point
  double consistent_total = 0.0;
};

/// Row-summed consistent mass with areal density = density * thickness.
MassMatrix build_mass(const SplineSheet& sheet, double density, double thickness);

/// Consistent mass entry M_ab, used by tests and diagnostics.
double consistent_mass_entry(const SplineSheet& sheet, double areal_density, int a, int b);

}  // namespace bscloth
