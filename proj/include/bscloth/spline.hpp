#pragma once

#include "bscloth/common.hpp"

#include <array>
#include <span>
#include <vector>

namespace bscloth {

inline constexpr int kDegree = 2;

/// Open uniform knot vector of a quadratic B-spline with interior knots on the
/// integer lattice: (0, 0, 0, 1, 2, ..., S, S, S) for S = n - 2 spans.
class KnotVector {
 public:
  explicit KnotVector(int num_control);

  int num_control() const { return num_control_; }
  int num_spans() const { return num_control_ - kDegree; }
  int degree() const { return kDegree; }
  const std::vector<double>& values() const { return values_; }
  double front() const { return values_.front(); }
  double back() const { return values_.back(); }

  /// Index s of the knot span [s, s+1] containing xi. Half-open spans, except
  /// that xi == back() belongs to the last span.
  int find_span(double xi) const;

 private:
  int num_control_;
  std::vector<double> values_;
};

struct BasisDerivs {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

/// Cox-de Boor value of basis i at xi. Terms whose denominator vanishes on
/// repeated knots are dropped; at the right end of the domain the last
/// non-empty zeroth-order interval is treated as closed.
double eval_basis_1d(const KnotVector& knots, int i, double xi);

/// Value and first two derivatives of basis i at xi. At an interior knot the
/// second derivative is the limit from the right (left at the domain end).
BasisDerivs eval_basis_derivs_1d(const KnotVector& knots, int i, double xi);

/// The three bases that are non-zero on the span containing xi.
struct ActiveBasis {
  int first = 0;  // index of the first active basis
  std::array<BasisDerivs, 3> b;
};

ActiveBasis active_basis(const KnotVector& knots, double xi);

/// Quadratic B-spline patch with a 2D material control grid and 3D world
/// control grid. Control points are stored u-fastest: index = i + nu * j.
struct SplineSheet {
  KnotVector knots_u{3};
  KnotVector knots_v{3};
  std::vector<Vec2> material_cp;
  std::vector<Vec3> world_cp;
  std::vector<Vec3> world_vel;

  int nu() const { return knots_u.num_control(); }
  int nv() const { return knots_v.num_control(); }
  int num_control() const { return nu() * nv(); }
  int index(int i, int j) const { return i + nu() * j; }

  /// nu x nv control points placed at the Greville abscissae of an lx x ly
  /// rectangle so the material map is affine. World grid is the material grid
  /// in the z = 0 plane, velocities zero.
  static SplineSheet rectangle(int nu, int nv, double lx, double ly);
};

/// Greville abscissa of control point i (average of its interior knots).
double greville(const KnotVector& knots, int i);

/// Tensor-product sum over the (at most) 3x3 active stencil. Throws
/// DomainError when (u, v) lies outside the parametric domain.
template <class Point>
Point eval_surface(const KnotVector& ku, const KnotVector& kv,
                   std::span<const Point> control, double u, double v) {
  const ActiveBasis bu = active_basis(ku, u);
  const ActiveBasis bv = active_basis(kv, v);
  Point p = Point::Zero();
  const int nu = ku.num_control();
  for (int b = 0; b < 3; ++b) {
    for (int a = 0; a < 3; ++a) {
      const double w = bu.b[a].value * bv.b[b].value;
      if (w != 0.0) p += w * control[(bu.first + a) + nu * (bv.first + b)];
    }
  }
  return p;
}

inline Vec2 eval_material(const SplineSheet& s, double u, double v) {
  return eval_surface<Vec2>(s.knots_u, s.knots_v, s.material_cp, u, v);
}
inline Vec3 eval_world(const SplineSheet& s, double u, double v) {
  return eval_surface<Vec3>(s.knots_u, s.knots_v, s.world_cp, u, v);
}

/// Fixed interpolation weights of one embedded-mesh vertex (at most 3x3).
struct VertexWeights {
  int count = 0;
  std::array<int, 9> control{};
  std::array<double, 9> coeff{};
};

/// Triangle mesh whose vertices sit at fixed parametric coordinates of a sheet.
struct EmbeddedMesh {
  std::vector<Vec2> uv;
  std::vector<std::array<int, 3>> triangles;
  std::vector<VertexWeights> weights;

  int num_vertices() const { return static_cast<int>(uv.size()); }

  /// x = sum_k c_k C_k for every vertex.
  std::vector<Vec3> positions(std::span<const Vec3> control) const;
};

/// Regular (ru+1) x (rv+1) lattice over the parametric domain, two triangles
/// per cell with alternating diagonals.
EmbeddedMesh sample_embedded_mesh(const SplineSheet& sheet, int ru, int rv);

}  // namespace bscloth
