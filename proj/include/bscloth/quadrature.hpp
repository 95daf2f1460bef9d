#pragma once

#include "bscloth/spline.hpp"

#include <vector>

namespace bscloth {

enum class RuleKind { Membrane, Bending, Mass };

/// Interior layout of the membrane rule. Boundary knot spans always use the
/// 3x3 corner / 3x2 edge layout.
enum class MembraneScheme {
  Reduced,      // alternating 1x2 / 2x1 Gauss points on dual cells
  Interior2x2,  // standard 2x2 Gauss per interior knot span
  Interior1x1,  // diagnostic only: one point per dual cell (hourglass-prone)
};

enum class SiteRegion { Boundary, Interior };

/// Which direction carries two Gauss points inside a reduced dual cell.
enum class DualOrientation { None, TwoAlongU, TwoAlongV };

struct QuadSite {
  double u = 0.0;
  double v = 0.0;
  double weight = 0.0;  // parametric measure
  SiteRegion region = SiteRegion::Boundary;
  DualOrientation orientation = DualOrientation::None;
  int cell_u = -1;  // dual cell (knot-line intersection) for interior sites
  int cell_v = -1;
};

struct QuadRule {
  RuleKind kind = RuleKind::Mass;
  std::vector<QuadSite> points;
  bool fallback = false;  // sheet too narrow for the reduced layout

  double total_weight() const;
};

/// Cell of the dual grid centred on the knot-line intersection (a, b) and
/// clipped to the interior knot spans [1, S-1].
struct DualCell {
  int a = 0;
  int b = 0;
  double u0 = 0.0, u1 = 0.0;
  double v0 = 0.0, v1 = 0.0;
  double area() const { return (u1 - u0) * (v1 - v0); }
};

/// Dual cells covering the interior knot spans. Empty when either direction
/// has fewer than 3 spans.
std::vector<DualCell> dual_cells(const SplineSheet& sheet);

struct GaussPoint {
  double node;
  double weight;
};

/// k-point Gauss-Legendre rule on [0, 1], k in {1, 2, 3}.
std::vector<GaussPoint> gauss_legendre_1d(int k);

QuadRule build_membrane_rule(const SplineSheet& sheet,
                             MembraneScheme scheme = MembraneScheme::Reduced);
QuadRule build_bending_rule(const SplineSheet& sheet);
QuadRule build_mass_rule(const SplineSheet& sheet);

}  // namespace bscloth
