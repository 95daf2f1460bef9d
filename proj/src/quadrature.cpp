#include "bscloth/quadrature.hpp"

#include "bscloth/log.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace bscloth {

double QuadRule::total_weight() const {
  return std::accumulate(points.begin(), points.end(), 0.0,
                         [](double s, const QuadSite& q) { return s + q.weight; });
}

std::vector<GaussPoint> gauss_legendre_1d(int k) {
  switch (k) {
    case 1:
      return {{0.5, 1.0}};
    case 2: {
      const double o = std::sqrt(3.0) / 6.0;
      return {{0.5 - o, 0.5}, {0.5 + o, 0.5}};
    }
    case 3: {
      const double o = std::sqrt(15.0) / 10.0;
      return {{0.5 - o, 5.0 / 18.0}, {0.5, 8.0 / 18.0}, {0.5 + o, 5.0 / 18.0}};
    }
    default:
      throw DomainError("unsupported Gauss-Legendre point count " + std::to_string(k));
  }
}

std::vector<DualCell> dual_cells(const SplineSheet& sheet) {
  const int su = sheet.knots_u.num_spans();
  const int sv = sheet.knots_v.num_spans();
  std::vector<DualCell> cells;
  if (su < 3 || sv < 3) return cells;
  for (int b = 1; b <= sv - 1; ++b) {
    for (int a = 1; a <= su - 1; ++a) {
      DualCell c;
      c.a = a;
      c.b = b;
      c.u0 = std::max(a - 0.5, 1.0);
      c.u1 = std::min(a + 0.5, static_cast<double>(su - 1));
      c.v0 = std::max(b - 0.5, 1.0);
      c.v1 = std::min(b + 0.5, static_cast<double>(sv - 1));
      cells.push_back(c);
    }
  }
  return cells;
}

namespace {

// Tensor Gauss rule with ku x kv points on the span [s, s+1] x [t, t+1].
void add_span(std::vector<QuadSite>& out, int s, int t, int ku, int kv) {
  const auto gu = gauss_legendre_1d(ku);
  const auto gv = gauss_legendre_1d(kv);
  for (const auto& pv : gv) {
    for (const auto& pu : gu) {
      QuadSite q;
      q.u = s + pu.node;
      q.v = t + pv.node;
      q.weight = pu.weight * pv.weight;
      out.push_back(q);
    }
  }
}

void add_uniform(std::vector<QuadSite>& out, const SplineSheet& sheet, int k) {
  for (int t = 0; t < sheet.knots_v.num_spans(); ++t) {
    for (int s = 0; s < sheet.knots_u.num_spans(); ++s) add_span(out, s, t, k, k);
  }
}

bool is_boundary_span(int s, int t, int su, int sv) {
  return s == 0 || t == 0 || s == su - 1 || t == sv - 1;
}

// Boundary spans: 3x3 at corners, otherwise 3 points across the edge and 2
// points along it.
void add_boundary_membrane(std::vector<QuadSite>& out, int su, int sv) {
  for (int t = 0; t < sv; ++t) {
    for (int s = 0; s < su; ++s) {
      if (!is_boundary_span(s, t, su, sv)) continue;
      const bool on_u_edge = s == 0 || s == su - 1;  // left/right column
      const bool on_v_edge = t == 0 || t == sv - 1;  // bottom/top row
      if (on_u_edge && on_v_edge) {
        add_span(out, s, t, 3, 3);
      } else if (on_u_edge) {
        add_span(out, s, t, 3, 2);
      } else {
        add_span(out, s, t, 2, 3);
      }
    }
  }
}

void warn_fallback(const SplineSheet& sheet, const char* what) {
  logger()->warn("{} rule: sheet with {}x{} spans is too narrow for the dual grid; "
                 "using 2x2 Gauss per span",
                 what, sheet.knots_u.num_spans(), sheet.knots_v.num_spans());
}

}  // namespace

QuadRule build_membrane_rule(const SplineSheet& sheet, MembraneScheme scheme) {
  QuadRule rule;
  rule.kind = RuleKind::Membrane;
  const int su = sheet.knots_u.num_spans();
  const int sv = sheet.knots_v.num_spans();
  if (su < 3 || sv < 3) {
    warn_fallback(sheet, "membrane");
    add_uniform(rule.points, sheet, 2);
    rule.fallback = true;
    return rule;
  }
  add_boundary_membrane(rule.points, su, sv);

  if (scheme == MembraneScheme::Interior2x2) {
    for (int t = 1; t < sv - 1; ++t) {
      for (int s = 1; s < su - 1; ++s) {
        const std::size_t first = rule.points.size();
        add_span(rule.points, s, t, 2, 2);
        for (std::size_t k = first; k < rule.points.size(); ++k) {
          rule.points[k].region = SiteRegion::Interior;
        }
      }
    }
    return rule;
  }

  const auto g2 = gauss_legendre_1d(2);
  for (const DualCell& c : dual_cells(sheet)) {
    QuadSite q;
    q.region = SiteRegion::Interior;
    q.cell_u = c.a;
    q.cell_v = c.b;
    if (scheme == MembraneScheme::Interior1x1) {
      q.u = c.a;
      q.v = c.b;
      q.weight = c.area();
      rule.points.push_back(q);
      continue;
    }
    // The single-point coordinate sits on the knot line through the cell
    // centre; the two-point direction spans the clipped cell extent.
    if ((c.a + c.b) % 2 == 0) {
      q.orientation = DualOrientation::TwoAlongV;
      q.u = c.a;
      for (const auto& g : g2) {
        q.v = c.v0 + g.node * (c.v1 - c.v0);
        q.weight = g.weight * c.area();
        rule.points.push_back(q);
      }
    } else {
      q.orientation = DualOrientation::TwoAlongU;
      q.v = c.b;
      for (const auto& g : g2) {
        q.u = c.u0 + g.node * (c.u1 - c.u0);
        q.weight = g.weight * c.area();
        rule.points.push_back(q);
      }
    }
  }
  return rule;
}

QuadRule build_bending_rule(const SplineSheet& sheet) {
  QuadRule rule;
  rule.kind = RuleKind::Bending;
  const int su = sheet.knots_u.num_spans();
  const int sv = sheet.knots_v.num_spans();
  if (su < 3 || sv < 3) {
    warn_fallback(sheet, "bending");
    add_uniform(rule.points, sheet, 2);
    rule.fallback = true;
    return rule;
  }
  for (int t = 0; t < sv; ++t) {
    for (int s = 0; s < su; ++s) {
      if (is_boundary_span(s, t, su, sv)) add_span(rule.points, s, t, 1, 1);
    }
  }
  for (const DualCell& c : dual_cells(sheet)) {
    QuadSite q;
    q.region = SiteRegion::Interior;
    q.cell_u = c.a;
    q.cell_v = c.b;
    q.u = c.a;
    q.v = c.b;
    q.weight = c.area();
    rule.points.push_back(q);
  }
  return rule;
}

QuadRule build_mass_rule(const SplineSheet& sheet) {
  QuadRule rule;
  rule.kind = RuleKind::Mass;
  add_uniform(rule.points, sheet, 3);
  return rule;
}

}  // namespace bscloth
