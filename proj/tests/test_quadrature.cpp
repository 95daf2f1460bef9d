#include "bscloth/quadrature.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

using namespace bscloth;

TEST_CASE("Gauss-Legendre nodes and weights") {
  auto g1 = gauss_legendre_1d(1);
  REQUIRE(g1.size() == 1);
  CHECK(g1[0].node == 0.5);
  CHECK(g1[0].weight == 1.0);
  auto g2 = gauss_legendre_1d(2);
  CHECK(g2[0].node == doctest::Approx(0.211325).epsilon(1e-6));
  CHECK(g2[1].node == doctest::Approx(0.788675).epsilon(1e-6));
  CHECK(g2[0].weight == 0.5);
  auto g3 = gauss_legendre_1d(3);
  CHECK(g3[0].node == doctest::Approx(0.5 - std::sqrt(15.0) / 10));
  CHECK(g3[1].weight == doctest::Approx(8.0 / 18));
  CHECK_THROWS_AS(gauss_legendre_1d(4), DomainError);
  // Exactness up to degree 2k-1.
  for (int k = 1; k <= 3; ++k) {
    const auto g = gauss_legendre_1d(k);
    for (int deg = 0; deg <= 2 * k - 1; ++deg) {
      double sum = 0.0;
      for (const auto& p : g) sum += p.weight * std::pow(p.node, deg);
      CHECK(sum == doctest::Approx(1.0 / (deg + 1)).epsilon(1e-14));
    }
  }
}

TEST_CASE("reduced membrane rule layout") {
  const SplineSheet s = SplineSheet::rectangle(7, 8, 1.0, 1.0);  // 5 x 6 spans
  const QuadRule r = build_membrane_rule(s);
  CHECK(!r.fallback);
  CHECK(r.total_weight() == doctest::Approx(5.0 * 6.0).epsilon(1e-14));
  const auto cells = dual_cells(s);
  CHECK(cells.size() == 4 * 5);
  int interior = 0;
  std::map<std::pair<int, int>, DualOrientation> orient;
  for (const QuadSite& q : r.points) {
    CHECK(q.weight > 0.0);
    CHECK(q.u >= 0.0);
    CHECK(q.u <= 5.0);
    CHECK(q.v >= 0.0);
    CHECK(q.v <= 6.0);
    if (q.region != SiteRegion::Interior) continue;
    ++interior;
    orient[{q.cell_u, q.cell_v}] = q.orientation;
    // The single-point coordinate sits on a knot line: 2 x 3 = 6 active bases.
    int active = 0;
    for (int j = 0; j < s.nv(); ++j)
      for (int i = 0; i < s.nu(); ++i)
        if (eval_basis_1d(s.knots_u, i, q.u) * eval_basis_1d(s.knots_v, j, q.v) > 1e-14) ++active;
    CHECK(active == 6);
  }
  CHECK(interior == 2 * static_cast<int>(cells.size()));
  // Checkerboard: neighbouring cells alternate.
  for (const auto& [cell, o] : orient) {
    const auto right = orient.find({cell.first + 1, cell.second});
    if (right != orient.end()) CHECK(right->second != o);
    const auto up = orient.find({cell.first, cell.second + 1});
    if (up != orient.end()) CHECK(up->second != o);
  }
}

TEST_CASE("boundary membrane spans") {
  const SplineSheet s = SplineSheet::rectangle(6, 6, 1.0, 1.0);  // 4 x 4 spans
  const QuadRule r = build_membrane_rule(s);
  std::map<std::pair<int, int>, std::set<double>> us, vs;
  for (const QuadSite& q : r.points) {
    if (q.region != SiteRegion::Boundary) continue;
    const auto key = std::make_pair(static_cast<int>(q.u), static_cast<int>(q.v));
    us[key].insert(q.u);
    vs[key].insert(q.v);
  }
  CHECK(us.size() == 12);
  CHECK(us[{0, 0}].size() == 3);
  CHECK(vs[{0, 0}].size() == 3);
  // Left column edge span: 3 across the edge (u), 2 along it (v).
  CHECK(us[{0, 1}].size() == 3);
  CHECK(vs[{0, 1}].size() == 2);
  // Bottom row edge span: 2 along the edge (u), 3 across it (v).
  CHECK(us[{2, 0}].size() == 2);
  CHECK(vs[{2, 0}].size() == 3);
}

TEST_CASE("membrane scheme variants and fallback") {
  const SplineSheet s = SplineSheet::rectangle(8, 8, 1.0, 1.0);
  const QuadRule full = build_membrane_rule(s, MembraneScheme::Interior2x2);
  const QuadRule one = build_membrane_rule(s, MembraneScheme::Interior1x1);
  CHECK(full.total_weight() == doctest::Approx(36.0));
  CHECK(one.total_weight() == doctest::Approx(36.0));
  int interior_full = 0, interior_one = 0;
  for (const auto& q : full.points) interior_full += q.region == SiteRegion::Interior;
  for (const auto& q : one.points) interior_one += q.region == SiteRegion::Interior;
  CHECK(interior_full == 4 * 16);
  CHECK(interior_one == 25);

  const SplineSheet narrow = SplineSheet::rectangle(4, 6, 1.0, 1.0);  // 2 x 4 spans
  const QuadRule fb = build_membrane_rule(narrow);
  CHECK(fb.fallback);
  CHECK(fb.points.size() == 4 * 8);
  CHECK(fb.total_weight() == doctest::Approx(8.0));
}

TEST_CASE("bending rule layout") {
  const SplineSheet s = SplineSheet::rectangle(7, 7, 1.0, 1.0);  // 5 x 5 spans
  const QuadRule r = build_bending_rule(s);
  int boundary = 0, interior = 0;
  for (const auto& q : r.points) {
    if (q.region == SiteRegion::Interior) {
      ++interior;
      CHECK(q.u == std::round(q.u));
      CHECK(q.v == std::round(q.v));
      int active = 0;
      for (int j = 0; j < s.nv(); ++j)
        for (int i = 0; i < s.nu(); ++i)
          if (eval_basis_1d(s.knots_u, i, q.u) * eval_basis_1d(s.knots_v, j, q.v) > 1e-14) ++active;
      CHECK(active == 4);
    } else {
      ++boundary;
      CHECK(q.weight == 1.0);
    }
  }
  CHECK(boundary == 16);
  CHECK(interior == 16);
  CHECK(r.total_weight() == doctest::Approx(25.0).epsilon(1e-14));
}

namespace {

// Composite Simpson integral of N_a N_b over the knot range, fine enough for
// the piecewise quartic integrand.
double simpson_product(const KnotVector& k, int a, int b) {
  double sum = 0.0;
  const int per_span = 400;
  for (int s = 0; s < k.num_spans(); ++s) {
    const double h = 1.0 / per_span;
    for (int q = 0; q < per_span; ++q) {
      const double x0 = s + q * h, xm = x0 + 0.5 * h, x1 = x0 + h;
      auto f = [&](double x) { return eval_basis_1d(k, a, x) * eval_basis_1d(k, b, x); };
      sum += h / 6.0 * (f(x0) + 4 * f(xm) + f(std::min(x1, k.back())));
    }
  }
  return sum;
}

}  // namespace

TEST_CASE("mass rule integrates basis products") {
  const SplineSheet s = SplineSheet::rectangle(6, 5, 1.0, 1.0);
  const QuadRule r = build_mass_rule(s);
  CHECK(r.points.size() == 9 * 4 * 3);
  CHECK(std::abs(r.total_weight() - 12.0) < 1e-12);
  const std::pair<std::pair<int, int>, std::pair<int, int>> pairs[] = {
      {{0, 0}, {1, 0}}, {{2, 1}, {3, 2}}, {{5, 4}, {5, 4}}, {{1, 2}, {2, 3}}};
  for (const auto& [ca, cb] : pairs) {
    double rule_val = 0.0;
    for (const auto& q : r.points) {
      rule_val += q.weight * eval_basis_1d(s.knots_u, ca.first, q.u) *
                  eval_basis_1d(s.knots_v, ca.second, q.v) *
                  eval_basis_1d(s.knots_u, cb.first, q.u) *
                  eval_basis_1d(s.knots_v, cb.second, q.v);
    }
    const double oracle = simpson_product(s.knots_u, ca.first, cb.first) *
                          simpson_product(s.knots_v, ca.second, cb.second);
    CHECK(std::abs(rule_val - oracle) < 1e-10);
  }
}

TEST_CASE("rules are deterministic") {
  const SplineSheet s = SplineSheet::rectangle(9, 7, 1.0, 1.0);
  const QuadRule a = build_membrane_rule(s), b = build_membrane_rule(s);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t k = 0; k < a.points.size(); ++k) {
    CHECK(a.points[k].u == b.points[k].u);
    CHECK(a.points[k].v == b.points[k].v);
    CHECK(a.points[k].weight == b.points[k].weight);
  }
}
