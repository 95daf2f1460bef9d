#include "bscloth/contact.hpp"
#include "test_helpers.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

using namespace bscloth;
using namespace testutil;

namespace {

// Two flat sheets stacked along z, each with its own control grid.
struct TwoSheets {
  std::vector<Vec3> control;
  ContactMesh mesh;
};

TwoSheets stacked(int n, int res, double gap, std::mt19937* rng = nullptr, double noise = 0.0) {
  TwoSheets out;
  for (int s = 0; s < 2; ++s) {
    SplineSheet sheet = SplineSheet::rectangle(n, n, 1.0, 1.0);
    for (auto& c : sheet.world_cp) c.z() = s * gap;
    if (rng) randomize(sheet.world_cp, *rng, noise);
    out.mesh.append(sample_embedded_mesh(sheet, res, res), static_cast<int>(out.control.size()), s);
    out.control.insert(out.control.end(), sheet.world_cp.begin(), sheet.world_cp.end());
  }
  return out;
}

Eigen::VectorXd pair_energy_fd(ContactPair pair, std::vector<Vec3> x,
                               std::span<const Collider> colliders, const ContactParams& p,
                               double h) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(12);
  for (int i = 0; i < pair.count; ++i) {
    for (int c = 0; c < 3; ++c) {
      Vec3& v = x[pair.v[i]];
      const double keep = v[c];
      auto eval = [&]() {
        ContactPair q = pair;
        return barrier_local(q, x, colliders, p);
      };
      v[c] = keep + h;
      const double ep = eval();
      v[c] = keep - h;
      const double em = eval();
      v[c] = keep;
      g[3 * i + c] = (ep - em) / (2 * h);
    }
  }
  return g;
}

}  // namespace

TEST_CASE("barrier values") {
  ContactParams p{1.0, 1.0};
  CHECK(barrier(1.0, p) == 0.0);
  CHECK(barrier_d1(1.0, p) == 0.0);
  CHECK(barrier(0.5, p) == doctest::Approx(0.25 * std::log(2.0)));
  CHECK(barrier(0.5, p) == doctest::Approx(0.17329).epsilon(1e-4));
  const double h = 1e-6;
  for (double d : {0.1, 0.4, 0.8}) {
    CHECK(barrier_d1(d, p) == doctest::Approx((barrier(d + h, p) - barrier(d - h, p)) / (2 * h)).epsilon(1e-7));
    CHECK(barrier_d2(d, p) ==
          doctest::Approx((barrier_d1(d + h, p) - barrier_d1(d - h, p)) / (2 * h)).epsilon(1e-6));
  }
  CHECK(barrier(1e-12, p) > 20.0);
}

TEST_CASE("distance classification") {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  auto r = point_triangle_distance(Vec3(0.2, 0.2, 0.3), a, b, c);
  CHECK(r.type == DistanceType::PointTriangle);
  CHECK(r.sq == doctest::Approx(0.09));
  r = point_triangle_distance(Vec3(0.5, -0.5, 0.0), a, b, c);
  CHECK(r.type == DistanceType::PointEdge);
  CHECK(r.sq == doctest::Approx(0.25));
  r = point_triangle_distance(Vec3(-1, -1, 1), a, b, c);
  CHECK(r.type == DistanceType::PointPoint);
  CHECK(r.sq == doctest::Approx(3.0));
  CHECK(r.slots[1] == 1);

  auto e = edge_edge_distance(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, -1, 0.2), Vec3(0.5, 1, 0.2));
  CHECK(e.type == DistanceType::EdgeEdge);
  CHECK(e.sq == doctest::Approx(0.04));
  // Parallel edges fall back to point-edge distances.
  e = edge_edge_distance(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.2, 0.1, 0), Vec3(0.8, 0.1, 0));
  CHECK(e.sq == doctest::Approx(0.01));
  CHECK(e.type == DistanceType::PointEdge);
}

TEST_CASE("squared distance derivatives match finite differences") {
  std::mt19937 rng(4);
  std::normal_distribution<double> n01;
  for (DistanceType type : {DistanceType::PointPoint, DistanceType::PointEdge,
                            DistanceType::PointTriangle, DistanceType::EdgeEdge}) {
    const int n = type == DistanceType::PointPoint ? 2 : type == DistanceType::PointEdge ? 3 : 4;
    std::vector<Vec3> x(n);
    for (auto& p : x) p = Vec3(n01(rng), n01(rng), n01(rng));
    Eigen::VectorXd g;
    Eigen::MatrixXd hm;
    squared_distance_derivatives(type, x, g, hm);
    const double h = 1e-6;
    Eigen::MatrixXd hfd(3 * n, 3 * n);
    Eigen::VectorXd gfd(3 * n);
    for (int i = 0; i < 3 * n; ++i) {
      auto xp = x, xm = x;
      xp[i / 3][i % 3] += h;
      xm[i / 3][i % 3] -= h;
      Eigen::VectorXd gp, gm;
      Eigen::MatrixXd tmp;
      const double sp = squared_distance_derivatives(type, xp, gp, tmp);
      const double sm = squared_distance_derivatives(type, xm, gm, tmp);
      gfd[i] = (sp - sm) / (2 * h);
      hfd.col(i) = (gp - gm) / (2 * h);
    }
    CHECK((g - gfd).norm() < 1e-6 * g.norm());
    CHECK((hm - hfd).norm() < 1e-5 * hm.norm());
  }
}

TEST_CASE("active pairs: gap, plane, brute-force oracle") {
  ContactParams p{1e-3, 1.0};
  TwoSheets far = stacked(4, 4, 2e-3);
  const auto xf = far.mesh.positions(far.control);
  CHECK(find_active_pairs(far.mesh, xf, {}, p).empty());

  std::vector<Collider> ground(1);
  ground[0].point = Vec3(0, 0, -5e-4);
  const auto pairs = find_active_pairs(far.mesh, xf, ground, p, false);
  // Every bottom-sheet vertex is 5e-4 above the plane.
  int plane_pairs = 0;
  for (const auto& q : pairs) {
    if (q.kind == PairKind::VertexPlane) {
      ++plane_pairs;
      CHECK(q.d == doctest::Approx(5e-4));
    }
  }
  CHECK(plane_pairs == 25);

  std::mt19937 rng(13);
  TwoSheets near = stacked(5, 9, 6e-4, &rng, 2e-4);
  const auto x = near.mesh.positions(near.control);
  CHECK(near.mesh.num_vertices == 200);
  ContactParams wide{5e-3, 1.0};
  const auto fast = find_active_pairs(near.mesh, x, {}, wide);
  const auto slow = find_active_pairs_brute_force(near.mesh, x, {}, wide);
  REQUIRE(fast.size() == slow.size());
  CHECK(!fast.empty());
  for (std::size_t k = 0; k < fast.size(); ++k) {
    CHECK(fast[k].v == slow[k].v);
    CHECK(fast[k].kind == slow[k].kind);
    CHECK(fast[k].d == slow[k].d);
  }
}

TEST_CASE("barrier gradient, Hessian and pullback") {
  std::mt19937 rng(17);
  TwoSheets s = stacked(5, 6, 5e-4, &rng, 1e-4);
  const ContactParams p{1e-3, 10.0};
  std::vector<Collider> ground(1);
  ground[0].point = Vec3(0, 0, -8e-4);
  std::vector<Collider> ball(1);
  ball[0].type = Collider::Type::Sphere;
  ball[0].point = Vec3(0.5, 0.5, 0.3);
  ball[0].radius = 0.3 - 5e-4 - 6e-4;
  const auto x = s.mesh.positions(s.control);
  auto pairs = find_active_pairs(s.mesh, x, ground, p);
  auto sphere_pairs = find_active_pairs(s.mesh, x, ball, p, false);
  pairs.insert(pairs.end(), sphere_pairs.begin(), sphere_pairs.end());
  REQUIRE(pairs.size() > 10);
  int checked = 0;
  for (std::size_t k = 0; k < pairs.size(); k += 7) {
    ContactPair& pair = pairs[k];
    const auto& cols = pair.kind == PairKind::VertexSphere ? ball : ground;
    const double e = barrier_local(pair, x, cols, p, Projection::None);
    CHECK(e > 0.0);
    const Eigen::VectorXd fd = pair_energy_fd(pair, x, cols, p, 1e-9);
    CHECK((pair.grad - fd).norm() < 1e-5 * pair.grad.norm());
    ContactPair projected = pair;
    barrier_local(projected, x, cols, p);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> eig(projected.hess);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * projected.hess.norm());
    CHECK((projected.hess - projected.hess.transpose()).norm() <= 1e-12 * projected.hess.norm());

    // Pullback gradient against differences in control space.
    const LocalSystem ls = pullback(pair, s.mesh);
    CHECK(static_cast<int>(ls.stencil.size()) <= 9 * pair.count);
    const double h = 1e-9;
    double gmax = 0.0, err = 0.0;
    for (std::size_t a = 0; a < ls.stencil.size(); ++a) {
      gmax = std::max(gmax, ls.grad[a].cwiseAbs().maxCoeff());
      for (int c = 0; c < 3; ++c) {
        auto cp = s.control, cm = s.control;
        cp[ls.stencil[a]][c] += h;
        cm[ls.stencil[a]][c] -= h;
        ContactPair qp = pair, qm = pair;
        const double ep = barrier_local(qp, s.mesh.positions(cp), cols, p);
        const double em = barrier_local(qm, s.mesh.positions(cm), cols, p);
        err = std::max(err, std::abs(ls.grad[a][c] - (ep - em) / (2 * h)));
      }
    }
    CHECK(err < 1e-5 * gmax);
    // Symmetry and linearity.
    CHECK((ls.hess - ls.hess.transpose()).norm() <= 1e-12 * ls.hess.norm());
    ContactPair doubled = pair;
    doubled.grad *= 2.5;
    doubled.hess *= 2.5;
    const LocalSystem l2 = pullback(doubled, s.mesh);
    CHECK((l2.hess - 2.5 * ls.hess).norm() <= 1e-12 * l2.hess.norm());
    ++checked;
  }
  CHECK(checked > 1);
}

TEST_CASE("pullback with one-hot weights is a relabeling") {
  SplineSheet sheet = SplineSheet::rectangle(3, 3, 1.0, 1.0);  // one span
  EmbeddedMesh m = sample_embedded_mesh(sheet, 1, 1);          // corners only
  ContactMesh cm;
  cm.append(m, 0, 0);
  for (const auto& w : cm.weights) CHECK(w.count == 1);
  ContactPair pair;
  pair.kind = PairKind::VertexPlane;
  pair.count = 1;
  pair.v = {3, -1, -1, -1};
  pair.grad.head<3>() = Vec3(1, 2, 3);
  pair.hess.topLeftCorner<3, 3>() = Mat3::Identity() * 4.0;
  const LocalSystem ls = pullback(pair, cm);
  REQUIRE(ls.stencil.size() == 1);
  CHECK(ls.stencil[0] == cm.weights[3].control[0]);
  CHECK(ls.grad[0] == Vec3(1, 2, 3));
  CHECK(ls.hess.isApprox(Mat3::Identity() * 4.0));
}

TEST_CASE("CCD") {
  // Plane: vertex at gap g moving down at speed s.
  SplineSheet sheet = SplineSheet::rectangle(3, 3, 1.0, 1.0);
  ContactMesh cm;
  cm.append(sample_embedded_mesh(sheet, 1, 1), 0, 0);
  std::vector<Vec3> x = {Vec3(0, 0, 0.1), Vec3(1, 0, 0.1), Vec3(0, 1, 0.1), Vec3(1, 1, 0.1)};
  std::vector<Vec3> zero(4, Vec3::Zero());
  std::vector<Collider> ground(1);
  CHECK(ccd_max_step(cm, x, zero, ground) == 1.0);
  std::vector<Vec3> down(4, Vec3::Zero());
  down[0] = Vec3(0, 0, -0.5);
  const double t = ccd_max_step(cm, x, down, ground);
  CHECK(t < 0.1 / 0.5);
  CHECK(x[0].z() + t * down[0].z() > 0.0);

  // Two single-triangle meshes whose tips approach head-on.
  ContactMesh two;
  EmbeddedMesh tri;
  tri.uv = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  tri.triangles = {{0, 1, 2}};
  tri.weights.resize(3);
  for (int k = 0; k < 3; ++k) {
    tri.weights[k].count = 1;
    tri.weights[k].control[0] = k;
    tri.weights[k].coeff[0] = 1.0;
  }
  two.append(tri, 0, 0);
  two.append(tri, 3, 1);
  std::vector<Vec3> y = {Vec3(-0.05, 0, 0), Vec3(-1, 0, 0), Vec3(-1, 1, 0),
                         Vec3(0.05, 0, 0),  Vec3(1, 0, 0),  Vec3(1, 1, 0)};
  std::vector<Vec3> dy(6, Vec3::Zero());
  for (int k = 0; k < 3; ++k) {
    dy[k] = Vec3(0.2, 0, 0);
    dy[k + 3] = Vec3(-0.2, 0, 0);
  }
  const double t1 = ccd_max_step(two, y, dy, {});
  CHECK(t1 < 0.25);
  CHECK(t1 > 0.0);
  std::vector<Vec3> moved(6);
  for (int k = 0; k < 6; ++k) moved[k] = y[k] + t1 * dy[k];
  CHECK(moved[3].x() - moved[0].x() > 0.0);
  for (auto& d : dy) d *= 0.5;
  const double t2 = ccd_max_step(two, y, dy, {});
  CHECK(t2 >= std::min(1.0, 2.0 * t1) * (1.0 - 1e-9));
}
