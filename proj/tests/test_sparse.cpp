#include "bscloth/sparse.hpp"
#include "test_helpers.hpp"

#include <doctest.h>

#include <tbb/global_control.h>

#include <fstream>
#include <set>

using namespace bscloth;
using namespace testutil;

namespace {

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

std::vector<double> random_local(const StencilMap& map, std::mt19937& rng) {
  std::normal_distribution<double> n01;
  std::vector<double> h(map.hess_size);
  for (auto& x : h) x = n01(rng);
  return h;
}

}  // namespace

TEST_CASE("block matrix basics") {
  std::vector<std::vector<int>> cols = {{0, 2}, {1}, {2, 0}};
  BlockSparseMatrix m(3, cols);
  CHECK(m.num_blocks() == 5);
  CHECK(m.find(2, 0) >= 0);
  CHECK(m.find(1, 0) == -1);
  m.block(m.find(0, 0)) = Mat3::Identity() * 2;
  m.block(m.find(1, 1)) = Mat3::Identity();
  m.block(m.find(2, 2)) = Mat3::Identity() * 3;
  Mat3 off;
  off << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  m.block(m.find(2, 0)) = off;
  m.block(m.find(0, 2)) = off.transpose();
  const Eigen::MatrixXd d = m.to_dense();
  CHECK(d.isApprox(d.transpose()));
  CHECK(Eigen::MatrixXd(m.to_eigen()).isApprox(d));
  std::vector<Vec3> x = {Vec3(1, 2, 3), Vec3(-1, 0, 1), Vec3(0.5, 0.5, -2)};
  std::vector<Vec3> y(3);
  m.multiply(x, y);
  Eigen::VectorXd xv(9);
  for (int i = 0; i < 3; ++i) xv.segment<3>(3 * i) = x[i];
  const Eigen::VectorXd yv = d * xv;
  for (int i = 0; i < 3; ++i) CHECK((y[i] - yv.segment<3>(3 * i)).norm() < 1e-12);
}

TEST_CASE("sparsity pattern equals the union of stencil outer products") {
  const SplineSheet s = SplineSheet::rectangle(8, 8, 1.0, 1.0);
  const auto mem = precompute_quadpoints(s, build_membrane_rule(s));
  const auto bend = precompute_quadpoints(s, build_bending_rule(s));
  std::vector<char> pinned(s.num_control(), 0);
  const SparsityPlan plan = precompute_sparsity(s.num_control(), mem, bend, pinned);
  std::set<std::pair<int, int>> oracle;
  for (int c = 0; c < s.num_control(); ++c) oracle.insert({c, c});
  for (const auto* set : {&mem, &bend})
    for (const auto& qp : *set)
      for (int a = 0; a < qp.count; ++a)
        for (int b = 0; b < qp.count; ++b) oracle.insert({qp.stencil[a], qp.stencil[b]});
  CHECK(plan.skeleton.num_blocks() == static_cast<int>(oracle.size()));
  for (const auto& [r, c] : oracle) {
    CHECK(plan.skeleton.find(r, c) >= 0);
    CHECK(plan.skeleton.find(c, r) >= 0);
  }
}

TEST_CASE("single bending site pattern") {
  const SplineSheet s = SplineSheet::rectangle(7, 7, 1.0, 1.0);
  const auto bend = precompute_quadpoints(s, build_bending_rule(s));
  std::vector<QuadPoint> one;
  for (const auto& qp : bend)
    if (qp.u == 2.0 && qp.v == 2.0) one.push_back(qp);
  REQUIRE(one.size() == 1);
  std::vector<char> pinned(s.num_control(), 0);
  const SparsityPlan plan = precompute_sparsity(s.num_control(), {}, one, pinned);
  // Off-diagonal blocks come from the Laplacian stencil outer product.
  const int c = one[0].count;
  CHECK(plan.skeleton.num_blocks() == s.num_control() + c * c - c);
}

TEST_CASE("elasticity assembly matches the triplet oracle") {
  std::mt19937 rng(1);
  const SplineSheet s = curved_sheet(9, 8, 1.0, 1.0, 0.02);
  const auto mem = precompute_quadpoints(s, build_membrane_rule(s));
  const auto bend = precompute_quadpoints(s, build_bending_rule(s));
  std::vector<char> pinned(s.num_control(), 0);
  pinned[0] = pinned[5] = 1;
  const SparsityPlan plan = precompute_sparsity(s.num_control(), mem, bend, pinned);
  const auto hm = random_local(plan.membrane, rng);
  const auto hb = random_local(plan.bending, rng);
  for (int workers : {1, 4}) {
    tbb::global_control gc(tbb::global_control::max_allowed_parallelism, workers);
    BlockSparseMatrix m = plan.skeleton;
    assemble_elasticity(plan.membrane, hm, m);
    assemble_elasticity(plan.bending, hb, m, true);
    const Eigen::MatrixXd oracle =
        Eigen::MatrixXd(elasticity_triplets(mem, hm, plan.membrane, s.num_control(), pinned)) +
        Eigen::MatrixXd(elasticity_triplets(bend, hb, plan.bending, s.num_control(), pinned));
    CHECK(max_abs_diff(m.to_dense(), oracle) < 1e-12);
  }
  BlockSparseMatrix zero = plan.skeleton;
  std::vector<double> hz(plan.membrane.hess_size, 0.0);
  assemble_elasticity(plan.membrane, hz, zero);
  CHECK(zero.to_dense().isZero());
  CHECK(zero.num_blocks() == plan.skeleton.num_blocks());
}

TEST_CASE("add_diagonal and pure inertia step") {
  const SplineSheet s = SplineSheet::rectangle(5, 5, 1.0, 1.0);
  const auto mem = precompute_quadpoints(s, build_membrane_rule(s));
  std::vector<char> pinned(s.num_control(), 0);
  pinned[3] = 1;
  SparsityPlan plan = precompute_sparsity(s.num_control(), mem, {}, pinned);
  const MassMatrix mass = build_mass(s, 1.0, 1.0);
  BlockSparseMatrix m = plan.skeleton;
  add_diagonal(m, mass.lumped, 0.1, pinned);
  const Eigen::MatrixXd d = m.to_dense();
  CHECK(d.isApprox(d.transpose()));
  CHECK((d - Eigen::MatrixXd(d.diagonal().asDiagonal())).isZero());
  CHECK(d(9, 9) == 1.0);
  CHECK(d(0, 0) == doctest::Approx(mass.lumped[0] / 0.01));
  // Pure inertia IP: g = M/dt^2 (C - Chat); the Newton step lands on Chat.
  Eigen::VectorXd c = Eigen::VectorXd::Random(d.rows()), chat = Eigen::VectorXd::Random(d.rows());
  Eigen::VectorXd g = d * (c - chat);
  const Eigen::VectorXd step = d.ldlt().solve(-g);
  CHECK(((c + step) - chat).norm() < 1e-12);
}

namespace {

struct ContactScene {
  std::vector<Vec3> control;
  ContactMesh mesh;
  std::vector<Vec3> x;
  std::vector<ContactPair> pairs;
};

ContactScene dense_contact(int n, int res, double gap) {
  ContactScene sc;
  std::mt19937 rng(3);
  for (int s = 0; s < 2; ++s) {
    SplineSheet sheet = SplineSheet::rectangle(n, n, 1.0, 1.0);
    for (auto& c : sheet.world_cp) c.z() = s * gap;
    randomize(sheet.world_cp, rng, gap * 0.1);
    sc.mesh.append(sample_embedded_mesh(sheet, res, res), static_cast<int>(sc.control.size()), s);
    sc.control.insert(sc.control.end(), sheet.world_cp.begin(), sheet.world_cp.end());
  }
  sc.x = sc.mesh.positions(sc.control);
  const ContactParams p{3 * gap, 1.0};
  sc.pairs = find_active_pairs(sc.mesh, sc.x, {}, p, false);
  for (auto& pair : sc.pairs) barrier_local(pair, sc.x, {}, p);
  return sc;
}

}  // namespace

TEST_CASE("contact conversion matches the triplet oracle") {
  const ContactScene sc = dense_contact(8, 16, 4e-4);
  REQUIRE(sc.pairs.size() >= 500);
  const int nc = static_cast<int>(sc.control.size());
  std::vector<char> pinned(nc, 0);
  pinned[2] = 1;
  const Eigen::MatrixXd oracle = contact_hessian_triplets(sc.pairs, sc.mesh, nc, pinned);
  for (int workers : {1, 4, 8}) {
    tbb::global_control gc(tbb::global_control::max_allowed_parallelism, workers);
    ContactAssemblyStats stats;
    const BlockSparseMatrix h =
        convert_contact_hessian(sc.pairs, sc.mesh, sc.x, nc, pinned, 4 * workers, &stats);
    CHECK(max_abs_diff(h.to_dense(), oracle) < 1e-12);
    CHECK(stats.cells == 4 * workers);
    if (workers == 1) CHECK(stats.cross_cell_merges > 0);
  }
  const BlockSparseMatrix empty = convert_contact_hessian({}, sc.mesh, sc.x, nc, pinned, 4);
  CHECK(empty.num_blocks() == 0);
}

TEST_CASE("single vertex-plane pair conversion") {
  SplineSheet s = SplineSheet::rectangle(5, 5, 1.0, 1.0);
  ContactMesh mesh;
  mesh.append(sample_embedded_mesh(s, 3, 3), 0, 0);
  std::vector<Collider> ground(1);
  ground[0].point = Vec3(0, 0, -4e-4);
  const auto x = mesh.positions(s.world_cp);
  auto pairs = find_active_pairs(mesh, x, ground, {1e-3, 1.0});
  std::vector<ContactPair> one = {pairs[5]};
  barrier_local(one[0], x, ground, {1e-3, 1.0});
  std::vector<char> pinned(s.num_control(), 0);
  const BlockSparseMatrix h = convert_contact_hessian(one, mesh, x, s.num_control(), pinned, 4);
  const VertexWeights& w = mesh.weights[one[0].v[0]];
  CHECK(h.num_blocks() == w.count * w.count);
  for (int a = 0; a < w.count; ++a)
    for (int b = 0; b < w.count; ++b) {
      const int k = h.find(w.control[a], w.control[b]);
      REQUIRE(k >= 0);
      CHECK((Mat3(h.block(k)) - w.coeff[a] * w.coeff[b] * one[0].hess.topLeftCorner<3, 3>())
                .norm() < 1e-12);
    }
}

TEST_CASE("cross-cell merges track cell boundaries, not pair count") {
  // Same geometry, finer contact mesh: many more pairs, same cell layout.
  const ContactScene coarse = dense_contact(10, 12, 4e-4);
  const ContactScene fine = dense_contact(10, 24, 4e-4);
  REQUIRE(fine.pairs.size() > 3 * coarse.pairs.size());
  const int nc = static_cast<int>(coarse.control.size());
  std::vector<char> pinned(nc, 0);
  ContactAssemblyStats sc, sf;
  convert_contact_hessian(coarse.pairs, coarse.mesh, coarse.x, nc, pinned, 4, &sc);
  convert_contact_hessian(fine.pairs, fine.mesh, fine.x, nc, pinned, 4, &sf);
  CHECK(sf.cross_cell_merges <= sc.cross_cell_merges * 1.5 + 10);
}

TEST_CASE("matrix market export") {
  std::vector<std::vector<int>> cols = {{0}};
  BlockSparseMatrix m(1, cols);
  m.block(0) = Mat3::Identity();
  const std::string path = "/tmp/bscloth_test.mtx";
  m.write_matrix_market(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header.find("MatrixMarket") != std::string::npos);
  int r, c, nnz;
  in >> r >> c >> nnz;
  CHECK(r == 3);
  CHECK(nnz == 9);
}
