#include "bscloth/contact.hpp"

#include <tbb/blocked_range.h>
#include <tbb/combinable.h>
#include <tbb/enumerable_thread_specific.h>
#include <tbb/parallel_for.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace bscloth {

void ContactMesh::append(const EmbeddedMesh& mesh, int control_offset, int sheet_id) {
  const int base = num_vertices;
  for (VertexWeights w : mesh.weights) {
    for (int e = 0; e < w.count; ++e) w.control[e] += control_offset;
    weights.push_back(w);
    vertex_sheet.push_back(sheet_id);
  }
  std::vector<std::array<int, 2>> local;
  for (const auto& t : mesh.triangles) {
    triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
    for (int k = 0; k < 3; ++k) {
      const int a = t[k] + base, b = t[(k + 1) % 3] + base;
      local.push_back({std::min(a, b), std::max(a, b)});
    }
  }
  std::sort(local.begin(), local.end());
  local.erase(std::unique(local.begin(), local.end()), local.end());
  edges.insert(edges.end(), local.begin(), local.end());
  num_vertices += mesh.num_vertices();
}

std::vector<Vec3> ContactMesh::positions(std::span<const Vec3> control) const {
  std::vector<Vec3> out(num_vertices);
  for (int k = 0; k < num_vertices; ++k) {
    const VertexWeights& w = weights[k];
    Vec3 x = Vec3::Zero();
    for (int e = 0; e < w.count; ++e) x += w.coeff[e] * control[w.control[e]];
    out[k] = x;
  }
  return out;
}

double ContactMesh::mean_edge_length(std::span<const Vec3> x) const {
  if (edges.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& e : edges) sum += (x[e[0]] - x[e[1]]).norm();
  return sum / edges.size();
}

// ---------------------------------------------------------------------------
// Distances

namespace {

DistanceResult point_edge(const Vec3& p, const Vec3& e0, const Vec3& e1, int sp, int s0, int s1) {
  const Vec3 d = e1 - e0;
  const double len2 = d.squaredNorm();
  const double t = len2 > 0.0 ? (p - e0).dot(d) / len2 : 0.0;
  DistanceResult r;
  if (t <= 0.0) {
    r.sq = (p - e0).squaredNorm();
    r.type = DistanceType::PointPoint;
    r.count = 2;
    r.slots = {sp, s0, 0, 0};
  } else if (t >= 1.0) {
    r.sq = (p - e1).squaredNorm();
    r.type = DistanceType::PointPoint;
    r.count = 2;
    r.slots = {sp, s1, 0, 0};
  } else {
    r.sq = (p - (e0 + t * d)).squaredNorm();
    r.type = DistanceType::PointEdge;
    r.count = 3;
    r.slots = {sp, s0, s1, 0};
  }
  return r;
}

const DistanceResult& closer(const DistanceResult& a, const DistanceResult& b) {
  return b.sq < a.sq ? b : a;
}

}  // namespace

DistanceResult point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a, r = p - a;
  const double g11 = e1.dot(e1), g12 = e1.dot(e2), g22 = e2.dot(e2);
  const double det = g11 * g22 - g12 * g12;
  if (det > 1e-14 * g11 * g22) {
    const double r1 = e1.dot(r), r2 = e2.dot(r);
    const double u = (g22 * r1 - g12 * r2) / det;
    const double v = (g11 * r2 - g12 * r1) / det;
    if (u >= 0.0 && v >= 0.0 && u + v <= 1.0) {
      DistanceResult res;
      res.sq = (r - u * e1 - v * e2).squaredNorm();
      res.type = DistanceType::PointTriangle;
      res.count = 4;
      res.slots = {0, 1, 2, 3};
      return res;
    }
  }
  const DistanceResult ab = point_edge(p, a, b, 0, 1, 2);
  const DistanceResult bc = point_edge(p, b, c, 0, 2, 3);
  const DistanceResult ca = point_edge(p, c, a, 0, 3, 1);
  return closer(closer(ab, bc), ca);
}

DistanceResult edge_edge_distance(const Vec3& a0, const Vec3& a1, const Vec3& b0, const Vec3& b1) {
  const Vec3 d1 = a1 - a0, d2 = b1 - b0, r = a0 - b0;
  const double A = d1.dot(d1), B = d1.dot(d2), C = d2.dot(d2);
  const double D = d1.dot(r), E = d2.dot(r);
  const double denom = A * C - B * B;
  if (denom > 1e-10 * A * C) {
    const double s = (B * E - C * D) / denom;
    const double t = (A * E - B * D) / denom;
    if (s > 0.0 && s < 1.0 && t > 0.0 && t < 1.0) {
      DistanceResult res;
      res.sq = (r + s * d1 - t * d2).squaredNorm();
      res.type = DistanceType::EdgeEdge;
      res.count = 4;
      res.slots = {0, 1, 2, 3};
      return res;
    }
  }
  // Constrained minimum lies on the boundary of the parameter square.
  const DistanceResult p0 = point_edge(a0, b0, b1, 0, 2, 3);
  const DistanceResult p1 = point_edge(a1, b0, b1, 1, 2, 3);
  const DistanceResult p2 = point_edge(b0, a0, a1, 2, 0, 1);
  const DistanceResult p3 = point_edge(b1, a0, a1, 3, 0, 1);
  return closer(closer(p0, p1), closer(p2, p3));
}

double squared_distance_derivatives(DistanceType type, std::span<const Vec3> x,
                                    Eigen::VectorXd& grad, Eigen::MatrixXd& hess) {
  // r(x, y) = sum_i beta_i(y) x_i with beta affine in the closest-point
  // parameters y; s(x) = min_y |r|^2. Envelope theorem for the gradient and
  // the Schur complement phi_xx - phi_xy phi_yy^-1 phi_yx for the Hessian.
  Eigen::VectorXd beta0;
  Eigen::MatrixXd dbeta;
  switch (type) {
    case DistanceType::PointPoint:
      beta0 = Eigen::Vector2d(1, -1);
      dbeta.resize(2, 0);
      break;
    case DistanceType::PointEdge:
      beta0 = Eigen::Vector3d(1, -1, 0);
      dbeta = Eigen::Vector3d(0, 1, -1);
      break;
    case DistanceType::PointTriangle:
      beta0 = Eigen::Vector4d(1, -1, 0, 0);
      dbeta.resize(4, 2);
      dbeta << 0, 0, 1, 1, -1, 0, 0, -1;
      break;
    case DistanceType::EdgeEdge:
      beta0 = Eigen::Vector4d(1, 0, -1, 0);
      dbeta.resize(4, 2);
      dbeta << -1, 0, 1, 0, 0, 1, 0, -1;
      break;
    default:
      throw DomainError("squared_distance_derivatives: not a mesh feature");
  }
  const int n = static_cast<int>(beta0.size());
  const int k = static_cast<int>(dbeta.cols());
  Vec3 r0 = Vec3::Zero();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3, k);
  for (int i = 0; i < n; ++i) {
    r0 += beta0[i] * x[i];
    for (int j = 0; j < k; ++j) jac.col(j) += dbeta(i, j) * x[i];
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd jtj = jac.transpose() * jac;
  if (k > 0) y = -jtj.ldlt().solve(jac.transpose() * r0);
  const Eigen::VectorXd beta = beta0 + dbeta * y;
  const Vec3 r = r0 + jac * y;

  grad.resize(3 * n);
  hess.setZero(3 * n, 3 * n);
  for (int i = 0; i < n; ++i) {
    grad.segment<3>(3 * i) = 2.0 * beta[i] * r;
    for (int j = 0; j < n; ++j) hess.block<3, 3>(3 * i, 3 * j).diagonal().setConstant(2.0 * beta[i] * beta[j]);
  }
  if (k == 0) return r.squaredNorm();
  Eigen::MatrixXd pxy(3 * n, k);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) pxy.block<3, 1>(3 * i, j) = 2.0 * (dbeta(i, j) * r + beta[i] * jac.col(j));
  }
  hess -= pxy * (2.0 * jtj).ldlt().solve(pxy.transpose());
  return r.squaredNorm();
}

// ---------------------------------------------------------------------------
// Barrier

double barrier(double d, const ContactParams& p) {
  if (d >= p.dhat) return 0.0;
  const double t = d - p.dhat;
  return -p.kappa * t * t * std::log(d / p.dhat);
}

double barrier_d1(double d, const ContactParams& p) {
  if (d >= p.dhat) return 0.0;
  const double t = d - p.dhat;
  return -p.kappa * (2.0 * t * std::log(d / p.dhat) + t * t / d);
}

double barrier_d2(double d, const ContactParams& p) {
  if (d >= p.dhat) return 0.0;
  const double t = d - p.dhat;
  return -p.kappa * (2.0 * std::log(d / p.dhat) + 4.0 * t / d - t * t / (d * d));
}

// ---------------------------------------------------------------------------
// Broad phase

namespace {

struct Box {
  Vec3 lo, hi;
};

class SpatialHash {
 public:
  SpatialHash(double cell, const Vec3& origin) : inv_(1.0 / cell), origin_(origin) {}

  void insert(int id, const Box& b) {
    visit(b, [&](std::uint64_t key) { cells_[key].push_back(id); });
  }

  /// Ids whose boxes share a cell with `b`, sorted and unique.
  void query(const Box& b, std::vector<int>& out) const {
    out.clear();
    visit(b, [&](std::uint64_t key) {
      const auto it = cells_.find(key);
      if (it != cells_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    });
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }

 private:
  template <class F>
  void visit(const Box& b, F f) const {
    const Eigen::Vector3i lo = cell_of(b.lo), hi = cell_of(b.hi);
    for (int z = lo.z(); z <= hi.z(); ++z)
      for (int y = lo.y(); y <= hi.y(); ++y)
        for (int x = lo.x(); x <= hi.x(); ++x) f(pack(x, y, z));
  }
  Eigen::Vector3i cell_of(const Vec3& p) const {
    const Vec3 c = ((p - origin_) * inv_).array().floor();
    return c.cast<int>();
  }
  static std::uint64_t pack(int x, int y, int z) {
    const auto m = [](int v) { return static_cast<std::uint64_t>(v + (1 << 20)) & 0x1fffff; };
    return m(x) | (m(y) << 21) | (m(z) << 42);
  }

  double inv_;
  Vec3 origin_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

Box point_box(const Vec3& p) { return {p, p}; }

Box tri_box(const ContactMesh& m, std::span<const Vec3> x, int t) {
  const auto& tr = m.triangles[t];
  Box b{x[tr[0]], x[tr[0]]};
  for (int k = 1; k < 3; ++k) {
    b.lo = b.lo.cwiseMin(x[tr[k]]);
    b.hi = b.hi.cwiseMax(x[tr[k]]);
  }
  return b;
}

Box edge_box(const ContactMesh& m, std::span<const Vec3> x, int e) {
  const auto& ed = m.edges[e];
  return {x[ed[0]].cwiseMin(x[ed[1]]), x[ed[0]].cwiseMax(x[ed[1]])};
}

Box inflate(Box b, double r) {
  b.lo.array() -= r;
  b.hi.array() += r;
  return b;
}

Box merge(const Box& a, const Box& b) { return {a.lo.cwiseMin(b.lo), a.hi.cwiseMax(b.hi)}; }

// Cell size from the typical primitive extent, never below `floor`.
double choose_cell(const std::vector<Box>& boxes, double floor) {
  double sum = 0.0;
  for (const Box& b : boxes) sum += (b.hi - b.lo).maxCoeff();
  const double mean = boxes.empty() ? 0.0 : sum / boxes.size();
  return std::max({mean, floor, 1e-9});
}

Vec3 origin_of(std::span<const Vec3> x) {
  Vec3 o = Vec3::Constant(std::numeric_limits<double>::max());
  for (const Vec3& p : x) o = o.cwiseMin(p);
  return x.empty() ? Vec3::Zero() : o;
}

bool shares_vertex(const std::array<int, 3>& t, int v) { return t[0] == v || t[1] == v || t[2] == v; }

bool shares_vertex(const std::array<int, 2>& a, const std::array<int, 2>& b) {
  return a[0] == b[0] || a[0] == b[1] || a[1] == b[0] || a[1] == b[1];
}

bool pair_less(const ContactPair& a, const ContactPair& b) {
  if (a.kind != b.kind) return a.kind < b.kind;
  if (a.collider != b.collider) return a.collider < b.collider;
  return a.v < b.v;
}

ContactPair make_vt(int v, const std::array<int, 3>& t, const DistanceResult& r) {
  ContactPair p;
  p.kind = PairKind::VertexTriangle;
  p.count = 4;
  p.v = {v, t[0], t[1], t[2]};
  p.d = std::sqrt(r.sq);
  p.type = r.type;
  p.feature_count = r.count;
  p.feature = r.slots;
  return p;
}

ContactPair make_ee(const std::array<int, 2>& a, const std::array<int, 2>& b,
                    const DistanceResult& r) {
  ContactPair p;
  p.kind = PairKind::EdgeEdge;
  p.count = 4;
  p.v = {a[0], a[1], b[0], b[1]};
  p.d = std::sqrt(r.sq);
  p.type = r.type;
  p.feature_count = r.count;
  p.feature = r.slots;
  return p;
}

double collider_distance(const Collider& c, const Vec3& p) {
  if (c.type == Collider::Type::Plane) return c.normal.dot(p - c.point);
  return (p - c.point).norm() - c.radius;
}

void collider_pairs(std::span<const Vec3> x, std::span<const Collider> colliders, double radius,
                    std::vector<ContactPair>& out) {
  for (int c = 0; c < static_cast<int>(colliders.size()); ++c) {
    for (int v = 0; v < static_cast<int>(x.size()); ++v) {
      const double d = collider_distance(colliders[c], x[v]);
      if (d >= radius) continue;
      ContactPair p;
      p.kind = colliders[c].type == Collider::Type::Plane ? PairKind::VertexPlane
                                                           : PairKind::VertexSphere;
      p.type = colliders[c].type == Collider::Type::Plane ? DistanceType::Plane
                                                           : DistanceType::Sphere;
      p.count = 1;
      p.v = {v, -1, -1, -1};
      p.collider = c;
      p.d = d;
      p.feature_count = 1;
      p.feature = {0, 0, 0, 0};
      out.push_back(p);
    }
  }
}

bool skip_pair(const ContactMesh& m, bool self_contact, int va, int vb) {
  return !self_contact && m.vertex_sheet[va] == m.vertex_sheet[vb];
}

std::vector<ContactPair> collect(const ContactMesh& mesh, std::span<const Vec3> x,
                                 std::span<const Collider> colliders, double radius,
                                 bool self_contact) {
  const int nt = static_cast<int>(mesh.triangles.size());
  const int ne = static_cast<int>(mesh.edges.size());
  std::vector<Box> tboxes(nt), eboxes(ne);
  for (int t = 0; t < nt; ++t) tboxes[t] = inflate(tri_box(mesh, x, t), radius);
  for (int e = 0; e < ne; ++e) eboxes[e] = inflate(edge_box(mesh, x, e), radius);
  const double cell = choose_cell(tboxes, radius);
  const Vec3 origin = origin_of(x);
  SpatialHash tri_hash(cell, origin), edge_hash(cell, origin);
  for (int t = 0; t < nt; ++t) tri_hash.insert(t, tboxes[t]);
  for (int e = 0; e < ne; ++e) edge_hash.insert(e, eboxes[e]);

  tbb::enumerable_thread_specific<std::vector<ContactPair>> local;
  tbb::enumerable_thread_specific<std::vector<int>> scratch;
  const double r2 = radius * radius;
  tbb::parallel_for(tbb::blocked_range<int>(0, mesh.num_vertices, 256), [&](const auto& range) {
    auto& out = local.local();
    auto& cand = scratch.local();
    for (int v = range.begin(); v != range.end(); ++v) {
      tri_hash.query(point_box(x[v]), cand);
      for (int t : cand) {
        const auto& tr = mesh.triangles[t];
        if (shares_vertex(tr, v) || skip_pair(mesh, self_contact, v, tr[0])) continue;
        const DistanceResult r = point_triangle_distance(x[v], x[tr[0]], x[tr[1]], x[tr[2]]);
        if (r.sq < r2) out.push_back(make_vt(v, tr, r));
      }
    }
  });
  tbb::parallel_for(tbb::blocked_range<int>(0, ne, 256), [&](const auto& range) {
    auto& out = local.local();
    auto& cand = scratch.local();
    for (int e = range.begin(); e != range.end(); ++e) {
      const auto& ea = mesh.edges[e];
      edge_hash.query(edge_box(mesh, x, e), cand);
      for (int f : cand) {
        if (f <= e) continue;
        const auto& eb = mesh.edges[f];
        if (shares_vertex(ea, eb) || skip_pair(mesh, self_contact, ea[0], eb[0])) continue;
        const DistanceResult r = edge_edge_distance(x[ea[0]], x[ea[1]], x[eb[0]], x[eb[1]]);
        if (r.sq < r2) out.push_back(make_ee(ea, eb, r));
      }
    }
  });
  std::vector<ContactPair> pairs;
  for (auto& part : local) pairs.insert(pairs.end(), part.begin(), part.end());
  collider_pairs(x, colliders, radius, pairs);
  std::sort(pairs.begin(), pairs.end(), pair_less);
  return pairs;
}

void check_positive(const std::vector<ContactPair>& pairs) {
  for (const ContactPair& p : pairs) {
    if (p.d <= 0.0) {
      std::ostringstream msg;
      msg << "interpenetration: pair of kind " << static_cast<int>(p.kind) << " on vertices ("
          << p.v[0] << ", " << p.v[1] << ", " << p.v[2] << ", " << p.v[3] << ") has distance "
          << p.d;
      throw InterpenetrationError(msg.str());
    }
  }
}

}  // namespace

std::vector<ContactPair> find_active_pairs(const ContactMesh& mesh, std::span<const Vec3> x,
                                           std::span<const Collider> colliders,
                                           const ContactParams& params, bool self_contact) {
  auto pairs = collect(mesh, x, colliders, params.dhat, self_contact);
  check_positive(pairs);
  return pairs;
}

std::vector<ContactPair> find_active_pairs_brute_force(const ContactMesh& mesh,
                                                       std::span<const Vec3> x,
                                                       std::span<const Collider> colliders,
                                                       const ContactParams& params,
                                                       bool self_contact) {
  std::vector<ContactPair> pairs;
  const double r2 = params.dhat * params.dhat;
  for (int v = 0; v < mesh.num_vertices; ++v) {
    for (const auto& tr : mesh.triangles) {
      if (shares_vertex(tr, v) || skip_pair(mesh, self_contact, v, tr[0])) continue;
      const DistanceResult r = point_triangle_distance(x[v], x[tr[0]], x[tr[1]], x[tr[2]]);
      if (r.sq < r2) pairs.push_back(make_vt(v, tr, r));
    }
  }
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    for (std::size_t f = e + 1; f < mesh.edges.size(); ++f) {
      const auto &ea = mesh.edges[e], &eb = mesh.edges[f];
      if (shares_vertex(ea, eb) || skip_pair(mesh, self_contact, ea[0], eb[0])) continue;
      const DistanceResult r = edge_edge_distance(x[ea[0]], x[ea[1]], x[eb[0]], x[eb[1]]);
      if (r.sq < r2) pairs.push_back(make_ee(ea, eb, r));
    }
  }
  collider_pairs(x, colliders, params.dhat, pairs);
  std::sort(pairs.begin(), pairs.end(), pair_less);
  check_positive(pairs);
  return pairs;
}

double barrier_local(ContactPair& pair, std::span<const Vec3> x, std::span<const Collider> colliders,
                     const ContactParams& params, Projection proj) {
  const int fc = pair.feature_count;
  Eigen::VectorXd gd(3 * fc);
  Eigen::MatrixXd hd(3 * fc, 3 * fc);
  double d;
  if (pair.type == DistanceType::Plane || pair.type == DistanceType::Sphere) {
    const Collider& c = colliders[pair.collider];
    const Vec3& p = x[pair.v[0]];
    if (pair.type == DistanceType::Plane) {
      d = c.normal.dot(p - c.point);
      gd = c.normal;
      hd.setZero();
    } else {
      const Vec3 r = p - c.point;
      const double len = r.norm();
      const Vec3 u = r / len;
      d = len - c.radius;
      gd = u;
      hd = (Mat3::Identity() - u * u.transpose()) / len;
    }
  } else {
    std::array<Vec3, 4> pts;
    for (int k = 0; k < fc; ++k) pts[k] = x[pair.v[pair.feature[k]]];
    Eigen::VectorXd gs;
    Eigen::MatrixXd hs;
    const double s =
        squared_distance_derivatives(pair.type, std::span<const Vec3>(pts.data(), fc), gs, hs);
    d = std::sqrt(s);
    gd = gs / (2.0 * d);
    hd = hs / (2.0 * d) - gs * gs.transpose() / (4.0 * d * d * d);
  }
  pair.d = d;
  const double b = barrier(d, params);
  const double b1 = barrier_d1(d, params);
  const double b2 = barrier_d2(d, params);
  Eigen::MatrixXd hb = b2 * gd * gd.transpose() + b1 * hd;
  if (proj == Projection::Psd) project_psd(hb);
  pair.grad.setZero();
  pair.hess.setZero();
  for (int i = 0; i < fc; ++i) {
    const int si = pair.feature[i];
    pair.grad.segment<3>(3 * si) = b1 * gd.segment<3>(3 * i);
    for (int j = 0; j < fc; ++j) {
      pair.hess.block<3, 3>(3 * si, 3 * pair.feature[j]) = hb.block<3, 3>(3 * i, 3 * j);
    }
  }
  return b;
}

double barrier_energy(const ContactMesh& mesh, std::span<const Vec3> x,
                      std::span<const Collider> colliders, const ContactParams& params,
                      bool self_contact) {
  const auto pairs = collect(mesh, x, colliders, params.dhat, self_contact);
  double e = 0.0;
  for (const ContactPair& p : pairs) {
    if (!(p.d > 0.0)) return std::numeric_limits<double>::infinity();
    e += barrier(p.d, params);
  }
  return e;
}

LocalSystem pullback(const ContactPair& pair, const ContactMesh& mesh) {
  LocalSystem ls;
  auto slot_of = [&](int control) {
    for (std::size_t k = 0; k < ls.stencil.size(); ++k)
      if (ls.stencil[k] == control) return static_cast<int>(k);
    ls.stencil.push_back(control);
    return static_cast<int>(ls.stencil.size()) - 1;
  };
  std::array<std::array<int, 9>, 4> slot{};
  for (int i = 0; i < pair.count; ++i) {
    const VertexWeights& w = mesh.weights[pair.v[i]];
    for (int e = 0; e < w.count; ++e) slot[i][e] = slot_of(w.control[e]);
  }
  const int n = static_cast<int>(ls.stencil.size());
  ls.grad.assign(n, Vec3::Zero());
  ls.hess = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  ls.energy = 0.0;
  for (int i = 0; i < pair.count; ++i) {
    const VertexWeights& wi = mesh.weights[pair.v[i]];
    for (int e = 0; e < wi.count; ++e) {
      ls.grad[slot[i][e]] += wi.coeff[e] * pair.grad.segment<3>(3 * i);
      for (int j = 0; j < pair.count; ++j) {
        const VertexWeights& wj = mesh.weights[pair.v[j]];
        for (int f = 0; f < wj.count; ++f) {
          ls.hess.block<3, 3>(3 * slot[i][e], 3 * slot[j][f]) +=
              wi.coeff[e] * wj.coeff[f] * pair.hess.block<3, 3>(3 * i, 3 * j);
        }
      }
    }
  }
  return ls;
}

// ---------------------------------------------------------------------------
// Continuous collision detection

namespace {

constexpr double kFloor = 0.01;

// Conservative advancement on one pair. `dist(t)` is the distance at x + t dx,
// `lp` an upper bound of its rate of decrease.
template <class Dist>
double advance(Dist dist, double lp) {
  const double d0 = dist(0.0);
  if (!(d0 > 0.0)) throw InterpenetrationError("ccd_max_step: pair starts at zero distance");
  if (lp <= 0.0) return 1.0;
  const double floor = kFloor * d0;
  double t = 0.0, d = d0;
  for (int it = 0; it < 200; ++it) {
    if (d - floor >= lp * (1.0 - t)) return 1.0;
    const double step = 0.9 * (d - floor) / lp;
    t += step;
    d = dist(t);
    if (step < 1e-3 * t) break;
  }
  return t;
}

}  // namespace

double ccd_max_step(const ContactMesh& mesh, std::span<const Vec3> x, std::span<const Vec3> dx,
                    std::span<const Collider> colliders, bool self_contact) {
  const int nv = mesh.num_vertices;
  std::vector<Vec3> xe(nv);
  std::vector<double> len(nv);
  double max_len = 0.0;
  for (int v = 0; v < nv; ++v) {
    xe[v] = x[v] + dx[v];
    len[v] = dx[v].norm();
    max_len = std::max(max_len, len[v]);
  }
  if (max_len == 0.0) return 1.0;

  // Colliders are static during the solve.
  double t_min = 1.0;
  for (const Collider& c : colliders) {
    for (int v = 0; v < nv; ++v) {
      if (len[v] == 0.0) continue;
      if (c.type == Collider::Type::Plane) {
        const double d0 = c.normal.dot(x[v] - c.point);
        const double vn = c.normal.dot(dx[v]);
        if (!(d0 > 0.0)) throw InterpenetrationError("ccd_max_step: vertex on or behind plane");
        if (vn < 0.0) t_min = std::min(t_min, (1.0 - kFloor) * d0 / -vn);
      } else {
        const double t = advance(
            [&](double s) { return collider_distance(c, x[v] + s * dx[v]); }, len[v]);
        t_min = std::min(t_min, t);
      }
    }
  }

  const int nt = static_cast<int>(mesh.triangles.size());
  const int ne = static_cast<int>(mesh.edges.size());
  std::vector<Box> tboxes(nt), eboxes(ne);
  for (int t = 0; t < nt; ++t) tboxes[t] = merge(tri_box(mesh, x, t), tri_box(mesh, xe, t));
  for (int e = 0; e < ne; ++e) eboxes[e] = merge(edge_box(mesh, x, e), edge_box(mesh, xe, e));
  const double cell = choose_cell(tboxes, 1e-6);
  const Vec3 origin = origin_of(x).cwiseMin(origin_of(xe));
  SpatialHash tri_hash(cell, origin), edge_hash(cell, origin);
  for (int t = 0; t < nt; ++t) tri_hash.insert(t, tboxes[t]);
  for (int e = 0; e < ne; ++e) edge_hash.insert(e, eboxes[e]);

  tbb::combinable<double> best([] { return 1.0; });
  tbb::enumerable_thread_specific<std::vector<int>> scratch;
  tbb::parallel_for(tbb::blocked_range<int>(0, nv, 256), [&](const auto& range) {
    auto& cand = scratch.local();
    double& b = best.local();
    for (int v = range.begin(); v != range.end(); ++v) {
      tri_hash.query({x[v].cwiseMin(xe[v]), x[v].cwiseMax(xe[v])}, cand);
      for (int t : cand) {
        const auto& tr = mesh.triangles[t];
        if (shares_vertex(tr, v) || skip_pair(mesh, self_contact, v, tr[0])) continue;
        const double lp = len[v] + std::max({len[tr[0]], len[tr[1]], len[tr[2]]});
        const double s = advance(
            [&](double s) {
              return std::sqrt(point_triangle_distance(x[v] + s * dx[v], x[tr[0]] + s * dx[tr[0]],
                                                       x[tr[1]] + s * dx[tr[1]],
                                                       x[tr[2]] + s * dx[tr[2]])
                                   .sq);
            },
            lp);
        b = std::min(b, s);
      }
    }
  });
  tbb::parallel_for(tbb::blocked_range<int>(0, ne, 256), [&](const auto& range) {
    auto& cand = scratch.local();
    double& b = best.local();
    for (int e = range.begin(); e != range.end(); ++e) {
      const auto& ea = mesh.edges[e];
      edge_hash.query(eboxes[e], cand);
      for (int f : cand) {
        if (f <= e) continue;
        const auto& eb = mesh.edges[f];
        if (shares_vertex(ea, eb) || skip_pair(mesh, self_contact, ea[0], eb[0])) continue;
        const double lp = std::max(len[ea[0]], len[ea[1]]) + std::max(len[eb[0]], len[eb[1]]);
        const double s = advance(
            [&](double s) {
              return std::sqrt(edge_edge_distance(x[ea[0]] + s * dx[ea[0]], x[ea[1]] + s * dx[ea[1]],
                                                  x[eb[0]] + s * dx[eb[0]], x[eb[1]] + s * dx[eb[1]])
                                   .sq);
            },
            lp);
        b = std::min(b, s);
      }
    }
  });
  return std::min(t_min, best.combine([](double a, double b) { return std::min(a, b); }));
}

double min_distance(const ContactMesh& mesh, std::span<const Vec3> x,
                    std::span<const Collider> colliders, double radius, bool self_contact) {
  double m = std::numeric_limits<double>::infinity();
  for (const ContactPair& p : collect(mesh, x, colliders, radius, self_contact)) m = std::min(m, p.d);
  return m;
}

}  // namespace bscloth
