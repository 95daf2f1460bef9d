#pragma once

#include "bscloth/elasticity.hpp"
#include "bscloth/spline.hpp"

#include <Eigen/Core>

#include <array>
#include <span>
#include <vector>

namespace bscloth {

struct ContactParams {
  double dhat = 1e-3;  // m
  double kappa = 1e3;  // Pa
};

/// Analytic obstacle. Planes keep the positive side of `normal`; spheres keep
/// their outside. Angular velocity is bookkeeping only since contact is
/// frictionless.
struct Collider {
  enum class Type { Plane, Sphere };
  Type type = Type::Plane;
  Vec3 point = Vec3::Zero();  // plane point or sphere centre
  Vec3 normal = Vec3::UnitZ();
  double radius = 0.0;
  Vec3 angular_velocity = Vec3::Zero();
  double angle = 0.0;
};

/// All embedded meshes of a scene merged into one vertex numbering, with
/// interpolation weights referring to global control indices.
struct ContactMesh {
  int num_vertices = 0;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<int, 2>> edges;
  std::vector<VertexWeights> weights;
  std::vector<int> vertex_sheet;

  /// Append `mesh` whose control indices start at `control_offset`.
  void append(const EmbeddedMesh& mesh, int control_offset, int sheet_id);
  std::vector<Vec3> positions(std::span<const Vec3> control) const;
  double mean_edge_length(std::span<const Vec3> x) const;
};

enum class PairKind { VertexTriangle, EdgeEdge, VertexPlane, VertexSphere };

/// Closest-feature type of a pair; fixes which squared-distance formula (and
/// which of the pair's vertices) the derivatives use.
enum class DistanceType { PointPoint, PointEdge, PointTriangle, EdgeEdge, Plane, Sphere };

struct ContactPair {
  PairKind kind = PairKind::VertexTriangle;
  int count = 0;                  // involved mesh vertices (1 or 4)
  std::array<int, 4> v{-1, -1, -1, -1};
  int collider = -1;
  double d = 0.0;                 // unsquared distance (m)
  DistanceType type = DistanceType::PointTriangle;
  int feature_count = 0;          // vertices used by `type`
  std::array<int, 4> feature{};   // slots into v
  Eigen::Matrix<double, 12, 1> grad = Eigen::Matrix<double, 12, 1>::Zero();
  Eigen::Matrix<double, 12, 12> hess = Eigen::Matrix<double, 12, 12>::Zero();
};

/// Squared distance between point p and triangle (a, b, c) with the closest
/// feature, and between segments (a0, a1) and (b0, b1). `slots` receives the
/// indices (0-3 in argument order) of the vertices the feature uses.
struct DistanceResult {
  double sq = 0.0;
  DistanceType type = DistanceType::PointPoint;
  int count = 0;
  std::array<int, 4> slots{};
};
DistanceResult point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);
DistanceResult edge_edge_distance(const Vec3& a0, const Vec3& a1, const Vec3& b0, const Vec3& b1);

/// Gradient and Hessian of the squared distance of a classified feature.
/// `x` lists the feature's points in slot order; outputs are 3n and 3n x 3n.
/// Returns the squared distance.
double squared_distance_derivatives(DistanceType type, std::span<const Vec3> x,
                                    Eigen::VectorXd& grad, Eigen::MatrixXd& hess);

/// b(d) = -kappa (d - dhat)^2 ln(d / dhat) for 0 < d < dhat, else 0.
double barrier(double d, const ContactParams& params);
double barrier_d1(double d, const ContactParams& params);
double barrier_d2(double d, const ContactParams& params);

/// Pairs within dhat: vertex-triangle and edge-edge pairs that share no
/// vertex, plus vertex-collider pairs. Ordered deterministically. Throws
/// InterpenetrationError on a pair with d <= 0.
std::vector<ContactPair> find_active_pairs(const ContactMesh& mesh, std::span<const Vec3> x,
                                           std::span<const Collider> colliders,
                                           const ContactParams& params, bool self_contact = true);

/// O(n^2) reference implementation of find_active_pairs.
std::vector<ContactPair> find_active_pairs_brute_force(const ContactMesh& mesh,
                                                       std::span<const Vec3> x,
                                                       std::span<const Collider> colliders,
                                                       const ContactParams& params,
                                                       bool self_contact = true);

/// Fill grad/hess of a pair (PSD-projected Hessian unless `proj` is None) and
/// return its barrier energy.
double barrier_local(ContactPair& pair, std::span<const Vec3> x, std::span<const Collider> colliders,
                     const ContactParams& params, Projection proj = Projection::Psd);

/// Sum of barrier energies; +infinity if any pair has d <= 0.
double barrier_energy(const ContactMesh& mesh, std::span<const Vec3> x,
                      std::span<const Collider> colliders, const ContactParams& params,
                      bool self_contact = true);

/// Vertex-space local system mapped to control points through the fixed
/// interpolation weights.
LocalSystem pullback(const ContactPair& pair, const ContactMesh& mesh);

/// Largest t in (0, 1] such that x + t dx keeps every pair above 1% of its
/// starting distance, by conservative advancement.
double ccd_max_step(const ContactMesh& mesh, std::span<const Vec3> x, std::span<const Vec3> dx,
                    std::span<const Collider> colliders, bool self_contact = true);

/// Smallest distance over all vertex-triangle, edge-edge and collider pairs
/// within `radius` (infinity if none).
double min_distance(const ContactMesh& mesh, std::span<const Vec3> x,
                    std::span<const Collider> colliders, double radius, bool self_contact = true);

}  // namespace bscloth
