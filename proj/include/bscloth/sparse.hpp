#pragma once

#include "bscloth/contact.hpp"
#include "bscloth/geometry.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bscloth {

using Mat3Map = Eigen::Map<Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>;
using Mat3CMap = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>;

/// Symmetric matrix of 3x3 blocks in compressed-sparse-column form. Both
/// triangles are stored; rows are sorted within each column.
class BlockSparseMatrix {
 public:
  BlockSparseMatrix() = default;
  /// `columns[c]` lists the block rows present in column c (any order).
  BlockSparseMatrix(int n, const std::vector<std::vector<int>>& columns);

  int dim() const { return n_; }
  int num_blocks() const { return static_cast<int>(inner_.size()); }
  const std::vector<int>& outer() const { return outer_; }
  const std::vector<int>& inner() const { return inner_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  /// Storage index of block (row, col), or -1.
  int find(int row, int col) const;
  Mat3Map block(int k) { return Mat3Map(values_.data() + 9 * k); }
  Mat3CMap block(int k) const { return Mat3CMap(values_.data() + 9 * k); }

  void set_zero();
  bool same_pattern(const BlockSparseMatrix& other) const;

  /// y = A x (or y += A x), parallel over block rows.
  void multiply(std::span<const Vec3> x, std::span<Vec3> y, bool accumulate = false) const;

  Eigen::SparseMatrix<double> to_eigen() const;
  Eigen::MatrixXd to_dense() const;
  void write_matrix_market(const std::string& path) const;

 private:
  int n_ = 0;
  std::vector<int> outer_{0};
  std::vector<int> inner_;
  std::vector<double> values_;
};

/// Inverted index from the quadrature sites of one energy to the matrix.
struct StencilMap {
  struct PointRef {
    int qp;
    int slot;
  };
  struct BlockRef {
    int qp;
    int a;  // local row slot
    int b;  // local column slot
  };
  std::vector<int> point_offset;  // per control point, into point_refs
  std::vector<PointRef> point_refs;
  std::vector<int> block_offset;  // per stored block, into block_refs
  std::vector<BlockRef> block_refs;
  std::vector<std::size_t> hess_offset;  // per site, into a flat local-Hessian buffer
  std::vector<int> count;                // per site stencil size
  std::size_t hess_size = 0;
};

struct SparsityPlan {
  BlockSparseMatrix skeleton;
  StencilMap membrane;
  StencilMap bending;
};

/// Pattern with a block for every pair of free control points sharing a site,
/// plus every diagonal block. Couplings to pinned control points are dropped.
SparsityPlan precompute_sparsity(int num_control, std::span<const QuadPoint> membrane,
                                 std::span<const QuadPoint> bending,
                                 std::span<const char> pinned);

/// out.block(k) (+)= sum of the local Hessian sub-blocks mapped to k. Local
/// Hessians are row-major (3 count)^2 at map.hess_offset[qp].
void assemble_elasticity(const StencilMap& map, std::span<const double> local_hess,
                         BlockSparseMatrix& out, bool accumulate = false);

/// grad[c] (+)= sum of local gradients mapped to control c; local gradients
/// are stored at kMaxStencil * qp + slot.
void assemble_gradient(const StencilMap& map, std::span<const Vec3> local_grad,
                       std::span<Vec3> grad, bool accumulate = false);

/// Add m / dt^2 to diagonal blocks; pinned control points get an identity
/// diagonal block and no couplings.
void add_diagonal(BlockSparseMatrix& m, std::span<const double> mass, double dt,
                  std::span<const char> pinned);

/// Spatial partition used by the contact conversion.
struct SpatialBlocks {
  Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();
  int axis0 = 0, axis1 = 1;
  int n0 = 1, n1 = 1;

  int num_cells() const { return n0 * n1; }
  int cell_of(const Vec3& x) const;
};

/// AABB of `x` cut into `num_cells` cells along its two longest axes.
SpatialBlocks make_spatial_blocks(std::span<const Vec3> x, int num_cells);

struct ContactAssemblyStats {
  int cells = 0;
  int vertex_blocks = 0;
  int control_blocks = 0;
  int cross_cell_merges = 0;  // control blocks produced by more than one cell
};

/// Two-stage conversion of vertex-space pair Hessians into a control-point
/// BlockSparseMatrix. Pairs are bucketed by their lowest vertex; each cell
/// accumulates vertex-pair blocks, then distributes them through the
/// interpolation weights; cells merge in index order. Blocks touching pinned
/// control points are dropped.
BlockSparseMatrix convert_contact_hessian(std::span<const ContactPair> pairs,
                                          const ContactMesh& mesh, std::span<const Vec3> x,
                                          int num_control, std::span<const char> pinned,
                                          int num_cells, ContactAssemblyStats* stats = nullptr);

/// Contact gradient in control space: sum of pulled-back pair gradients.
void contact_gradient(std::span<const ContactPair> pairs, const ContactMesh& mesh,
                      std::span<Vec3> grad);

/// Sequential triplet expansion of the same quantities (reference oracle).
Eigen::SparseMatrix<double> contact_hessian_triplets(std::span<const ContactPair> pairs,
                                                     const ContactMesh& mesh, int num_control,
                                                     std::span<const char> pinned);
Eigen::SparseMatrix<double> elasticity_triplets(std::span<const QuadPoint> qps,
                                                std::span<const double> local_hess,
                                                const StencilMap& map, int num_control,
                                                std::span<const char> pinned);

}  // namespace bscloth
