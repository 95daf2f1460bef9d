#include "bscloth/sparse.hpp"

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace bscloth {

// ---------------------------------------------------------------------------
// BlockSparseMatrix

BlockSparseMatrix::BlockSparseMatrix(int n, const std::vector<std::vector<int>>& columns) : n_(n) {
  outer_.assign(n + 1, 0);
  for (int c = 0; c < n; ++c) {
    std::vector<int> rows = columns[c];
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    inner_.insert(inner_.end(), rows.begin(), rows.end());
    outer_[c + 1] = static_cast<int>(inner_.size());
  }
  values_.assign(9 * inner_.size(), 0.0);
}

int BlockSparseMatrix::find(int row, int col) const {
  const auto first = inner_.begin() + outer_[col];
  const auto last = inner_.begin() + outer_[col + 1];
  const auto it = std::lower_bound(first, last, row);
  if (it == last || *it != row) return -1;
  return static_cast<int>(it - inner_.begin());
}

void BlockSparseMatrix::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

bool BlockSparseMatrix::same_pattern(const BlockSparseMatrix& o) const {
  return n_ == o.n_ && outer_ == o.outer_ && inner_ == o.inner_;
}

void BlockSparseMatrix::multiply(std::span<const Vec3> x, std::span<Vec3> y, bool accumulate) const {
  // Symmetric storage: row i of A equals column i transposed.
  tbb::parallel_for(tbb::blocked_range<int>(0, n_, 512), [&](const auto& r) {
    for (int i = r.begin(); i != r.end(); ++i) {
      Vec3 acc = Vec3::Zero();
      for (int k = outer_[i]; k < outer_[i + 1]; ++k) acc += block(k).transpose() * x[inner_[k]];
      y[i] = accumulate ? Vec3(y[i] + acc) : acc;
    }
  });
}

Eigen::SparseMatrix<double> BlockSparseMatrix::to_eigen() const {
  Eigen::SparseMatrix<double> m(3 * n_, 3 * n_);
  Eigen::VectorXi per_col(3 * n_);
  for (int c = 0; c < n_; ++c) per_col.segment<3>(3 * c).setConstant(3 * (outer_[c + 1] - outer_[c]));
  m.reserve(per_col);
  for (int c = 0; c < n_; ++c) {
    for (int cc = 0; cc < 3; ++cc) {
      for (int k = outer_[c]; k < outer_[c + 1]; ++k) {
        const Mat3CMap b = block(k);
        for (int rr = 0; rr < 3; ++rr) m.insert(3 * inner_[k] + rr, 3 * c + cc) = b(rr, cc);
      }
    }
  }
  m.makeCompressed();
  return m;
}

Eigen::MatrixXd BlockSparseMatrix::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3 * n_, 3 * n_);
  for (int c = 0; c < n_; ++c)
    for (int k = outer_[c]; k < outer_[c + 1]; ++k) d.block<3, 3>(3 * inner_[k], 3 * c) = block(k);
  return d;
}

void BlockSparseMatrix::write_matrix_market(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write matrix market file " + path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << 3 * n_ << ' ' << 3 * n_ << ' ' << 9 * inner_.size() << '\n';
  out << std::setprecision(17);
  for (int c = 0; c < n_; ++c)
    for (int k = outer_[c]; k < outer_[c + 1]; ++k)
      for (int cc = 0; cc < 3; ++cc)
        for (int rr = 0; rr < 3; ++rr)
          out << 3 * inner_[k] + rr + 1 << ' ' << 3 * c + cc + 1 << ' ' << block(k)(rr, cc) << '\n';
}

// ---------------------------------------------------------------------------
// Elasticity sparsity and assembly

namespace {

StencilMap build_map(const BlockSparseMatrix& skel, std::span<const QuadPoint> qps,
                     std::span<const char> pinned) {
  const int n = skel.dim();
  StencilMap map;
  map.hess_offset.resize(qps.size());
  map.count.resize(qps.size());
  std::size_t off = 0;
  for (std::size_t q = 0; q < qps.size(); ++q) {
    map.hess_offset[q] = off;
    map.count[q] = qps[q].count;
    off += 9 * qps[q].count * qps[q].count;
  }
  map.hess_size = off;

  // Counting sort into per-point and per-block lists; site order is kept so
  // every reduction runs in a fixed order.
  map.point_offset.assign(n + 1, 0);
  map.block_offset.assign(skel.num_blocks() + 1, 0);
  std::vector<int> block_of;
  for (std::size_t q = 0; q < qps.size(); ++q) {
    const QuadPoint& qp = qps[q];
    for (int a = 0; a < qp.count; ++a) {
      const int ca = qp.stencil[a];
      ++map.point_offset[ca + 1];
      for (int b = 0; b < qp.count; ++b) {
        const int cb = qp.stencil[b];
        int k = -1;
        if (!(pinned[ca] || pinned[cb]) || ca == cb) {
          k = skel.find(ca, cb);
          if (k < 0) {
            std::ostringstream msg;
            msg << "sparsity: block (" << ca << ", " << cb << ") of site " << q
                << " missing from the skeleton";
            throw SolverError(msg.str());
          }
          if (pinned[ca]) k = -1;  // pinned diagonal is set to identity
        }
        block_of.push_back(k);
        if (k >= 0) ++map.block_offset[k + 1];
      }
    }
  }
  std::partial_sum(map.point_offset.begin(), map.point_offset.end(), map.point_offset.begin());
  std::partial_sum(map.block_offset.begin(), map.block_offset.end(), map.block_offset.begin());
  map.point_refs.resize(map.point_offset.back());
  map.block_refs.resize(map.block_offset.back());
  std::vector<int> pfill(map.point_offset.begin(), map.point_offset.end() - 1);
  std::vector<int> bfill(map.block_offset.begin(), map.block_offset.end() - 1);
  std::size_t idx = 0;
  for (std::size_t q = 0; q < qps.size(); ++q) {
    const QuadPoint& qp = qps[q];
    for (int a = 0; a < qp.count; ++a) {
      map.point_refs[pfill[qp.stencil[a]]++] = {static_cast<int>(q), a};
      for (int b = 0; b < qp.count; ++b) {
        const int k = block_of[idx++];
        if (k >= 0) map.block_refs[bfill[k]++] = {static_cast<int>(q), a, b};
      }
    }
  }
  return map;
}

}  // namespace

SparsityPlan precompute_sparsity(int num_control, std::span<const QuadPoint> membrane,
                                 std::span<const QuadPoint> bending, std::span<const char> pinned) {
  std::vector<std::vector<int>> cols(num_control);
  for (int c = 0; c < num_control; ++c) cols[c].push_back(c);
  for (auto set : {membrane, bending}) {
    for (const QuadPoint& qp : set) {
      for (int a = 0; a < qp.count; ++a) {
        const int ca = qp.stencil[a];
        if (pinned[ca]) continue;
        for (int b = 0; b < qp.count; ++b) {
          const int cb = qp.stencil[b];
          if (!pinned[cb]) cols[cb].push_back(ca);
        }
      }
    }
  }
  SparsityPlan plan;
  plan.skeleton = BlockSparseMatrix(num_control, cols);
  plan.membrane = build_map(plan.skeleton, membrane, pinned);
  plan.bending = build_map(plan.skeleton, bending, pinned);
  return plan;
}

void assemble_elasticity(const StencilMap& map, std::span<const double> local_hess,
                         BlockSparseMatrix& out, bool accumulate) {
  if (static_cast<int>(map.block_offset.size()) != out.num_blocks() + 1) {
    throw SolverError("assemble_elasticity: stencil map does not match the matrix pattern");
  }
  tbb::parallel_for(tbb::blocked_range<int>(0, out.num_blocks(), 1024), [&](const auto& r) {
    for (int k = r.begin(); k != r.end(); ++k) {
      Mat3 acc = Mat3::Zero();
      for (int e = map.block_offset[k]; e < map.block_offset[k + 1]; ++e) {
        const auto& ref = map.block_refs[e];
        const std::size_t off = map.hess_offset[ref.qp];
        const int cols = 3 * map.count[ref.qp];
        const double* base = local_hess.data() + off;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) acc(i, j) += base[(3 * ref.a + i) * cols + 3 * ref.b + j];
      }
      if (accumulate) {
        out.block(k) += acc;
      } else {
        out.block(k) = acc;
      }
    }
  });
}

void assemble_gradient(const StencilMap& map, std::span<const Vec3> local_grad,
                       std::span<Vec3> grad, bool accumulate) {
  const int n = static_cast<int>(map.point_offset.size()) - 1;
  tbb::parallel_for(tbb::blocked_range<int>(0, n, 1024), [&](const auto& r) {
    for (int c = r.begin(); c != r.end(); ++c) {
      Vec3 acc = Vec3::Zero();
      for (int e = map.point_offset[c]; e < map.point_offset[c + 1]; ++e) {
        acc += local_grad[kMaxStencil * map.point_refs[e].qp + map.point_refs[e].slot];
      }
      grad[c] = accumulate ? Vec3(grad[c] + acc) : acc;
    }
  });
}

void add_diagonal(BlockSparseMatrix& m, std::span<const double> mass, double dt,
                  std::span<const char> pinned) {
  const double inv = 1.0 / (dt * dt);
  for (int c = 0; c < m.dim(); ++c) {
    const int k = m.find(c, c);
    if (k < 0) throw SolverError("add_diagonal: missing diagonal block");
    if (pinned[c]) {
      m.block(k).setIdentity();
      continue;
    }
    m.block(k).diagonal().array() += mass[c] * inv;
  }
}

// ---------------------------------------------------------------------------
// Spatial blocks and contact conversion

int SpatialBlocks::cell_of(const Vec3& x) const {
  auto index = [](double v, double lo, double hi, int n) {
    if (!(hi > lo)) return 0;
    const int i = static_cast<int>((v - lo) / (hi - lo) * n);
    return std::clamp(i, 0, n - 1);
  };
  return index(x[axis0], lo[axis0], hi[axis0], n0) +
         n0 * index(x[axis1], lo[axis1], hi[axis1], n1);
}

SpatialBlocks make_spatial_blocks(std::span<const Vec3> x, int num_cells) {
  SpatialBlocks sb;
  if (x.empty()) return sb;
  sb.lo = sb.hi = x[0];
  for (const Vec3& p : x) {
    sb.lo = sb.lo.cwiseMin(p);
    sb.hi = sb.hi.cwiseMax(p);
  }
  const Vec3 ext = sb.hi - sb.lo;
  std::array<int, 3> axes{0, 1, 2};
  std::stable_sort(axes.begin(), axes.end(), [&](int a, int b) { return ext[a] > ext[b]; });
  sb.axis0 = axes[0];
  sb.axis1 = axes[1];
  num_cells = std::max(1, num_cells);
  const double e0 = std::max(ext[sb.axis0], 1e-12), e1 = std::max(ext[sb.axis1], 1e-12);
  // Divisor of num_cells closest to the aspect-matched split.
  const double ideal = std::sqrt(num_cells * e0 / e1);
  sb.n0 = 1;
  for (int d = 1; d <= num_cells; ++d) {
    if (num_cells % d == 0 && std::abs(std::log(d / ideal)) < std::abs(std::log(sb.n0 / ideal))) {
      sb.n0 = d;
    }
  }
  sb.n1 = num_cells / sb.n0;
  return sb;
}

namespace {

// Double-double arithmetic (about 106 significant bits). Sums carried this
// way round to the same double whatever the summation order, which keeps the
// parallel conversion and the sequential oracle bit-compatible.
struct DD {
  double hi = 0.0, lo = 0.0;
};

DD two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

DD two_prod(double a, double b) {
  const double p = a * b;
  return {p, std::fma(a, b, -p)};
}

DD operator+(DD a, DD b) {
  DD s = two_sum(a.hi, b.hi);
  const DD t = two_sum(a.lo, b.lo);
  s.lo += t.hi;
  s = two_sum(s.hi, s.lo);
  s.lo += t.lo;
  return two_sum(s.hi, s.lo);
}

DD operator*(DD a, DD b) {
  DD p = two_prod(a.hi, b.hi);
  p.lo += a.hi * b.lo + a.lo * b.hi;
  return two_sum(p.hi, p.lo);
}

double to_double(DD a) { return a.hi + a.lo; }

struct Mat3DD {
  std::array<DD, 9> e{};
  void add(const Eigen::Ref<const Eigen::Matrix<double, 3, 3>>& m) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) e[3 * r + c] = e[3 * r + c] + DD{m(r, c), 0.0};
  }
  void add_scaled(DD w, const Mat3DD& m) {
    for (int k = 0; k < 9; ++k) e[k] = e[k] + w * m.e[k];
  }
  void add(const Mat3DD& m) {
    for (int k = 0; k < 9; ++k) e[k] = e[k] + m.e[k];
  }
  Mat3 rounded() const {
    Mat3 m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(r, c) = to_double(e[3 * r + c]);
    return m;
  }
};
using Mat3L = Mat3DD;

/// Open-addressing map from packed (row, col) keys to 3x3 blocks, iterated
/// in insertion order.
class BlockMap {
 public:
  explicit BlockMap(std::size_t expected = 16) {
    std::size_t cap = 16;
    while (cap < 2 * expected) cap *= 2;
    slots_.assign(cap, -1);
  }

  Mat3L& at(std::uint64_t key) { return vals_[index(key)]; }

  /// Insertion index of `key`, inserting a zero block if absent.
  std::size_t index(std::uint64_t key) {
    std::size_t mask = slots_.size() - 1;
    std::size_t h = hash(key) & mask;
    while (slots_[h] >= 0) {
      if (keys_[slots_[h]] == key) return slots_[h];
      h = (h + 1) & mask;
    }
    slots_[h] = static_cast<int>(keys_.size());
    keys_.push_back(key);
    vals_.push_back(Mat3L{});
    if (2 * keys_.size() > slots_.size()) rehash();
    return keys_.size() - 1;
  }

  Mat3L& value(std::size_t i) { return vals_[i]; }

  std::size_t size() const { return keys_.size(); }
  std::uint64_t key(std::size_t i) const { return keys_[i]; }
  const Mat3L& value(std::size_t i) const { return vals_[i]; }

 private:
  static std::size_t hash(std::uint64_t k) {
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdULL;
    k ^= k >> 33;
    return static_cast<std::size_t>(k);
  }
  void rehash() {
    slots_.assign(slots_.size() * 2, -1);
    const std::size_t mask = slots_.size() - 1;
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      std::size_t h = hash(keys_[i]) & mask;
      while (slots_[h] >= 0) h = (h + 1) & mask;
      slots_[h] = static_cast<int>(i);
    }
  }

  std::vector<int> slots_;
  std::vector<std::uint64_t> keys_;
  std::vector<Mat3L> vals_;
};

std::uint64_t pack(int row, int col) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(col)) << 32) |
         static_cast<std::uint32_t>(row);
}
int key_row(std::uint64_t k) { return static_cast<int>(k & 0xffffffffu); }
int key_col(std::uint64_t k) { return static_cast<int>(k >> 32); }

int designated_vertex(const ContactPair& p) {
  return *std::min_element(p.v.begin(), p.v.begin() + p.count);
}

}  // namespace

BlockSparseMatrix convert_contact_hessian(std::span<const ContactPair> pairs,
                                          const ContactMesh& mesh, std::span<const Vec3> x,
                                          int num_control, std::span<const char> pinned,
                                          int num_cells, ContactAssemblyStats* stats) {
  const SpatialBlocks sb = make_spatial_blocks(x, num_cells);
  const int nc = sb.num_cells();

  // Stage 1: bucket pairs by the cell of their designated vertex and
  // accumulate vertex-pair blocks per cell.
  std::vector<std::vector<int>> bucket(nc);
  for (int p = 0; p < static_cast<int>(pairs.size()); ++p) {
    bucket[sb.cell_of(x[designated_vertex(pairs[p])])].push_back(p);
  }
  std::vector<BlockMap> vertex_maps(nc);
  std::vector<BlockMap> control_maps(nc);
  tbb::parallel_for(0, nc, [&](int c) {
    BlockMap vm(bucket[c].size() * 16);
    for (int p : bucket[c]) {
      const ContactPair& pair = pairs[p];
      for (int i = 0; i < pair.count; ++i) {
        for (int j = 0; j < pair.count; ++j) {
          vm.at(pack(pair.v[i], pair.v[j])).add(pair.hess.block<3, 3>(3 * i, 3 * j));
        }
      }
    }
    // Stage 2: distribute this cell's vertex-pair blocks to control blocks.
    BlockMap cm(vm.size() * 4);
    for (std::size_t e = 0; e < vm.size(); ++e) {
      const VertexWeights& wa = mesh.weights[key_row(vm.key(e))];
      const VertexWeights& wb = mesh.weights[key_col(vm.key(e))];
      const Mat3L& h = vm.value(e);
      for (int a = 0; a < wa.count; ++a) {
        if (pinned[wa.control[a]] || wa.coeff[a] == 0.0) continue;
        for (int b = 0; b < wb.count; ++b) {
          if (pinned[wb.control[b]] || wb.coeff[b] == 0.0) continue;
          cm.at(pack(wa.control[a], wb.control[b])).add_scaled(two_prod(wa.coeff[a], wb.coeff[b]), h);
        }
      }
    }
    vertex_maps[c] = std::move(vm);
    control_maps[c] = std::move(cm);
  });

  // Merge cells in index order, then emit sorted CSC.
  BlockMap merged;
  std::vector<int> owner;
  std::vector<char> shared;
  int cross = 0, vertex_blocks = 0;
  for (int c = 0; c < nc; ++c) {
    vertex_blocks += static_cast<int>(vertex_maps[c].size());
    const BlockMap& cm = control_maps[c];
    for (std::size_t e = 0; e < cm.size(); ++e) {
      const std::size_t i = merged.index(cm.key(e));
      if (i == owner.size()) {
        owner.push_back(c);
        shared.push_back(0);
      } else if (owner[i] != c && !shared[i]) {
        shared[i] = 1;
        ++cross;
      }
      merged.value(i).add(cm.value(e));
    }
  }

  std::vector<std::size_t> order(merged.size());
  std::iota(order.begin(), order.end(), 0);
  // Keys pack the column in the high bits: column-major, then row.
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return merged.key(a) < merged.key(b); });
  std::vector<std::vector<int>> cols(num_control);
  for (std::size_t i : order) cols[key_col(merged.key(i))].push_back(key_row(merged.key(i)));
  BlockSparseMatrix out(num_control, cols);
  for (std::size_t i = 0; i < merged.size(); ++i) {
    const int k = out.find(key_row(merged.key(i)), key_col(merged.key(i)));
    out.block(k) = merged.value(i).rounded();
  }
  if (stats) {
    stats->cells = nc;
    stats->vertex_blocks = vertex_blocks;
    stats->control_blocks = static_cast<int>(merged.size());
    stats->cross_cell_merges = cross;
  }
  return out;
}

void contact_gradient(std::span<const ContactPair> pairs, const ContactMesh& mesh,
                      std::span<Vec3> grad) {
  for (const ContactPair& p : pairs) {
    for (int i = 0; i < p.count; ++i) {
      const VertexWeights& w = mesh.weights[p.v[i]];
      for (int e = 0; e < w.count; ++e) grad[w.control[e]] += w.coeff[e] * p.grad.segment<3>(3 * i);
    }
  }
}

Eigen::SparseMatrix<double> contact_hessian_triplets(std::span<const ContactPair> pairs,
                                                     const ContactMesh& mesh, int num_control,
                                                     std::span<const char> pinned) {
  // Sequential per-entry accumulation of every weighted scalar term.
  std::unordered_map<std::uint64_t, DD> acc;
  const auto n = static_cast<std::uint64_t>(3 * num_control);
  for (const ContactPair& p : pairs) {
    for (int i = 0; i < p.count; ++i) {
      const VertexWeights& wi = mesh.weights[p.v[i]];
      for (int j = 0; j < p.count; ++j) {
        const VertexWeights& wj = mesh.weights[p.v[j]];
        for (int a = 0; a < wi.count; ++a) {
          for (int b = 0; b < wj.count; ++b) {
            if (pinned[wi.control[a]] || pinned[wj.control[b]]) continue;
            const DD w = two_prod(wi.coeff[a], wj.coeff[b]);
            for (int r = 0; r < 3; ++r) {
              for (int c = 0; c < 3; ++c) {
                DD& e = acc[(3 * wi.control[a] + r) * n + 3 * wj.control[b] + c];
                e = e + w * DD{p.hess(3 * i + r, 3 * j + c), 0.0};
              }
            }
          }
        }
      }
    }
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(acc.size());
  for (const auto& [k, v] : acc) {
    trip.emplace_back(static_cast<int>(k / n), static_cast<int>(k % n), to_double(v));
  }
  Eigen::SparseMatrix<double> m(3 * num_control, 3 * num_control);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

Eigen::SparseMatrix<double> elasticity_triplets(std::span<const QuadPoint> qps,
                                                std::span<const double> local_hess,
                                                const StencilMap& map, int num_control,
                                                std::span<const char> pinned) {
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t q = 0; q < qps.size(); ++q) {
    const QuadPoint& qp = qps[q];
    const int n = 3 * qp.count;
    const double* h = local_hess.data() + map.hess_offset[q];
    for (int a = 0; a < qp.count; ++a) {
      for (int b = 0; b < qp.count; ++b) {
        const int ca = qp.stencil[a], cb = qp.stencil[b];
        if (pinned[ca] || pinned[cb]) continue;
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c)
            trip.emplace_back(3 * ca + r, 3 * cb + c, h[(3 * a + r) * n + 3 * b + c]);
      }
    }
  }
  Eigen::SparseMatrix<double> m(3 * num_control, 3 * num_control);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

}  // namespace bscloth
