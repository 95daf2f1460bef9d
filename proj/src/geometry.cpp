#include "bscloth/geometry.hpp"

#include <Eigen/LU>

#include <cmath>
#include <sstream>

namespace bscloth {

namespace {

struct FullStencil {
  std::array<int, 9> index{};
  std::array<StencilBasis, 9> basis{};
};

FullStencil full_stencil(const SplineSheet& sheet, double u, double v) {
  const ActiveBasis bu = active_basis(sheet.knots_u, u);
  const ActiveBasis bv = active_basis(sheet.knots_v, v);
  FullStencil s;
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      const int k = x + 3 * y;
      const BasisDerivs& a = bu.b[x];
      const BasisDerivs& b = bv.b[y];
      s.index[k] = sheet.index(bu.first + x, bv.first + y);
      s.basis[k] = {a.value * b.value, a.d1 * b.value, a.value * b.d1,
                    a.d2 * b.value,    a.value * b.d2, a.d1 * b.d1};
    }
  }
  return s;
}

}  // namespace

MaterialJacobian material_jacobian(const SplineSheet& sheet, double u, double v) {
  const FullStencil s = full_stencil(sheet, u, v);
  MaterialJacobian m;
  m.j.setZero();
  m.j_u.setZero();
  m.j_v.setZero();
  for (int k = 0; k < 9; ++k) {
    const Vec2& x = sheet.material_cp[s.index[k]];
    const StencilBasis& b = s.basis[k];
    m.j.col(0) += b.nu * x;
    m.j.col(1) += b.nv * x;
    m.j_u.col(0) += b.nuu * x;
    m.j_u.col(1) += b.nuv * x;
    m.j_v.col(0) += b.nuv * x;
    m.j_v.col(1) += b.nvv * x;
  }
  return m;
}

std::vector<QuadPoint> precompute_quadpoints(const SplineSheet& sheet, const QuadRule& rule) {
  std::vector<QuadPoint> out;
  out.reserve(rule.points.size());
  for (std::size_t p = 0; p < rule.points.size(); ++p) {
    const QuadSite& site = rule.points[p];
    const MaterialJacobian mj = material_jacobian(sheet, site.u, site.v);
    const double det = mj.j.determinant();
    const double scale = mj.j.col(0).norm() * mj.j.col(1).norm();
    if (!(det > 1e-12 * scale) || !(scale > 0.0)) {
      std::ostringstream msg;
      msg << "degenerate material map at quadrature point " << p << " (u=" << site.u
          << ", v=" << site.v << "), det J = " << det;
      throw GeometryError(msg.str());
    }

    // K = J^{-1}; dK/dX_g = -K (dJ/dX_g) K with dJ/dX_g = J_u u_g + J_v v_g.
    const Mat2 k = mj.j.inverse();
    InverseMap im;
    im.u1 = k(0, 0);
    im.u2 = k(0, 1);
    im.v1 = k(1, 0);
    im.v2 = k(1, 1);
    const Mat2 dk1 = -k * (mj.j_u * im.u1 + mj.j_v * im.v1) * k;
    const Mat2 dk2 = -k * (mj.j_u * im.u2 + mj.j_v * im.v2) * k;
    im.u11 = dk1(0, 0);
    im.v11 = dk1(1, 0);
    im.u22 = dk2(0, 1);
    im.v22 = dk2(1, 1);
    im.u12 = dk2(0, 0);
    im.v12 = dk2(1, 0);

    const double a_uu = im.u1 * im.u1 + im.u2 * im.u2;
    const double a_vv = im.v1 * im.v1 + im.v2 * im.v2;
    const double a_uv = 2.0 * (im.u1 * im.v1 + im.u2 * im.v2);
    const double a_u = im.u11 + im.u22;
    const double a_v = im.v11 + im.v22;

    const FullStencil s = full_stencil(sheet, site.u, site.v);
    std::array<Vec2, 9> grad;
    std::array<double, 9> lap;
    double max_grad = 0.0, max_lap = 0.0;
    for (int e = 0; e < 9; ++e) {
      const StencilBasis& b = s.basis[e];
      grad[e] = Vec2(b.nu * im.u1 + b.nv * im.v1, b.nu * im.u2 + b.nv * im.v2);
      lap[e] = a_uu * b.nuu + a_vv * b.nvv + a_uv * b.nuv + a_u * b.nu + a_v * b.nv;
      max_grad = std::max(max_grad, grad[e].cwiseAbs().maxCoeff());
      max_lap = std::max(max_lap, std::abs(lap[e]));
    }

    QuadPoint qp;
    qp.u = site.u;
    qp.v = site.v;
    qp.w = site.weight * det;
    qp.inv_map = im;
    for (int e = 0; e < 9; ++e) {
      bool keep;
      if (rule.kind == RuleKind::Bending && max_lap > 0.0) {
        keep = std::abs(lap[e]) > 1e-12 * max_lap;
      } else {
        keep = s.basis[e].n > 0.0 || grad[e].cwiseAbs().maxCoeff() > 1e-12 * max_grad;
      }
      if (!keep) continue;
      const int c = qp.count++;
      qp.stencil[c] = s.index[e];
      qp.basis[c] = s.basis[e];
      qp.grad[c] = grad[e];
      qp.lap[c] = lap[e];
    }
    out.push_back(qp);
  }
  return out;
}

Mat32 deformation_gradient(const QuadPoint& qp, std::span<const Vec3> world_cp) {
  Mat32 f = Mat32::Zero();
  for (int e = 0; e < qp.count; ++e) {
    const Vec3& c = world_cp[qp.stencil[e]];
    f.col(0) += qp.grad[e].x() * c;
    f.col(1) += qp.grad[e].y() * c;
  }
  return f;
}

Vec3 surface_laplacian(const QuadPoint& qp, std::span<const Vec3> world_cp) {
  Vec3 l = Vec3::Zero();
  for (int e = 0; e < qp.count; ++e) l += qp.lap[e] * world_cp[qp.stencil[e]];
  return l;
}

MassMatrix build_mass(const SplineSheet& sheet, double density, double thickness) {
  const double areal = density * thickness;
  const auto qps = precompute_quadpoints(sheet, build_mass_rule(sheet));
  MassMatrix m;
  m.lumped.assign(sheet.num_control(), 0.0);
  // Row sum of the consistent matrix: sum_b N_a N_b = N_a by partition of unity.
  for (const QuadPoint& qp : qps) {
    for (int e = 0; e < qp.count; ++e) m.lumped[qp.stencil[e]] += areal * qp.basis[e].n * qp.w;
  }
  for (std::size_t a = 0; a < m.lumped.size(); ++a) {
    if (!(m.lumped[a] > 0.0)) {
      throw GeometryError("non-positive lumped mass at control point " + std::to_string(a));
    }
    m.consistent_total += m.lumped[a];
  }
  return m;
}

double consistent_mass_entry(const SplineSheet& sheet, double areal_density, int a, int b) {
  const auto qps = precompute_quadpoints(sheet, build_mass_rule(sheet));
  double sum = 0.0;
  for (const QuadPoint& qp : qps) {
    double na = 0.0, nb = 0.0;
    for (int e = 0; e < qp.count; ++e) {
      if (qp.stencil[e] == a) na = qp.basis[e].n;
      if (qp.stencil[e] == b) nb = qp.basis[e].n;
    }
    sum += areal_density * na * nb * qp.w;
  }
  return sum;
}

}  // namespace bscloth
