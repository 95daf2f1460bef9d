#include "bscloth/elasticity.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace bscloth {

namespace {

constexpr double kMinStretch = 1e-10;

using Mat6 = Eigen::Matrix<double, 6, 6>;

void project_psd6(Mat6& m) {
  Eigen::SelfAdjointEigenSolver<Mat6> eig(m);
  const auto& vals = eig.eigenvalues();
  if (vals.minCoeff() >= 0.0) return;
  const auto clamped = vals.cwiseMax(0.0);
  m = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

MaterialParams MaterialParams::from_moduli(double e_stretch, double e_shear, double e_bend,
                                           double thickness, double poisson) {
  MaterialParams p;
  p.mu_st1 = 0.5 * e_stretch * thickness;
  p.mu_st2 = p.mu_st1;
  p.mu_sh = 0.5 * e_shear * thickness;
  p.mu_bd = e_bend * thickness * thickness * thickness / (12.0 * (1.0 - poisson * poisson));
  p.poisson = poisson;
  return p;
}

MembraneInvariants membrane_invariants(const Mat32& f) {
  return {f.col(0).squaredNorm(), f.col(1).squaredNorm(), f.col(0).dot(f.col(1))};
}

double membrane_density(const Mat32& f, const MaterialParams& params) {
  const MembraneInvariants inv = membrane_invariants(f);
  const double s1 = std::sqrt(inv.i5_1) - 1.0;
  const double s2 = std::sqrt(inv.i5_2) - 1.0;
  return params.mu_st1 * s1 * s1 + params.mu_st2 * s2 * s2 + params.mu_sh * inv.i6 * inv.i6;
}

double bending_density(const Vec3& laplacian, const MaterialParams& params) {
  return 0.5 * params.mu_bd * laplacian.squaredNorm();
}

double membrane_eval(const QuadPoint& qp, std::span<const Vec3> world_cp,
                     const MaterialParams& params, Projection proj, Vec3* grad, double* hess,
                     bool* clamped) {
  const Mat32 f = deformation_gradient(qp, world_cp);
  const Vec3 f1 = f.col(0);
  const Vec3 f2 = f.col(1);
  double n1 = f1.norm();
  double n2 = f2.norm();
  const bool collapsed = n1 < kMinStretch || n2 < kMinStretch;
  if (clamped) *clamped = collapsed;
  n1 = std::max(n1, kMinStretch);
  n2 = std::max(n2, kMinStretch);
  const double i6 = f1.dot(f2);
  const double w = qp.w;
  const double energy =
      w * (params.mu_st1 * (n1 - 1.0) * (n1 - 1.0) + params.mu_st2 * (n2 - 1.0) * (n2 - 1.0) +
           params.mu_sh * i6 * i6);

  if (grad) {
    const Vec3 p1 = 2.0 * params.mu_st1 * (n1 - 1.0) / n1 * f1 + 2.0 * params.mu_sh * i6 * f2;
    const Vec3 p2 = 2.0 * params.mu_st2 * (n2 - 1.0) / n2 * f2 + 2.0 * params.mu_sh * i6 * f1;
    for (int a = 0; a < qp.count; ++a) {
      grad[a] = w * (qp.grad[a].x() * p1 + qp.grad[a].y() * p2);
    }
  }
  if (!hess) return energy;

  const Mat3 id = Mat3::Identity();
  const Vec3 m1 = f1 / n1;
  const Vec3 m2 = f2 / n2;
  Mat6 hf;
  hf.block<3, 3>(0, 0) = 2.0 * params.mu_st1 * ((1.0 - 1.0 / n1) * id + m1 * m1.transpose() / n1) +
                         2.0 * params.mu_sh * f2 * f2.transpose();
  hf.block<3, 3>(3, 3) = 2.0 * params.mu_st2 * ((1.0 - 1.0 / n2) * id + m2 * m2.transpose() / n2) +
                         2.0 * params.mu_sh * f1 * f1.transpose();
  hf.block<3, 3>(0, 3) = 2.0 * params.mu_sh * (f2 * f1.transpose() + i6 * id);
  hf.block<3, 3>(3, 0) = hf.block<3, 3>(0, 3).transpose();
  if (proj == Projection::Psd) project_psd6(hf);

  const int n = 3 * qp.count;
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> h(hess, n, n);
  const Mat3 h11 = hf.block<3, 3>(0, 0), h12 = hf.block<3, 3>(0, 3);
  const Mat3 h21 = hf.block<3, 3>(3, 0), h22 = hf.block<3, 3>(3, 3);
  for (int a = 0; a < qp.count; ++a) {
    const double ga1 = qp.grad[a].x(), ga2 = qp.grad[a].y();
    for (int b = 0; b < qp.count; ++b) {
      const double gb1 = qp.grad[b].x(), gb2 = qp.grad[b].y();
      h.block<3, 3>(3 * a, 3 * b) =
          w * (ga1 * gb1 * h11 + ga1 * gb2 * h12 + ga2 * gb1 * h21 + ga2 * gb2 * h22);
    }
  }
  return energy;
}

double bending_eval(const QuadPoint& qp, std::span<const Vec3> world_cp,
                    const MaterialParams& params, Vec3* grad, double* hess) {
  const Vec3 lap = surface_laplacian(qp, world_cp);
  const double scale = qp.w * params.mu_bd;
  if (grad) {
    for (int a = 0; a < qp.count; ++a) grad[a] = scale * qp.lap[a] * lap;
  }
  if (hess) {
    const int n = 3 * qp.count;
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> h(hess, n, n);
    h.setZero();
    for (int a = 0; a < qp.count; ++a) {
      for (int b = 0; b < qp.count; ++b) {
        h.block<3, 3>(3 * a, 3 * b).diagonal().setConstant(scale * qp.lap[a] * qp.lap[b]);
      }
    }
  }
  return 0.5 * scale * lap.squaredNorm();
}

namespace {

LocalSystem make_local(const QuadPoint& qp) {
  LocalSystem ls;
  ls.stencil.assign(qp.stencil.begin(), qp.stencil.begin() + qp.count);
  ls.grad.resize(qp.count);
  ls.hess.resize(3 * qp.count, 3 * qp.count);
  return ls;
}

}  // namespace

LocalSystem membrane_local(const QuadPoint& qp, std::span<const Vec3> world_cp,
                           const MaterialParams& params, Projection proj) {
  LocalSystem ls = make_local(qp);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> h(3 * qp.count,
                                                                          3 * qp.count);
  ls.energy = membrane_eval(qp, world_cp, params, proj, ls.grad.data(), h.data(), &ls.clamped);
  ls.hess = h;
  return ls;
}

LocalSystem bending_local(const QuadPoint& qp, std::span<const Vec3> world_cp,
                          const MaterialParams& params) {
  LocalSystem ls = make_local(qp);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> h(3 * qp.count,
                                                                          3 * qp.count);
  ls.energy = bending_eval(qp, world_cp, params, ls.grad.data(), h.data());
  ls.hess = h;
  return ls;
}

void project_psd(Eigen::Ref<Eigen::MatrixXd> m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd& vals = eig.eigenvalues();
  if (vals.minCoeff() >= 0.0) return;
  m = eig.eigenvectors() * vals.cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace bscloth
