#pragma once

#include "bscloth/geometry.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace bscloth {

/// Areal stiffnesses of the membrane and bending energies.
struct MaterialParams {
  double mu_st1 = 0.0;  // Pa*m
  double mu_st2 = 0.0;  // Pa*m
  double mu_sh = 0.0;   // Pa*m
  double mu_bd = 0.0;   // Pa*m^3
  double poisson = 0.0;

  /// mu_st = E_st h / 2, mu_sh = E_sh h / 2, mu_bd = E_bd h^3 / (12 (1 - nu^2)).
  static MaterialParams from_moduli(double e_stretch, double e_shear, double e_bend,
                                    double thickness, double poisson);
};

struct MembraneInvariants {
  double i5_1 = 0.0;  // e1^T F^T F e1
  double i5_2 = 0.0;  // e2^T F^T F e2
  double i6 = 0.0;    // e1^T F^T F e2
};

MembraneInvariants membrane_invariants(const Mat32& f);

/// mu_st1 (sqrt(I5_1) - 1)^2 + mu_st2 (sqrt(I5_2) - 1)^2 + mu_sh I6^2.
double membrane_density(const Mat32& f, const MaterialParams& params);

/// 0.5 mu_bd |laplacian|^2.
double bending_density(const Vec3& laplacian, const MaterialParams& params);

enum class Projection { Psd, None };

/// Energy, gradient and Hessian of one term with respect to the control
/// points in `stencil`. Hessian is row-major over (control, component).
struct LocalSystem {
  std::vector<int> stencil;
  std::vector<Vec3> grad;
  Eigen::MatrixXd hess;
  double energy = 0.0;
  bool clamped = false;  // a fully collapsed direction was regularized
};

/// Weighted membrane energy of one quadrature site. The Hessian is projected
/// in deformation-gradient space, which keeps it PSD after the linear map to
/// control points.
LocalSystem membrane_local(const QuadPoint& qp, std::span<const Vec3> world_cp,
                           const MaterialParams& params, Projection proj = Projection::Psd);

/// Weighted bending energy of one site. The Hessian lap_a lap_b w mu_bd I is
/// independent of the configuration.
LocalSystem bending_local(const QuadPoint& qp, std::span<const Vec3> world_cp,
                          const MaterialParams& params);

/// Allocation-free kernels used by the assembler. `hess` points to a
/// (3 count)^2 row-major buffer, `grad` to `count` vectors; either may be null.
double membrane_eval(const QuadPoint& qp, std::span<const Vec3> world_cp,
                     const MaterialParams& params, Projection proj, Vec3* grad, double* hess,
                     bool* clamped = nullptr);
double bending_eval(const QuadPoint& qp, std::span<const Vec3> world_cp,
                    const MaterialParams& params, Vec3* grad, double* hess);

/// Zero out negative eigenvalues of a symmetric matrix in place.
void project_psd(Eigen::Ref<Eigen::MatrixXd> m);

}  // namespace bscloth
