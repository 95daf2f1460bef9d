#pragma once

#include "bscloth/geometry.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>

namespace testutil {

using namespace bscloth;

/// Product of 1D Cox-de Boor values, evaluated independently of active_basis.
inline double basis_2d(const SplineSheet& s, int k, double u, double v) {
  const int i = k % s.nu(), j = k / s.nu();
  return eval_basis_1d(s.knots_u, i, u) * eval_basis_1d(s.knots_v, j, v);
}

/// Parametric coordinates of material point x by Newton iteration.
inline Vec2 invert_material(const SplineSheet& s, const Vec2& x, Vec2 guess) {
  for (int it = 0; it < 50; ++it) {
    const Vec2 r = eval_material(s, guess.x(), guess.y()) - x;
    if (r.norm() < 1e-15) break;
    guess -= material_jacobian(s, guess.x(), guess.y()).j.inverse() * r;
  }
  return guess;
}

/// Control values interpolating f at the Greville points of the parametric
/// domain; exact when f is a quadratic polynomial of (u, v).
inline std::vector<double> fit_parametric(const SplineSheet& s,
                                          const std::function<double(double, double)>& f) {
  const int n = s.num_control();
  Eigen::MatrixXd a(n, n);
  Eigen::VectorXd rhs(n);
  for (int r = 0; r < n; ++r) {
    const double u = greville(s.knots_u, r % s.nu()), v = greville(s.knots_v, r / s.nu());
    rhs[r] = f(u, v);
    for (int c = 0; c < n; ++c) a(r, c) = basis_2d(s, c, u, v);
  }
  const Eigen::VectorXd x = a.fullPivLu().solve(rhs);
  return {x.data(), x.data() + n};
}

/// Material grid of an lx x ly rectangle bent by a smooth, injective warp.
inline SplineSheet curved_sheet(int nu, int nv, double lx, double ly, double amp) {
  SplineSheet s = SplineSheet::rectangle(nu, nv, lx, ly);
  for (auto& x : s.material_cp) {
    const Vec2 p = x;
    x = p + amp * Vec2(std::sin(2.1 * p.y() + 0.3), std::cos(1.7 * p.x()) * p.x());
  }
  for (int k = 0; k < s.num_control(); ++k)
    s.world_cp[k] = Vec3(s.material_cp[k].x(), s.material_cp[k].y(), 0.0);
  return s;
}

inline void randomize(std::vector<Vec3>& v, std::mt19937& rng, double scale) {
  std::normal_distribution<double> n01;
  for (auto& x : v) x += scale * Vec3(n01(rng), n01(rng), n01(rng));
}

}  // namespace testutil
