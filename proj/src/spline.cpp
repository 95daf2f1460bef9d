#include "bscloth/spline.hpp"

#include <cmath>
#include <string>

namespace bscloth {

KnotVector::KnotVector(int num_control) : num_control_(num_control) {
  if (num_control < kDegree + 1) {
    throw DomainError("knot vector needs at least " + std::to_string(kDegree + 1) +
                      " control points, got " + std::to_string(num_control));
  }
  const int spans = num_control - kDegree;
  values_.reserve(num_control + kDegree + 1);
  for (int k = 0; k < kDegree; ++k) values_.push_back(0.0);
  for (int k = 0; k <= spans; ++k) values_.push_back(static_cast<double>(k));
  for (int k = 0; k < kDegree; ++k) values_.push_back(static_cast<double>(spans));
}

int KnotVector::find_span(double xi) const {
  if (!(xi >= front() && xi <= back())) {
    throw DomainError("parameter " + std::to_string(xi) + " outside knot range [" +
                      std::to_string(front()) + ", " + std::to_string(back()) + "]");
  }
  const int last = num_spans() - 1;
  const int s = static_cast<int>(std::floor(xi));
  return s > last ? last : s;
}

namespace {

// Zeroth-order indicator with the closed right end.
double indicator(const std::vector<double>& t, int i, double xi) {
  if (t[i] == t[i + 1]) return 0.0;
  if (xi >= t[i] && xi < t[i + 1]) return 1.0;
  if (xi == t.back() && t[i + 1] == t.back()) return 1.0;
  return 0.0;
}

double basis_rec(const std::vector<double>& t, int i, int p, double xi) {
  if (p == 0) return indicator(t, i, xi);
  double out = 0.0;
  const double left = t[i + p] - t[i];
  const double right = t[i + p + 1] - t[i + 1];
  if (left != 0.0) out += (xi - t[i]) / left * basis_rec(t, i, p - 1, xi);
  if (right != 0.0) out += (t[i + p + 1] - xi) / right * basis_rec(t, i + 1, p - 1, xi);
  return out;
}

// k-th derivative of N_{i,p}.
double deriv_rec(const std::vector<double>& t, int i, int p, int k, double xi) {
  if (k == 0) return basis_rec(t, i, p, xi);
  if (p == 0) return 0.0;
  double out = 0.0;
  const double left = t[i + p] - t[i];
  const double right = t[i + p + 1] - t[i + 1];
  if (left != 0.0) out += p / left * deriv_rec(t, i, p - 1, k - 1, xi);
  if (right != 0.0) out -= p / right * deriv_rec(t, i + 1, p - 1, k - 1, xi);
  return out;
}

void check_args(const KnotVector& knots, int i, double xi) {
  if (i < 0 || i >= knots.num_control()) {
    throw DomainError("basis index " + std::to_string(i) + " out of range [0, " +
                      std::to_string(knots.num_control()) + ")");
  }
  if (!(xi >= knots.front() && xi <= knots.back())) {
    throw DomainError("parameter " + std::to_string(xi) + " outside knot range");
  }
}

}  // namespace

double eval_basis_1d(const KnotVector& knots, int i, double xi) {
  check_args(knots, i, xi);
  return basis_rec(knots.values(), i, kDegree, xi);
}

BasisDerivs eval_basis_derivs_1d(const KnotVector& knots, int i, double xi) {
  check_args(knots, i, xi);
  const auto& t = knots.values();
  return {basis_rec(t, i, kDegree, xi), deriv_rec(t, i, kDegree, 1, xi),
          deriv_rec(t, i, kDegree, 2, xi)};
}

ActiveBasis active_basis(const KnotVector& knots, double xi) {
  ActiveBasis out;
  out.first = knots.find_span(xi);
  const auto& t = knots.values();
  for (int a = 0; a < 3; ++a) {
    const int i = out.first + a;
    out.b[a] = {basis_rec(t, i, kDegree, xi), deriv_rec(t, i, kDegree, 1, xi),
                deriv_rec(t, i, kDegree, 2, xi)};
  }
  return out;
}

double greville(const KnotVector& knots, int i) {
  const auto& t = knots.values();
  return 0.5 * (t[i + 1] + t[i + 2]);
}

SplineSheet SplineSheet::rectangle(int nu, int nv, double lx, double ly) {
  SplineSheet s;
  s.knots_u = KnotVector(nu);
  s.knots_v = KnotVector(nv);
  const double hu = lx / s.knots_u.num_spans();
  const double hv = ly / s.knots_v.num_spans();
  s.material_cp.resize(nu * nv);
  s.world_cp.resize(nu * nv);
  s.world_vel.assign(nu * nv, Vec3::Zero());
  for (int j = 0; j < nv; ++j) {
    for (int i = 0; i < nu; ++i) {
      const Vec2 x(greville(s.knots_u, i) * hu, greville(s.knots_v, j) * hv);
      s.material_cp[s.index(i, j)] = x;
      s.world_cp[s.index(i, j)] = Vec3(x.x(), x.y(), 0.0);
    }
  }
  return s;
}

std::vector<Vec3> EmbeddedMesh::positions(std::span<const Vec3> control) const {
  std::vector<Vec3> out(weights.size());
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const VertexWeights& w = weights[k];
    Vec3 x = Vec3::Zero();
    for (int e = 0; e < w.count; ++e) x += w.coeff[e] * control[w.control[e]];
    out[k] = x;
  }
  return out;
}

EmbeddedMesh sample_embedded_mesh(const SplineSheet& sheet, int ru, int rv) {
  if (ru < 1 || rv < 1) {
    throw DomainError("embedded mesh resolution must be positive");
  }
  EmbeddedMesh mesh;
  const double su = sheet.knots_u.back();
  const double sv = sheet.knots_v.back();
  const int stride = ru + 1;
  for (int b = 0; b <= rv; ++b) {
    for (int a = 0; a <= ru; ++a) {
      // Exact endpoints avoid round-off pushing the last row past the domain.
      const double u = a == ru ? su : su * a / ru;
      const double v = b == rv ? sv : sv * b / rv;
      mesh.uv.emplace_back(u, v);
      const ActiveBasis bu = active_basis(sheet.knots_u, u);
      const ActiveBasis bv = active_basis(sheet.knots_v, v);
      VertexWeights w;
      for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 3; ++x) {
          const double c = bu.b[x].value * bv.b[y].value;
          if (c > 0.0) {
            w.control[w.count] = sheet.index(bu.first + x, bv.first + y);
            w.coeff[w.count] = c;
            ++w.count;
          }
        }
      }
      mesh.weights.push_back(w);
    }
  }
  for (int b = 0; b < rv; ++b) {
    for (int a = 0; a < ru; ++a) {
      const int v00 = a + stride * b;
      const int v10 = v00 + 1;
      const int v01 = v00 + stride;
      const int v11 = v01 + 1;
      if ((a + b) % 2 == 0) {
        mesh.triangles.push_back({v00, v10, v11});
        mesh.triangles.push_back({v00, v11, v01});
      } else {
        mesh.triangles.push_back({v00, v10, v01});
        mesh.triangles.push_back({v10, v11, v01});
      }
    }
  }
  return mesh;
}

}  // namespace bscloth
