#include "bscloth/solver.hpp"

#include "bscloth/log.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace bscloth {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Eigen::VectorXd flatten(std::span<const Vec3> v) {
  Eigen::VectorXd out(3 * v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.segment<3>(3 * i) = v[i];
  return out;
}

std::vector<Vec3> unflatten(const Eigen::VectorXd& v) {
  std::vector<Vec3> out(v.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v.segment<3>(3 * i);
  return out;
}

std::vector<Vec3> axpy(std::span<const Vec3> x, double a, std::span<const Vec3> dx) {
  std::vector<Vec3> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + a * dx[i];
  return out;
}

double relative_residual(const Eigen::SparseMatrix<double>& h, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& rhs) {
  const double nb = rhs.norm();
  if (nb == 0.0) return (h * x).norm();
  return (h * x - rhs).norm() / nb;
}

}  // namespace

void SolverParams::validate() const {
  if (!(dt > 0.0)) throw ConfigError("solver.dt must be positive");
  if (!(tol > 0.0)) throw ConfigError("solver.tol must be positive");
  if (!(ls_shrink > 0.0 && ls_shrink < 1.0)) throw ConfigError("solver.ls_shrink must lie in (0, 1)");
  if (max_newton < 1) throw ConfigError("solver.max_newton must be at least 1");
  if (neumann_max_terms < 1) throw ConfigError("solver.neumann_max_terms must be at least 1");
}

// ---------------------------------------------------------------------------
// Direct solver

bool CholeskySolver::same_pattern(const Eigen::SparseMatrix<double>& h) const {
  if (static_cast<int>(outer_.size()) != h.outerSize() + 1) return false;
  if (static_cast<Eigen::Index>(inner_.size()) != h.nonZeros()) return false;
  return std::equal(outer_.begin(), outer_.end(), h.outerIndexPtr()) &&
         std::equal(inner_.begin(), inner_.end(), h.innerIndexPtr());
}

void CholeskySolver::factorize(const Eigen::SparseMatrix<double>& h) {
  if (!h.isCompressed()) throw SolverError("factorize: matrix must be compressed");
  if (!same_pattern(h)) {
    llt_->analyzePattern(h);
    outer_.assign(h.outerIndexPtr(), h.outerIndexPtr() + h.outerSize() + 1);
    inner_.assign(h.innerIndexPtr(), h.innerIndexPtr() + h.nonZeros());
    ++analyses_;
  }
  llt_->factorize(h);
  if (llt_->info() == Eigen::Success) return;
  logger()->warn("Cholesky breakdown; retrying with scaled diagonal");
  Eigen::SparseMatrix<double> reg = h;
  for (int k = 0; k < reg.outerSize(); ++k) reg.coeffRef(k, k) *= 1.0 + 1e-8;
  llt_->factorize(reg);
  if (llt_->info() != Eigen::Success) throw SolverError("Cholesky factorization failed");
}

Eigen::VectorXd CholeskySolver::solve(const Eigen::VectorXd& b) const { return llt_->solve(b); }

Eigen::VectorXd direct_solve(CholeskySolver& chol, const Eigen::SparseMatrix<double>& h,
                             const Eigen::VectorXd& g) {
  chol.factorize(h);
  const Eigen::VectorXd rhs = -g;
  Eigen::VectorXd x = chol.solve(rhs);
  // One refinement step recovers digits lost to conditioning.
  if (relative_residual(h, x, rhs) > 1e-10) x += chol.solve(rhs - h * x);
  return x;
}

// ---------------------------------------------------------------------------
// Partial factorization

TriggerEstimate estimate_trigger(const Eigen::SparseMatrix<double>& d,
                                 const Eigen::SparseMatrix<double>& b, double theta) {
  auto bounds = [](const Eigen::SparseMatrix<double>& m, Eigen::VectorXd& diag,
                   Eigen::VectorXd& radius) {
    diag.setZero(m.rows());
    radius.setZero(m.rows());
    // Symmetric storage: column sums equal row sums.
    for (int c = 0; c < m.outerSize(); ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(m, c); it; ++it) {
        if (it.row() == c) diag[c] += it.value();
        else radius[c] += std::abs(it.value());
      }
    }
  };
  Eigen::VectorXd dd, dr, bd, br;
  bounds(d, dd, dr);
  bounds(b, bd, br);
  TriggerEstimate e;
  e.lambda_max_b = b.rows() > 0 ? (bd + br).maxCoeff() : 0.0;
  e.lambda_min_d = d.rows() > 0 ? (dd - dr).minCoeff() : 0.0;
  if (e.lambda_min_d > 0.0) {
    e.bound = std::max(0.0, e.lambda_max_b) / e.lambda_min_d;
    e.trigger = e.bound < theta;
  } else {
    e.bound = std::numeric_limits<double>::infinity();
  }
  return e;
}

NeumannResult neumann_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& solve_d,
                            const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply_b,
                            const Eigen::VectorXd& rhs, double tol, int max_terms) {
  NeumannResult r;
  const double nb = rhs.norm();
  r.x = solve_d(rhs);
  Eigen::VectorXd bx = apply_b(r.x);
  r.terms = 1;
  // D x_0 = rhs, so the residual of x_0 is -B x_0.
  r.residual = nb > 0.0 ? bx.norm() / nb : 0.0;
  if (r.residual < tol) {
    r.accepted = true;
    return r;
  }
  while (r.terms < max_terms) {
    // D next = rhs - B x, so the residual of next is B x - B next.
    const Eigen::VectorXd next = solve_d(rhs - bx);
    const Eigen::VectorXd bnext = apply_b(next);
    r.x = next;
    r.residual = nb > 0.0 ? (bx - bnext).norm() / nb : 0.0;
    bx = bnext;
    ++r.terms;
    if (r.residual < tol) {
      r.accepted = true;
      return r;
    }
  }
  return r;
}

void split_diagonal(const BlockSparseMatrix& h, BlockSparseMatrix& diag, BlockSparseMatrix& off) {
  const int n = h.dim();
  std::vector<std::vector<int>> dcols(n), ocols(n);
  for (int c = 0; c < n; ++c) {
    for (int k = h.outer()[c]; k < h.outer()[c + 1]; ++k) {
      (h.inner()[k] == c ? dcols : ocols)[c].push_back(h.inner()[k]);
    }
  }
  diag = BlockSparseMatrix(n, dcols);
  off = BlockSparseMatrix(n, ocols);
  for (int c = 0; c < n; ++c) {
    for (int k = h.outer()[c]; k < h.outer()[c + 1]; ++k) {
      const int r = h.inner()[k];
      if (r == c) diag.block(diag.find(r, c)) = h.block(k);
      else off.block(off.find(r, c)) = h.block(k);
    }
  }
}

// ---------------------------------------------------------------------------
// Newton

StepReport NewtonSolver::solve(const ClothSystem& sys, std::vector<Vec3>& x,
                               std::span<const Vec3> xhat_in, const SolverParams& params) {
  params.validate();
  // Own copy: callers may pass x itself as the prediction.
  const std::vector<Vec3> xhat_store(xhat_in.begin(), xhat_in.end());
  const std::span<const Vec3> xhat(xhat_store);
  StepReport rep;
  const double dt = params.dt;
  double energy = incremental_potential(sys, x, xhat, dt);
  if (!std::isfinite(energy)) throw SolverError("incremental potential is not finite at the start point");
  rep.energies.push_back(energy);

  Derivatives der;
  for (int it = 0; it < params.max_newton; ++it) {
    auto t0 = Clock::now();
    evaluate_derivatives(sys, x, xhat, dt, der);
    rep.max_pairs = std::max(rep.max_pairs, static_cast<int>(der.pairs.size()));
    const Eigen::VectorXd g = flatten(der.grad);
    const bool has_contact = der.contact.num_blocks() > 0;
    rep.t_assembly_ms += ms_since(t0);

    // Linear solve.
    Eigen::VectorXd dx;
    bool used_partial = false;
    Eigen::SparseMatrix<double> merged;
    auto merged_matrix = [&]() -> const Eigen::SparseMatrix<double>& {
      if (merged.rows() == 0) {
        merged = der.elastic.to_eigen();
        if (has_contact) merged += der.contact.to_eigen();
        merged.makeCompressed();
      }
      return merged;
    };
    if (params.partial_factorization && has_contact) {
      t0 = Clock::now();
      BlockSparseMatrix cdiag, coff;
      split_diagonal(der.contact, cdiag, coff);
      BlockSparseMatrix dmat = der.elastic;
      for (int c = 0; c < cdiag.dim(); ++c) {
        const int k = cdiag.find(c, c);
        if (k >= 0) dmat.block(dmat.find(c, c)) += cdiag.block(k);
      }
      const Eigen::SparseMatrix<double> d = dmat.to_eigen();
      const Eigen::SparseMatrix<double> b = coff.to_eigen();
      const TriggerEstimate est = estimate_trigger(d, b, params.neumann_theta);
      rep.t_assembly_ms += ms_since(t0);
      if (est.trigger) {
        ++rep.pf_triggers;
        t0 = Clock::now();
        partial_.factorize(d);
        rep.t_factor_ms += ms_since(t0);
        t0 = Clock::now();
        const NeumannResult nr = neumann_solve(
            [&](const Eigen::VectorXd& v) { return partial_.solve(v); },
            [&](const Eigen::VectorXd& v) { return Eigen::VectorXd(b * v); }, -g,
            params.neumann_tol, params.neumann_max_terms);
        rep.t_solve_ms += ms_since(t0);
        if (nr.accepted) {
          ++rep.pf_accepted;
          used_partial = true;
          dx = nr.x;
          rep.max_neumann_residual =
              std::max(rep.max_neumann_residual, relative_residual(merged_matrix(), dx, -g));
        }
      }
    }
    if (!used_partial) {
      const Eigen::SparseMatrix<double>& h = merged_matrix();
      t0 = Clock::now();
      full_.factorize(h);
      rep.t_factor_ms += ms_since(t0);
      t0 = Clock::now();
      const Eigen::VectorXd rhs = -g;
      dx = full_.solve(rhs);
      if (relative_residual(h, dx, rhs) > 1e-10) dx += full_.solve(rhs - h * dx);
      rep.t_solve_ms += ms_since(t0);
      rep.max_direct_residual = std::max(rep.max_direct_residual, relative_residual(h, dx, rhs));
    }

    rep.residual = dx.lpNorm<Eigen::Infinity>() / dt;
    if (rep.residual < params.tol) return rep;
    const std::vector<Vec3> step = unflatten(dx);

    // Feasible step bound.
    double alpha = 1.0;
    if (sys.contact.enabled) {
      t0 = Clock::now();
      const auto xm = sys.mesh.positions(x);
      const auto dm = sys.mesh.positions(step);
      const double t = ccd_max_step(sys.mesh, xm, dm, sys.contact.colliders, sys.contact.self_contact);
      alpha = t >= 1.0 ? 1.0 : 0.9 * t;
      rep.t_ccd_ms += ms_since(t0);
    }

    // Backtracking.
    t0 = Clock::now();
    std::vector<Vec3> trial;
    double e_trial = 0.0;
    while (true) {
      trial = axpy(x, alpha, step);
      e_trial = incremental_potential(sys, trial, xhat, dt);
      if (e_trial <= energy) break;
      alpha *= params.ls_shrink;
      if (alpha < 1e-10) {
        std::ostringstream msg;
        msg << "line search stagnated at Newton iteration " << it << " (IP " << energy
            << ", |dC|/dt " << rep.residual << ", pairs " << der.pairs.size() << ")";
        throw SolverError(msg.str());
      }
    }
    rep.t_ls_ms += ms_since(t0);

    if (used_partial && params.verify_partial) {
      const Eigen::VectorXd ref = direct_solve(full_, merged_matrix(), g);
      const auto ref_trial = axpy(x, alpha, unflatten(ref));
      const double e_ref = incremental_potential(sys, ref_trial, xhat, dt);
      // Scaled by the larger of the two IP magnitudes around the step, since
      // the IP itself can sit arbitrarily close to zero.
      const double scale = std::max({std::abs(e_ref), std::abs(energy), 1e-300});
      const double gap = std::abs(e_trial - e_ref) / scale;
      rep.max_partial_ip_gap = std::max(rep.max_partial_ip_gap, gap);
    }

    x = std::move(trial);
    energy = e_trial;
    rep.energies.push_back(energy);
    rep.iters = it + 1;
  }
  logger()->warn("Newton reached the iteration cap ({}) with |dC|/dt = {}", params.max_newton,
                 rep.residual);
  return rep;
}

}  // namespace bscloth
