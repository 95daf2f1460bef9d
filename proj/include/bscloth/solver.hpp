#pragma once

#include "bscloth/sparse.hpp"
#include "bscloth/system.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace bscloth {

struct SolverParams {
  double dt = 0.01;             // s
  double tol = 1e-2;            // on max |dC| / dt, m/s
  int max_newton = 100;
  double ls_shrink = 0.5;
  bool partial_factorization = true;
  double neumann_theta = 0.5;
  double neumann_tol = 1e-6;
  int neumann_max_terms = 16;
  bool verify_partial = false;  // also solve directly and compare (diagnostics)

  void validate() const;
};

struct StepReport {
  int iters = 0;
  double t_assembly_ms = 0.0;
  double t_factor_ms = 0.0;
  double t_solve_ms = 0.0;
  double t_ccd_ms = 0.0;
  double t_ls_ms = 0.0;
  int pf_triggers = 0;   // Gershgorin test passed
  int pf_accepted = 0;   // Neumann series reached its tolerance
  double residual = 0.0;  // final max |dC| / dt
  int max_pairs = 0;
  std::vector<double> energies;        // IP before the first and after each accepted step
  double max_direct_residual = 0.0;    // |H dC + g| / |g| of direct solves
  double max_neumann_residual = 0.0;   // same for accepted Neumann solves, vs the merged H
  double max_partial_ip_gap = 0.0;     // with verify_partial: relative IP gap vs direct
};

/// Sparse Cholesky with the symbolic analysis cached per sparsity pattern.
class CholeskySolver {
 public:
  /// Factorize; on breakdown retry once with the diagonal scaled by 1 + 1e-8.
  void factorize(const Eigen::SparseMatrix<double>& h);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  int analyses() const { return analyses_; }

 private:
  bool same_pattern(const Eigen::SparseMatrix<double>& h) const;
  using LLT = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>>;
  std::unique_ptr<LLT> llt_ = std::make_unique<LLT>();
  std::vector<int> outer_, inner_;
  int analyses_ = 0;
};

/// Solve H dx = -g with H = sum of the given block matrices.
Eigen::VectorXd direct_solve(CholeskySolver& chol, const Eigen::SparseMatrix<double>& h,
                             const Eigen::VectorXd& g);

struct TriggerEstimate {
  double lambda_max_b = 0.0;  // upper bound on the spectrum of B
  double lambda_min_d = 0.0;  // lower bound on the spectrum of D
  double bound = 0.0;
  bool trigger = false;
};

/// Gershgorin bounds on scalar rows: lambda_max(B) <= max_i (B_ii + R_i),
/// lambda_min(D) >= min_i (D_ii - R_i).
TriggerEstimate estimate_trigger(const Eigen::SparseMatrix<double>& d,
                                 const Eigen::SparseMatrix<double>& b, double theta);

struct NeumannResult {
  Eigen::VectorXd x;
  int terms = 0;
  double residual = 0.0;  // relative, against D + B
  bool accepted = false;
};

/// Partial sums x_{k+1} = D^{-1}(rhs - B x_k), x_0 = D^{-1} rhs, stopped when
/// |rhs - (D + B) x| / |rhs| < tol or after max_terms terms.
NeumannResult neumann_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& solve_d,
                            const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply_b,
                            const Eigen::VectorXd& rhs, double tol, int max_terms);

/// Split a contact Hessian into its diagonal blocks and off-diagonal blocks.
void split_diagonal(const BlockSparseMatrix& h, BlockSparseMatrix& diag, BlockSparseMatrix& off);

/// Projected Newton on the incremental potential. `x` holds the start point
/// (pinned entries already at their targets) and receives the result.
class NewtonSolver {
 public:
  StepReport solve(const ClothSystem& sys, std::vector<Vec3>& x, std::span<const Vec3> xhat,
                   const SolverParams& params);

 private:
  CholeskySolver full_;
  CholeskySolver partial_;
};

}  // namespace bscloth
