#pragma once

#include <string>
#include <vector>

namespace bscloth {

/// One verified property: `value` is compared against `threshold` (pass when
/// value < threshold, or value >= threshold when `at_least` is set).
struct CheckResult {
  std::string suite;
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool at_least = false;
  bool pass = false;
  std::string detail;
};

CheckResult make_check(const std::string& suite, const std::string& name, double value,
                       double threshold, const std::string& detail = {}, bool at_least = false);

/// Partition of unity, non-negativity and derivative consistency of the basis.
std::vector<CheckResult> check_basis();

/// Incremental-potential gradient vs central differences of the potential,
/// and unprojected elastic Hessian vs differences of the gradient, over
/// `configs` random configurations per resolution.
std::vector<CheckResult> check_gradients(const std::vector<int>& resolutions = {5, 7, 9},
                                         int configs = 10);

/// Parallel elasticity and contact assembly vs the sequential triplet
/// oracles for each worker count, on a two-layer scene with many pairs.
std::vector<CheckResult> check_assembly(const std::vector<int>& workers = {1, 4, 8});

/// Direct-solve residual, Neumann hand example, and partial-factorization
/// residual on a low-contact scene.
std::vector<CheckResult> check_solver();

std::vector<std::string> check_suite_names();
/// Throws ConfigError on an unknown suite.
std::vector<CheckResult> run_check_suite(const std::string& name);

/// "PASS suite/name value=... threshold=... detail" lines.
std::string format_check(const CheckResult& r);

}  // namespace bscloth
