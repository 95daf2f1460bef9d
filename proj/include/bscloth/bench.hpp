#pragma once

#include <string>
#include <vector>

namespace bscloth {

/// Analytic centre deflection of the simply supported square plate,
/// 0.048744 q a^4 (1 - nu^2) / (E h^3), for the built-in plate scene.
double plate_reference_deflection();

struct PlateResult {
  double deflection = 0.0;  // max |dz| over the embedded mesh, m
  double wall_ms = 0.0;
};
PlateResult run_plate(int resolution);

struct WrinkleResult {
  double amplitude = 0.0;   // max |z| over the embedded mesh at equilibrium, m
  double step_tol = 0.0;    // Newton update tolerance of the relaxation, m
  int relax_steps = 0;
  double wall_ms = 0.0;
};
WrinkleResult run_wrinkling(int resolution);

struct MomentumResult {
  double drift = 0.0;       // max_t |P(t) - P(0)| / sum_s |P_s(0)|
  double reference = 0.0;   // sum_s |P_s(0)|, kg m/s
  int max_pairs = 0;
  int frames = 0;
  double wall_ms = 0.0;
};
MomentumResult run_momentum(int resolution, int frames = 100);

struct ParityResult {
  double mean_iters_reduced = 0.0;
  double mean_iters_full = 0.0;
  double iter_ratio = 0.0;          // max / min of the two means
  double equilibrium_diff = 0.0;    // max-norm control difference / sheet size
  double wall_ms = 0.0;
};
ParityResult run_hanging_parity(int resolution, int steps = 50);

struct HourglassResult {
  int near_zero_1x1 = 0;      // eigenvalues below 1e-8 lambda_max
  int near_zero_reduced = 0;
  int near_zero_full = 0;
  int near_zero_1x1_all_spans = 0;  // one point per span, boundary included
  int dofs = 0;
};
HourglassResult run_hourglass(int resolution = 6);

struct BenchRow {
  std::string benchmark;
  int resolution = 0;
  std::string quantity;
  double measured = 0.0;
  double target = 0.0;     // NaN when there is no reference value
  double rel_error = 0.0;  // NaN when there is no reference value
  double wall_ms = 0.0;
};

std::vector<std::string> benchmark_names();
/// Throws ConfigError on an unknown name.
std::vector<BenchRow> run_benchmark(const std::string& name, const std::vector<int>& resolutions);
std::vector<int> default_resolutions(const std::string& name);
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace bscloth
