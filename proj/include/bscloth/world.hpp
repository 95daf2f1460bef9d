#pragma once

#include "bscloth/scene.hpp"
#include "bscloth/solver.hpp"
#include "bscloth/system.hpp"

#include <array>
#include <string>
#include <vector>

namespace bscloth {

struct Metrics {
  Vec3 momentum = Vec3::Zero();            // sum m_i V_i
  std::vector<Vec3> sheet_momentum;
  double kinetic = 0.0;
  EnergyTerms potential;                   // inertia term left at zero
  double min_distance = 0.0;               // infinity when nothing is near
};

/// A configured scene plus its evolving state.
class World {
 public:
  explicit World(SceneConfig cfg);

  const SceneConfig& config() const { return cfg_; }
  const ClothSystem& system() const { return sys_; }
  int frame() const { return frame_; }
  double time() const { return frame_ * cfg_.solver.dt; }
  const std::vector<Vec3>& positions() const { return x_; }
  const std::vector<Vec3>& velocities() const { return v_; }
  /// Positions of the pinned controls at the given time.
  std::vector<Vec3> pin_targets(double t) const;

  /// One implicit Euler step. Solver errors are rethrown with the frame index.
  StepReport step();
  /// Quasi-static relaxation: steps of length `dt` with velocity discarded,
  /// each solved until the Newton update is below `step_tol` metres; stops
  /// when a step needs no update or after `max_steps`. Returns steps taken.
  int relax(double dt, int max_steps, double step_tol = 1e-7);

  Metrics metrics() const;
  Vec3 momentum() const;
  double kinetic_energy() const;
  std::vector<Vec3> mesh_positions() const;
  /// Max |(p - p_rest) . dir| over embedded-mesh vertices.
  double max_deflection(const Vec3& dir) const;
  double min_contact_distance() const;

  void write_obj(const std::string& path) const;
  void save(const std::string& path) const;
  static World load(const std::string& path);

 private:
  void place_colliders(double t);

  SceneConfig cfg_;
  ClothSystem sys_;
  std::vector<Vec3> x_, v_;
  std::vector<Vec3> rest_mesh_;
  std::vector<int> pin_control_;   // global control index
  std::vector<Vec3> pin_base_;
  std::vector<int> pin_script_;    // index into cfg_.pins
  NewtonSolver newton_;
  int frame_ = 0;
};

/// Writes an OBJ with "v x y z" lines and 1-based "f a b c" lines.
void write_obj(const std::string& path, const std::vector<Vec3>& vertices,
               const std::vector<std::array<int, 3>>& triangles);
/// Vertex count of an OBJ file.
int count_obj_vertices(const std::string& path);

struct RunOptions {
  std::string out_dir;
  int frames = -1;               // < 0 keeps the scene's count
  bool deterministic = false;    // timing columns written as zero
  bool write_frames = true;
  int workers = 0;               // echoed in report.json
};

struct RunSummary {
  int frames = 0;
  long total_iters = 0;
  double wall_ms = 0.0;
  StepReport totals;
};

/// Runs the scene and writes frame_%05d.obj, metrics.csv, physics.csv and
/// report.json into `opts.out_dir`.
RunSummary run_scene(World& world, const RunOptions& opts);

std::string metrics_header();
std::string metrics_row(int frame, const StepReport& r, bool deterministic);

const char* version_string();

}  // namespace bscloth
