#pragma once

#include "bscloth/solver.hpp"
#include "bscloth/system.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace bscloth {

/// Piecewise-constant velocity over [t0, t1); zero velocity elsewhere.
struct MotionSegment {
  double t0 = 0.0;
  double t1 = 0.0;
  Vec3 velocity = Vec3::Zero();
};

struct MotionScript {
  std::vector<MotionSegment> segments;  // ordered, non-overlapping
  Vec3 angular_velocity = Vec3::Zero();  // spheres only, bookkeeping

  /// Exact displacement accumulated over [0, t].
  Vec3 displacement(double t) const;
  void validate() const;
};

struct SheetMaterial {
  double density = 472.6;      // kg/m^3
  double thickness = 3.18e-4;  // m
  double e_stretch = 2e6;      // Pa
  double e_shear = 1e4;        // Pa
  double e_bend = 8e3;         // Pa
  double poisson = 0.243;
};

struct SheetConfig {
  int nu = 16, nv = 16;          // control points
  double lx = 1.0, ly = 1.0;     // material rectangle, m
  Mat3 rotation = Mat3::Identity();  // material (X1, X2, normal) to world
  Vec3 translation = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec2 stretch{1.0, 1.0};        // initial world scaling of X1, X2
  double perturbation = 0.0;     // normal offset amplitude, m
  int perturbation_u = 1, perturbation_v = 1;  // half-waves along X1, X2
  SheetMaterial material;
  std::string membrane = "reduced";  // reduced | full2x2 | off
  bool bending = true;
  int mesh_u = 0, mesh_v = 0;    // embedded-mesh cells, 0 = automatic
};

struct PinConfig {
  int sheet = 0;
  std::string select = "indices";  // indices | all | boundary | left | right | bottom | top | corners | top_corners
  int depth = 1;
  std::vector<int> indices;
  MotionScript motion;
};

struct ColliderConfig {
  Collider collider;
  MotionScript motion;
};

struct SceneConfig {
  std::string name = "scene";
  std::vector<SheetConfig> sheets;
  std::vector<PinConfig> pins;
  std::vector<ColliderConfig> colliders;
  ContactSetup contact;  // colliders are taken from `colliders`
  Vec3 gravity{0.0, 0.0, -9.81};
  SolverParams solver;
  int frames = 100;
  bool quasi_static = false;  // discard velocity after each step
  std::string output_dir = "out";
  int output_every = 1;

  void validate() const;
};

nlohmann::json to_json(const SceneConfig& cfg);
SceneConfig scene_from_json(const nlohmann::json& j);

/// Set a dot-path (e.g. "sheets.0.nu") to a value parsed as JSON, or as a
/// string when it is not valid JSON.
void apply_override(nlohmann::json& j, const std::string& assignment);

SceneConfig load_scene(const std::string& path, const std::vector<std::string>& overrides = {});

/// Control indices selected by a pin entry (sheet-local).
std::vector<int> select_controls(const SheetConfig& sheet, const PinConfig& pin);

/// Rest and initial world grids of a configured sheet.
SplineSheet make_sheet(const SheetConfig& cfg);

std::vector<std::string> builtin_scene_names();
/// Built-in benchmark scenes; `resolution` <= 0 keeps the scene's default.
SceneConfig builtin_scene(const std::string& name, int resolution = 0);

}  // namespace bscloth
