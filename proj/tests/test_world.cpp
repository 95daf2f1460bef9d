#include "bscloth/world.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace bscloth;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("bscloth_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

// No elasticity, no contact: pure inertia plus gravity.
SceneConfig free_fall() {
  SceneConfig c;
  SheetConfig s;
  s.nu = s.nv = 5;
  s.membrane = "off";
  s.bending = false;
  c.sheets = {s};
  c.contact.enabled = false;
  c.solver.tol = 1e-9;
  c.frames = 5;
  return c;
}

SceneConfig small_hanging(int n = 8) {
  SceneConfig c = builtin_scene("hanging", n);
  c.frames = 6;
  return c;
}

}  // namespace

TEST_CASE("motion scripts integrate piecewise-constant velocity exactly") {
  MotionScript m;
  m.segments = {{0.0, 0.1, Vec3(1, 0, 0)}, {0.2, 0.3, Vec3(0, 2, 0)}};
  CHECK((m.displacement(0.05) - Vec3(0.05, 0, 0)).norm() < 1e-15);
  CHECK((m.displacement(0.15) - Vec3(0.1, 0, 0)).norm() < 1e-15);
  CHECK((m.displacement(1.0) - Vec3(0.1, 0.2, 0)).norm() < 1e-15);
  MotionScript bad;
  bad.segments = {{0.0, 0.2, Vec3::Zero()}, {0.1, 0.3, Vec3::Zero()}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("scene json round trip and overrides") {
  for (const auto& name : builtin_scene_names()) {
    CAPTURE(name);
    const SceneConfig c = builtin_scene(name, 6);
    const auto j = to_json(c);
    CHECK(to_json(scene_from_json(j)) == j);
  }
  auto j = to_json(builtin_scene("hanging", 6));
  apply_override(j, "sheets.0.material.e_stretch=5e5");
  apply_override(j, "solver.dt=0.02");
  apply_override(j, "name=renamed");
  const SceneConfig c = scene_from_json(j);
  CHECK(c.sheets[0].material.e_stretch == 5e5);
  CHECK(c.solver.dt == 0.02);
  CHECK(c.name == "renamed");
  CHECK_THROWS_AS(apply_override(j, "sheets.7.nu=3"), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "novalue"), ConfigError);
}

TEST_CASE("scene validation rejects bad configurations") {
  SceneConfig c = builtin_scene("hanging", 6);
  c.sheets[0].nu = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = builtin_scene("hanging", 6);
  c.pins[0].indices = {1000};
  c.pins[0].select = "indices";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = builtin_scene("hanging", 6);
  c.sheets[0].membrane = "bogus";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(builtin_scene("nope"), ConfigError);
}

TEST_CASE("pin selectors") {
  SheetConfig s;
  s.nu = 5;
  s.nv = 4;
  auto count = [&](const std::string& sel, int depth = 1) {
    return select_controls(s, PinConfig{0, sel, depth, {}, {}}).size();
  };
  CHECK(count("all") == 20);
  CHECK(count("boundary") == 14);
  CHECK(count("left") == 4);
  CHECK(count("top", 2) == 10);
  CHECK(count("corners") == 4);
  const auto tc = select_controls(s, PinConfig{0, "top_corners", 1, {}, {}});
  CHECK(tc == std::vector<int>{15, 19});
}

TEST_CASE("free fall gains g dt per step") {
  World w(free_fall());
  const Vec3 g = w.config().gravity;
  const double dt = w.config().solver.dt;
  for (int k = 1; k <= 5; ++k) {
    w.step();
    for (const Vec3& v : w.velocities()) CHECK((v - k * dt * g).norm() < 1e-12);
  }
}

TEST_CASE("fully pinned sheet stays put") {
  SceneConfig c = builtin_scene("hanging", 6);
  c.pins = {PinConfig{0, "all", 1, {}, {}}};
  World w(c);
  const auto x0 = w.positions();
  for (int k = 0; k < 3; ++k) w.step();
  CHECK(w.positions() == x0);
  CHECK(w.kinetic_energy() == 0.0);
}

TEST_CASE("momentum of a rigidly translating sheet") {
  SceneConfig c = free_fall();
  c.gravity = Vec3::Zero();
  c.sheets[0].velocity = Vec3(0.3, -0.2, 0.1);
  World w(c);
  double total = 0.0;
  for (double m : w.system().mass) total += m;
  CHECK((w.momentum() - total * c.sheets[0].velocity).norm() < 1e-10);
  w.step();
  CHECK((w.momentum() - total * c.sheets[0].velocity).norm() < 1e-10);

  World rest(builtin_scene("hanging", 6));
  CHECK(rest.momentum().norm() == 0.0);
  CHECK(rest.kinetic_energy() == 0.0);
}

TEST_CASE("scripted pins track their motion to machine precision") {
  SceneConfig c = builtin_scene("shear", 6);
  World w(c);
  for (int k = 0; k < 4; ++k) {
    w.step();
    const auto targets = w.pin_targets(w.time());
    const auto& pinned = w.system().pinned;
    int j = 0;
    for (int i = 0; i < w.system().num_control; ++i)
      if (pinned[i]) CHECK((w.positions()[i] - targets[j++]).norm() == 0.0);
  }
  // right edge moved by 4 dt * 0.2 along y
  const auto sel = select_controls(c.sheets[0], c.pins[1]);
  const World fresh(c);
  const double dy = w.positions()[sel[0]].y() - fresh.positions()[sel[0]].y();
  CHECK(std::abs(dy - 4 * c.solver.dt * 0.2) < 1e-14);
}

TEST_CASE("restart from a snapshot is bit-identical") {
  SceneConfig c = small_hanging();
  World a(c);
  for (int k = 0; k < 3; ++k) a.step();
  const auto path = scratch("snap.bin");
  a.save(path.string());
  a.step();
  World b = World::load(path.string());
  CHECK(b.frame() == 3);
  b.step();
  CHECK(a.positions() == b.positions());
  CHECK(a.velocities() == b.velocities());
  std::ofstream(path) << "garbage";
  CHECK_THROWS_AS(World::load(path.string()), ConfigError);
}

TEST_CASE("solver errors carry the frame index") {
  SceneConfig c = builtin_scene("bounce", 6);
  c.sheets[0].translation.z() = -0.01;  // starts below the ground
  World w(c);
  try {
    w.step();
    FAIL("expected a solver error");
  } catch (const SolverError& e) {
    CHECK(std::string(e.what()).rfind("frame 1:", 0) == 0);
  }
}

TEST_CASE("run_scene outputs") {
  SUBCASE("zero frames writes the rest state and an empty metrics table") {
    const auto dir = scratch("zero");
    World w(small_hanging());
    run_scene(w, RunOptions{dir.string(), 0, false, true, 1});
    CHECK(std::filesystem::exists(dir / "frame_00000.obj"));
    CHECK(!std::filesystem::exists(dir / "frame_00001.obj"));
    CHECK(slurp(dir / "metrics.csv") == metrics_header() + "\n");
    CHECK(count_obj_vertices((dir / "frame_00000.obj").string()) == w.system().mesh.num_vertices);
    const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(report["status"] == "ok");
    CHECK(report["totals"]["frames"] == 0);
  }
  SUBCASE("deterministic reruns produce identical metrics") {
    const auto d1 = scratch("det1"), d2 = scratch("det2");
    World a(small_hanging()), b(small_hanging());
    run_scene(a, RunOptions{d1.string(), 4, true, true, 1});
    run_scene(b, RunOptions{d2.string(), 4, true, true, 1});
    CHECK(slurp(d1 / "metrics.csv") == slurp(d2 / "metrics.csv"));
    CHECK(slurp(d1 / "physics.csv") == slurp(d2 / "physics.csv"));
    CHECK(slurp(d1 / "frame_00004.obj") == slurp(d2 / "frame_00004.obj"));
    CHECK(count_obj_vertices((d1 / "frame_00004.obj").string()) == a.system().mesh.num_vertices);
  }
}

TEST_CASE("hanging cloth loses energy toward rest") {
  SceneConfig c = small_hanging(6);
  c.contact.enabled = false;
  c.solver.tol = 1e-6;
  c.solver.dt = 0.05;
  World w(c);
  for (int k = 0; k < 600 && !(k > 10 && w.kinetic_energy() < 1e-8); ++k) w.step();
  CHECK(w.kinetic_energy() < 1e-8);
}

TEST_CASE("relaxation reaches a stationary point of the potential") {
  World w(builtin_scene("wrinkling", 12));
  const std::vector<Vec3> x0 = w.positions();
  REQUIRE_NOTHROW(w.relax(1.0, 20, 1e-8));
  const auto& x = w.positions();
  // With xhat = x the inertia gradient vanishes.
  auto gmax = [&](std::span<const Vec3> y) {
    double m = 0.0;
    for (const Vec3& v : ip_gradient(w.system(), y, y, 1.0)) m = std::max(m, v.norm());
    return m;
  };
  CHECK(gmax(x) < 1e-6 * gmax(x0));
}
