#include "bscloth/scene.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace bscloth {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Motion scripts

Vec3 MotionScript::displacement(double t) const {
  Vec3 d = Vec3::Zero();
  for (const MotionSegment& s : segments) {
    const double a = std::max(0.0, s.t0), b = std::min(t, s.t1);
    if (b > a) d += (b - a) * s.velocity;
  }
  return d;
}

void MotionScript::validate() const {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (!(segments[i].t1 >= segments[i].t0)) throw ConfigError("motion segment ends before it starts");
    if (i > 0 && segments[i].t0 < segments[i - 1].t1)
      throw ConfigError("motion segments must be ordered and non-overlapping");
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_of(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + " must be a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

json motion_json(const MotionScript& m) {
  json segs = json::array();
  for (const auto& s : m.segments)
    segs.push_back({{"t0", s.t0}, {"t1", s.t1}, {"velocity", vec_json(s.velocity)}});
  return segs;
}

MotionScript motion_of(const json& j) {
  MotionScript m;
  if (j.is_null()) return m;
  if (j.is_string()) {
    if (j.get<std::string>() != "fixed") throw ConfigError("motion must be 'fixed' or a segment list");
    return m;
  }
  for (const auto& s : j) {
    MotionSegment seg;
    seg.t0 = get_or(s, "t0", 0.0);
    seg.t1 = get_or(s, "t1", 0.0);
    seg.velocity = vec3_of(s.at("velocity"), "velocity");
    m.segments.push_back(seg);
  }
  m.validate();
  return m;
}

const std::set<std::string> kSelectors = {"indices", "all",    "boundary", "left",       "right",
                                          "bottom",  "top",    "corners",  "top_corners"};
const std::set<std::string> kMembrane = {"reduced", "full2x2", "off"};

}  // namespace

json to_json(const SceneConfig& c) {
  json j;
  j["name"] = c.name;
  j["gravity"] = vec_json(c.gravity);
  j["frames"] = c.frames;
  j["quasi_static"] = c.quasi_static;
  j["output"] = {{"dir", c.output_dir}, {"every", c.output_every}};
  const SolverParams& s = c.solver;
  j["solver"] = {{"dt", s.dt},
                 {"tol", s.tol},
                 {"max_newton", s.max_newton},
                 {"ls_shrink", s.ls_shrink},
                 {"partial_factorization", s.partial_factorization},
                 {"neumann_theta", s.neumann_theta},
                 {"neumann_tol", s.neumann_tol},
                 {"neumann_max_terms", s.neumann_max_terms}};
  j["contact"] = {{"enabled", c.contact.enabled},
                  {"self_contact", c.contact.self_contact},
                  {"dhat", c.contact.params.dhat},
                  {"kappa", c.contact.params.kappa}};
  j["sheets"] = json::array();
  for (const SheetConfig& sh : c.sheets) {
    json r = json::array();
    for (int a = 0; a < 3; ++a) r.push_back(json::array({sh.rotation(a, 0), sh.rotation(a, 1), sh.rotation(a, 2)}));
    j["sheets"].push_back({{"resolution", {sh.nu, sh.nv}},
                           {"size", {sh.lx, sh.ly}},
                           {"rotation", r},
                           {"translation", vec_json(sh.translation)},
                           {"velocity", vec_json(sh.velocity)},
                           {"stretch", {sh.stretch.x(), sh.stretch.y()}},
                           {"perturbation",
                            {{"amplitude", sh.perturbation},
                             {"modes", {sh.perturbation_u, sh.perturbation_v}}}},
                           {"material",
                            {{"density", sh.material.density},
                             {"thickness", sh.material.thickness},
                             {"e_stretch", sh.material.e_stretch},
                             {"e_shear", sh.material.e_shear},
                             {"e_bend", sh.material.e_bend},
                             {"poisson", sh.material.poisson}}},
                           {"membrane", sh.membrane},
                           {"bending", sh.bending},
                           {"mesh_resolution", {sh.mesh_u, sh.mesh_v}}});
  }
  j["pins"] = json::array();
  for (const PinConfig& p : c.pins) {
    json e = {{"sheet", p.sheet}, {"select", p.select}, {"depth", p.depth}, {"motion", motion_json(p.motion)}};
    if (p.select == "indices") e["indices"] = p.indices;
    j["pins"].push_back(e);
  }
  j["colliders"] = json::array();
  for (const ColliderConfig& cc : c.colliders) {
    const Collider& col = cc.collider;
    json e;
    if (col.type == Collider::Type::Plane) {
      e = {{"type", "plane"}, {"point", vec_json(col.point)}, {"normal", vec_json(col.normal)}};
    } else {
      e = {{"type", "sphere"},
           {"center", vec_json(col.point)},
           {"radius", col.radius},
           {"angular_velocity", vec_json(cc.motion.angular_velocity)}};
    }
    e["motion"] = motion_json(cc.motion);
    j["colliders"].push_back(e);
  }
  return j;
}

SceneConfig scene_from_json(const json& j) {
  SceneConfig c;
  try {
    c.name = get_or<std::string>(j, "name", c.name);
    if (j.contains("gravity")) c.gravity = vec3_of(j["gravity"], "gravity");
    c.frames = get_or(j, "frames", c.frames);
    c.quasi_static = get_or(j, "quasi_static", c.quasi_static);
    if (j.contains("output")) {
      c.output_dir = get_or<std::string>(j["output"], "dir", c.output_dir);
      c.output_every = get_or(j["output"], "every", c.output_every);
    }
    if (j.contains("solver")) {
      const json& s = j["solver"];
      SolverParams& p = c.solver;
      p.dt = get_or(s, "dt", p.dt);
      p.tol = get_or(s, "tol", p.tol);
      p.max_newton = get_or(s, "max_newton", p.max_newton);
      p.ls_shrink = get_or(s, "ls_shrink", p.ls_shrink);
      p.partial_factorization = get_or(s, "partial_factorization", p.partial_factorization);
      p.neumann_theta = get_or(s, "neumann_theta", p.neumann_theta);
      p.neumann_tol = get_or(s, "neumann_tol", p.neumann_tol);
      p.neumann_max_terms = get_or(s, "neumann_max_terms", p.neumann_max_terms);
    }
    if (j.contains("contact")) {
      const json& s = j["contact"];
      c.contact.enabled = get_or(s, "enabled", c.contact.enabled);
      c.contact.self_contact = get_or(s, "self_contact", c.contact.self_contact);
      c.contact.params.dhat = get_or(s, "dhat", c.contact.params.dhat);
      c.contact.params.kappa = get_or(s, "kappa", c.contact.params.kappa);
    }
    for (const json& s : j.value("sheets", json::array())) {
      SheetConfig sh;
      if (s.contains("resolution")) {
        sh.nu = s["resolution"].at(0).get<int>();
        sh.nv = s["resolution"].at(1).get<int>();
      }
      if (s.contains("size")) {
        sh.lx = s["size"].at(0).get<double>();
        sh.ly = s["size"].at(1).get<double>();
      }
      if (s.contains("rotation")) {
        const json& r = s["rotation"];
        if (!r.is_array() || r.size() != 3) throw ConfigError("rotation must be a 3x3 matrix");
        for (int a = 0; a < 3; ++a) sh.rotation.row(a) = vec3_of(r[a], "rotation row").transpose();
      }
      if (s.contains("translation")) sh.translation = vec3_of(s["translation"], "translation");
      if (s.contains("velocity")) sh.velocity = vec3_of(s["velocity"], "velocity");
      if (s.contains("stretch")) sh.stretch = Vec2(s["stretch"].at(0).get<double>(), s["stretch"].at(1).get<double>());
      if (s.contains("perturbation")) {
        const json& p = s["perturbation"];
        sh.perturbation = get_or(p, "amplitude", 0.0);
        if (p.contains("modes")) {
          sh.perturbation_u = p["modes"].at(0).get<int>();
          sh.perturbation_v = p["modes"].at(1).get<int>();
        }
      }
      if (s.contains("material")) {
        const json& m = s["material"];
        SheetMaterial& mat = sh.material;
        mat.density = get_or(m, "density", mat.density);
        mat.thickness = get_or(m, "thickness", mat.thickness);
        mat.e_stretch = get_or(m, "e_stretch", mat.e_stretch);
        mat.e_shear = get_or(m, "e_shear", mat.e_shear);
        mat.e_bend = get_or(m, "e_bend", mat.e_bend);
        mat.poisson = get_or(m, "poisson", mat.poisson);
      }
      sh.membrane = get_or<std::string>(s, "membrane", sh.membrane);
      sh.bending = get_or(s, "bending", sh.bending);
      if (s.contains("mesh_resolution")) {
        sh.mesh_u = s["mesh_resolution"].at(0).get<int>();
        sh.mesh_v = s["mesh_resolution"].at(1).get<int>();
      }
      c.sheets.push_back(sh);
    }
    for (const json& p : j.value("pins", json::array())) {
      PinConfig pin;
      pin.sheet = get_or(p, "sheet", 0);
      pin.select = get_or<std::string>(p, "select", p.contains("indices") ? "indices" : "all");
      pin.depth = get_or(p, "depth", 1);
      if (p.contains("indices")) pin.indices = p["indices"].get<std::vector<int>>();
      if (p.contains("motion")) pin.motion = motion_of(p["motion"]);
      c.pins.push_back(pin);
    }
    for (const json& e : j.value("colliders", json::array())) {
      ColliderConfig cc;
      const std::string type = get_or<std::string>(e, "type", "plane");
      if (type == "plane") {
        cc.collider.type = Collider::Type::Plane;
        if (e.contains("point")) cc.collider.point = vec3_of(e["point"], "point");
        if (e.contains("normal")) cc.collider.normal = vec3_of(e["normal"], "normal").normalized();
      } else if (type == "sphere") {
        cc.collider.type = Collider::Type::Sphere;
        cc.collider.point = vec3_of(e.at("center"), "center");
        cc.collider.radius = get_or(e, "radius", 0.0);
        if (e.contains("angular_velocity"))
          cc.motion.angular_velocity = vec3_of(e["angular_velocity"], "angular_velocity");
      } else {
        throw ConfigError("unknown collider type '" + type + "'");
      }
      if (e.contains("motion")) {
        const Vec3 w = cc.motion.angular_velocity;
        cc.motion = motion_of(e["motion"]);
        cc.motion.angular_velocity = w;
      }
      cc.collider.angular_velocity = cc.motion.angular_velocity;
      c.colliders.push_back(cc);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed scene: ") + e.what());
  }
  c.validate();
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("empty component in override path '" + path + "'");
    const bool is_index = std::all_of(key.begin(), key.end(), [](char ch) { return std::isdigit(ch); });
    json* next = nullptr;
    if (node->is_array()) {
      if (!is_index) throw ConfigError("override path '" + path + "' indexes an array with '" + key + "'");
      const std::size_t idx = std::stoul(key);
      if (idx >= node->size()) throw ConfigError("override index out of range in '" + path + "'");
      next = &(*node)[idx];
    } else {
      if (!node->is_object() && !node->is_null())
        throw ConfigError("override path '" + path + "' descends into a scalar");
      next = &(*node)[key];
    }
    if (dot == std::string::npos) {
      *next = value;
      return;
    }
    node = next;
    start = dot + 1;
  }
}

SceneConfig load_scene(const std::string& path, const std::vector<std::string>& overrides) {
  json j;
  const auto names = builtin_scene_names();
  std::ifstream in(path);
  if (in) {
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("cannot parse " + path + ": " + e.what());
    }
  } else if (std::find(names.begin(), names.end(), path) != names.end()) {
    j = to_json(builtin_scene(path));
  } else {
    throw ConfigError("cannot open scene '" + path + "'");
  }
  for (const auto& o : overrides) apply_override(j, o);
  return scene_from_json(j);
}

// ---------------------------------------------------------------------------
// Validation and construction

void SceneConfig::validate() const {
  if (sheets.empty()) throw ConfigError("scene has no sheets");
  if (frames < 0) throw ConfigError("frames must be non-negative");
  if (output_every < 1) throw ConfigError("output.every must be at least 1");
  solver.validate();
  if (contact.enabled && !(contact.params.dhat > 0.0 && contact.params.kappa > 0.0))
    throw ConfigError("contact dhat and kappa must be positive");
  for (const SheetConfig& s : sheets) {
    if (s.nu < 3 || s.nv < 3) throw ConfigError("sheet resolution must be at least 3x3");
    if (s.membrane == "reduced" && (s.nu < 4 || s.nv < 4))
      throw ConfigError("reduced integration needs at least 4x4 control points");
    if (!kMembrane.count(s.membrane)) throw ConfigError("unknown membrane scheme '" + s.membrane + "'");
    if (!(s.lx > 0.0 && s.ly > 0.0)) throw ConfigError("sheet size must be positive");
    const SheetMaterial& m = s.material;
    if (!(m.density > 0.0 && m.thickness > 0.0)) throw ConfigError("density and thickness must be positive");
    if (m.e_stretch < 0.0 || m.e_shear < 0.0 || m.e_bend < 0.0) throw ConfigError("moduli must be non-negative");
    if (!(m.poisson > -1.0 && m.poisson < 1.0)) throw ConfigError("poisson ratio must lie in (-1, 1)");
    if (std::abs(s.rotation.determinant() - 1.0) > 1e-6 ||
        (s.rotation.transpose() * s.rotation - Mat3::Identity()).norm() > 1e-6)
      throw ConfigError("sheet rotation must be a proper rotation matrix");
    if (s.mesh_u < 0 || s.mesh_v < 0) throw ConfigError("mesh resolution must be non-negative");
  }
  for (const PinConfig& p : pins) {
    if (p.sheet < 0 || p.sheet >= static_cast<int>(sheets.size())) throw ConfigError("pin refers to a missing sheet");
    if (!kSelectors.count(p.select)) throw ConfigError("unknown pin selector '" + p.select + "'");
    if (p.depth < 1) throw ConfigError("pin depth must be at least 1");
    const SheetConfig& s = sheets[p.sheet];
    for (int i : p.indices)
      if (i < 0 || i >= s.nu * s.nv) throw ConfigError("pin index out of range");
    p.motion.validate();
  }
  for (const ColliderConfig& c : colliders) {
    if (c.collider.type == Collider::Type::Sphere && !(c.collider.radius > 0.0))
      throw ConfigError("sphere radius must be positive");
    if (c.collider.type == Collider::Type::Plane && !(c.collider.normal.norm() > 0.0))
      throw ConfigError("plane normal must be non-zero");
    c.motion.validate();
  }
}

std::vector<int> select_controls(const SheetConfig& s, const PinConfig& p) {
  std::vector<int> out;
  const int d = p.depth;
  auto idx = [&](int i, int j) { return i + s.nu * j; };
  if (p.select == "indices") return p.indices;
  for (int j = 0; j < s.nv; ++j) {
    for (int i = 0; i < s.nu; ++i) {
      bool take = false;
      if (p.select == "all") take = true;
      else if (p.select == "boundary") take = i < d || j < d || i >= s.nu - d || j >= s.nv - d;
      else if (p.select == "left") take = i < d;
      else if (p.select == "right") take = i >= s.nu - d;
      else if (p.select == "bottom") take = j < d;
      else if (p.select == "top") take = j >= s.nv - d;
      else if (p.select == "corners") take = (i < d || i >= s.nu - d) && (j < d || j >= s.nv - d);
      else if (p.select == "top_corners") take = (i < d || i >= s.nu - d) && j >= s.nv - d;
      if (take) out.push_back(idx(i, j));
    }
  }
  return out;
}

SplineSheet make_sheet(const SheetConfig& c) {
  SplineSheet s = SplineSheet::rectangle(c.nu, c.nv, c.lx, c.ly);
  const Vec3 normal = c.rotation.col(2);
  for (int k = 0; k < s.num_control(); ++k) {
    const Vec2 m = s.material_cp[k];
    const Vec3 local(c.stretch.x() * m.x(), c.stretch.y() * m.y(), 0.0);
    Vec3 p = c.translation + c.rotation * local;
    if (c.perturbation != 0.0) {
      p += c.perturbation * std::sin(std::numbers::pi * c.perturbation_u * m.x() / c.lx) *
           std::sin(std::numbers::pi * c.perturbation_v * m.y() / c.ly) * normal;
    }
    s.world_cp[k] = p;
    s.world_vel[k] = c.velocity;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Built-in scenes

std::vector<std::string> builtin_scene_names() {
  return {"plate", "hanging", "drape", "shear", "momentum", "wrinkling", "sphere", "bounce"};
}

namespace {

// Material X1 -> world x, X2 -> world z, normal -> -y.
Mat3 upright() {
  Mat3 r;
  r << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  return r;
}

// Material X1 -> world y, X2 -> world z, normal -> x.
Mat3 facing_x() {
  Mat3 r;
  r << 0, 0, 1, 1, 0, 0, 0, 1, 0;
  return r;
}

SheetMaterial cotton() { return SheetMaterial{}; }

}  // namespace

SceneConfig builtin_scene(const std::string& name, int resolution) {
  auto res = [&](int fallback) { return resolution > 0 ? resolution : fallback; };
  SceneConfig c;
  c.name = name;
  if (name == "plate") {
    // Simply supported square plate under a uniform load of 9.81 Pa.
    SheetConfig s;
    s.nu = s.nv = res(32);
    s.lx = s.ly = 1.0;
    s.material = {100.0, 0.01, 0.0, 0.0, 2e6, 0.03};  // areal density 1 kg/m^2
    s.membrane = "off";
    s.mesh_u = s.mesh_v = 2 * (s.nu - 2);
    c.sheets = {s};
    c.pins = {PinConfig{0, "boundary", 1, {}, {}}};
    c.contact.enabled = false;
    c.quasi_static = true;
    c.solver.dt = 1e3;
    c.solver.tol = 1e-10;
    c.frames = 2;
  } else if (name == "hanging") {
    SheetConfig s;
    s.nu = s.nv = res(32);
    s.rotation = upright();
    s.material = cotton();
    c.sheets = {s};
    c.pins = {PinConfig{0, "top_corners", 1, {}, {}}};
    c.contact.enabled = true;
    c.frames = 200;
  } else if (name == "drape") {
    SheetConfig s;
    s.nu = s.nv = res(32);
    s.material = cotton();
    c.sheets = {s};
    c.pins = {PinConfig{0, "left", 1, {}, {}}, PinConfig{0, "bottom", 1, {}, {}}};
    c.frames = 200;
  } else if (name == "shear") {
    SheetConfig s;
    s.nu = s.nv = res(32);
    s.material = cotton();
    s.material.e_shear = 2e6;
    s.material.e_bend = 4e3;
    c.sheets = {s};
    PinConfig moving{0, "right", 1, {}, {}};
    moving.motion.segments = {{0.0, 0.5, Vec3(0.0, 0.2, 0.0)}};
    c.pins = {PinConfig{0, "left", 1, {}, {}}, moving};
    c.frames = 100;
  } else if (name == "momentum") {
    // Two plates on orthogonal planes closing at 0.5 m/s each.
    const int n = res(16);
    SheetConfig a;
    a.nu = a.nv = n;
    a.rotation = facing_x();
    a.translation = Vec3(0.0, -0.5, -0.5);
    a.velocity = Vec3(0.5, 0.0, 0.0);
    a.material = {472.6, 1e-3, 2e6, 1e4, 2e6, 0.243};
    SheetConfig b = a;
    b.rotation = Mat3::Identity();
    b.translation = Vec3(0.1, -0.5, 0.0);
    b.velocity = Vec3(-0.5, 0.0, 0.0);
    c.sheets = {a, b};
    c.gravity = Vec3::Zero();
    c.frames = 100;
  } else if (name == "wrinkling") {
    // 1 m x 2.5 m sheet, short edges clamped and pulled to 110% length.
    SheetConfig s;
    s.nu = s.nv = res(80);
    s.lx = 1.0;
    s.ly = 2.5;
    s.stretch = Vec2(1.0, 1.1);
    s.perturbation = 0.02;
    s.material = {1000.0, 1e-3, 1e6, 1e6 / 3.0, 1e6, 0.5};
    c.sheets = {s};
    c.pins = {PinConfig{0, "bottom", 1, {}, {}}, PinConfig{0, "top", 1, {}, {}}};
    c.contact.enabled = false;
    c.gravity = Vec3::Zero();
    c.quasi_static = true;
    c.solver.dt = 1.0;
    c.solver.tol = 1e-6;
    c.frames = 20;
  } else if (name == "sphere") {
    SheetConfig s;
    s.nu = s.nv = res(32);
    s.translation = Vec3(-0.5, -0.5, 0.4);
    s.material = cotton();
    s.material.e_shear = 2e6;
    s.material.e_bend = 0.0;
    c.sheets = {s};
    ColliderConfig ground;
    ColliderConfig ball;
    ball.collider.type = Collider::Type::Sphere;
    ball.collider.point = Vec3(0.0, 0.0, 0.15);
    ball.collider.radius = 0.15;
    c.colliders = {ground, ball};
    c.frames = 150;
  } else if (name == "bounce") {
    // Soft heavy mat drifting into the ground: light, transient contact.
    SheetConfig s;
    s.nu = s.nv = res(12);
    s.lx = s.ly = 0.5;
    s.translation = Vec3(0.0, 0.0, 1.5e-3);
    s.velocity = Vec3(0.0, 0.0, -0.05);
    s.material = {2000.0, 1e-3, 1e3, 5.0, 4.0, 0.3};
    c.sheets = {s};
    c.colliders = {ColliderConfig{}};
    c.contact.params.kappa = 10.0;
    c.gravity = Vec3::Zero();
    c.frames = 30;
  } else {
    throw ConfigError("unknown built-in scene '" + name + "'");
  }
  c.output_dir = "out_" + name;
  c.validate();
  return c;
}

}  // namespace bscloth
