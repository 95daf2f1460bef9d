#include "bscloth/world.hpp"

#include "bscloth/log.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace bscloth {

namespace {

MembraneScheme scheme_of(const std::string& s) {
  if (s == "full2x2") return MembraneScheme::Interior2x2;
  return MembraneScheme::Reduced;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr char kMagic[8] = {'B', 'S', 'C', 'L', 'O', 'T', 'H', '1'};

}  // namespace

const char* version_string() { return "bscloth 1.0.0"; }

World::World(SceneConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::vector<SheetSetup> setups;
  std::vector<std::map<int, int>> pin_of(cfg_.sheets.size());  // control -> pin entry
  for (std::size_t p = 0; p < cfg_.pins.size(); ++p) {
    const PinConfig& pin = cfg_.pins[p];
    for (int c : select_controls(cfg_.sheets[pin.sheet], pin)) pin_of[pin.sheet][c] = static_cast<int>(p);
  }
  for (std::size_t s = 0; s < cfg_.sheets.size(); ++s) {
    const SheetConfig& sc = cfg_.sheets[s];
    SheetSetup st;
    st.sheet = make_sheet(sc);
    const SheetMaterial& m = sc.material;
    st.material = MaterialParams::from_moduli(m.e_stretch, m.e_shear, m.e_bend, m.thickness, m.poisson);
    st.areal_density = m.density * m.thickness;
    st.membrane = sc.membrane != "off";
    st.scheme = scheme_of(sc.membrane);
    st.bending = sc.bending;
    st.mesh_u = sc.mesh_u;
    st.mesh_v = sc.mesh_v;
    for (const auto& [c, p] : pin_of[s]) st.pinned.push_back(c);
    setups.push_back(std::move(st));
  }
  ContactSetup contact = cfg_.contact;
  contact.colliders.clear();
  for (const ColliderConfig& c : cfg_.colliders) contact.colliders.push_back(c.collider);
  sys_ = build_system(setups, contact, cfg_.gravity);
  x_ = sys_.initial_positions();
  v_ = sys_.initial_velocities();
  for (std::size_t s = 0; s < cfg_.sheets.size(); ++s) {
    for (const auto& [c, p] : pin_of[s]) {
      const int g = sys_.control_offset[s] + c;
      pin_control_.push_back(g);
      pin_base_.push_back(x_[g]);
      pin_script_.push_back(p);
    }
  }
  rest_mesh_ = sys_.mesh.positions(x_);
  place_colliders(0.0);
}

std::vector<Vec3> World::pin_targets(double t) const {
  std::vector<Vec3> out(pin_control_.size());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = pin_base_[k] + cfg_.pins[pin_script_[k]].motion.displacement(t);
  return out;
}

void World::place_colliders(double t) {
  for (std::size_t c = 0; c < cfg_.colliders.size(); ++c) {
    const ColliderConfig& cc = cfg_.colliders[c];
    Collider& col = sys_.contact.colliders[c];
    col.point = cc.collider.point + cc.motion.displacement(t);
    col.angular_velocity = cc.motion.angular_velocity;
    col.angle = cc.motion.angular_velocity.norm() * t;
  }
}

StepReport World::step() {
  const double dt = cfg_.solver.dt;
  const double t1 = (frame_ + 1) * dt;
  place_colliders(t1);
  const int n = sys_.num_control;
  std::vector<Vec3> xhat(n), xs = x_;
  for (int i = 0; i < n; ++i) xhat[i] = x_[i] + dt * v_[i];
  const auto targets = pin_targets(t1);
  for (std::size_t k = 0; k < pin_control_.size(); ++k) {
    xhat[pin_control_[k]] = targets[k];
    xs[pin_control_[k]] = targets[k];
  }
  StepReport r;
  try {
    r = newton_.solve(sys_, xs, xhat, cfg_.solver);
  } catch (const SolverError& e) {
    throw SolverError("frame " + std::to_string(frame_ + 1) + ": " + e.what());
  }
  for (int i = 0; i < n; ++i) v_[i] = cfg_.quasi_static ? Vec3::Zero() : Vec3((xs[i] - x_[i]) / dt);
  x_ = std::move(xs);
  ++frame_;
  return r;
}

int World::relax(double dt, int max_steps, double step_tol) {
  SolverParams p = cfg_.solver;
  p.dt = dt;
  p.tol = step_tol / dt;
  const auto targets = pin_targets(time());
  int steps = 0;
  for (; steps < max_steps; ++steps) {
    std::vector<Vec3> xs = x_;
    for (std::size_t k = 0; k < pin_control_.size(); ++k) xs[pin_control_[k]] = targets[k];
    StepReport r;
    try {
      r = newton_.solve(sys_, xs, xs, p);
    } catch (const SolverError& e) {
      throw SolverError("relaxation step " + std::to_string(steps) + ": " + e.what());
    }
    x_ = std::move(xs);
    if (r.iters == 0) break;
  }
  std::fill(v_.begin(), v_.end(), Vec3::Zero());
  return steps;
}

Vec3 World::momentum() const {
  Vec3 p = Vec3::Zero();
  for (int i = 0; i < sys_.num_control; ++i) p += sys_.mass[i] * v_[i];
  return p;
}

double World::kinetic_energy() const {
  double e = 0.0;
  for (int i = 0; i < sys_.num_control; ++i) e += 0.5 * sys_.mass[i] * v_[i].squaredNorm();
  return e;
}

std::vector<Vec3> World::mesh_positions() const { return sys_.mesh.positions(x_); }

double World::max_deflection(const Vec3& dir) const {
  const auto p = mesh_positions();
  double m = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) m = std::max(m, std::abs((p[k] - rest_mesh_[k]).dot(dir)));
  return m;
}

double World::min_contact_distance() const {
  if (!sys_.contact.enabled) return std::numeric_limits<double>::infinity();
  const auto p = mesh_positions();
  return min_distance(sys_.mesh, p, sys_.contact.colliders, 10.0 * sys_.contact.params.dhat,
                      sys_.contact.self_contact);
}

Metrics World::metrics() const {
  Metrics m;
  m.momentum = momentum();
  for (std::size_t s = 0; s < sys_.sheets.size(); ++s) {
    Vec3 p = Vec3::Zero();
    const int end = s + 1 < sys_.sheets.size() ? sys_.control_offset[s + 1] : sys_.num_control;
    for (int i = sys_.control_offset[s]; i < end; ++i) p += sys_.mass[i] * v_[i];
    m.sheet_momentum.push_back(p);
  }
  m.kinetic = kinetic_energy();
  m.potential = potential_terms(sys_, x_);
  m.min_distance = min_contact_distance();
  return m;
}

void write_obj(const std::string& path, const std::vector<Vec3>& vertices,
               const std::vector<std::array<int, 3>>& triangles) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (const Vec3& v : vertices) out << "v " << fmt(v.x()) << ' ' << fmt(v.y()) << ' ' << fmt(v.z()) << '\n';
  for (const auto& t : triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

int count_obj_vertices(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  int n = 0;
  std::string line;
  while (std::getline(in, line))
    if (line.size() > 2 && line[0] == 'v' && line[1] == ' ') ++n;
  return n;
}

void World::write_obj(const std::string& path) const {
  bscloth::write_obj(path, mesh_positions(), sys_.mesh.triangles);
}

void World::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  const std::string text = to_json(cfg_).dump();
  const std::uint64_t len = text.size(), n = x_.size();
  const std::int64_t frame = frame_;
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(len));
  out.write(reinterpret_cast<const char*>(&frame), sizeof frame);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (const auto* vec : {&x_, &v_})
    for (const Vec3& p : *vec) out.write(reinterpret_cast<const char*>(p.data()), 3 * sizeof(double));
  if (!out) throw ConfigError("failed writing " + path);
}

World World::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open snapshot " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw ConfigError(path + " is not a BSCLOTH1 snapshot");
  std::uint64_t len = 0, n = 0;
  std::int64_t frame = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 30)) throw ConfigError("corrupt snapshot header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  in.read(reinterpret_cast<char*>(&frame), sizeof frame);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in) throw ConfigError("truncated snapshot");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("corrupt snapshot config: ") + e.what());
  }
  World w(scene_from_json(j));
  if (n != w.x_.size()) throw ConfigError("snapshot size does not match its scene");
  for (auto* vec : {&w.x_, &w.v_})
    for (Vec3& p : *vec) in.read(reinterpret_cast<char*>(p.data()), 3 * sizeof(double));
  if (!in) throw ConfigError("truncated snapshot");
  w.frame_ = static_cast<int>(frame);
  w.place_colliders(w.time());
  return w;
}

std::string metrics_header() {
  return "frame,iters,t_assembly_ms,t_factor_ms,t_solve_ms,t_ccd_ms,t_ls_ms,pf_triggers,residual";
}

std::string metrics_row(int frame, const StepReport& r, bool deterministic) {
  auto t = [&](double ms) { return deterministic ? std::string("0") : fmt(ms); };
  std::ostringstream s;
  s << frame << ',' << r.iters << ',' << t(r.t_assembly_ms) << ',' << t(r.t_factor_ms) << ','
    << t(r.t_solve_ms) << ',' << t(r.t_ccd_ms) << ',' << t(r.t_ls_ms) << ',' << r.pf_triggers << ','
    << fmt(r.residual);
  return s.str();
}

RunSummary run_scene(World& world, const RunOptions& opts) {
  namespace fs = std::filesystem;
  const fs::path dir = opts.out_dir.empty() ? fs::path(world.config().output_dir) : fs::path(opts.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string());
  const int frames = opts.frames >= 0 ? opts.frames : world.config().frames;
  const int every = world.config().output_every;

  std::ofstream metrics(dir / "metrics.csv");
  std::ofstream physics(dir / "physics.csv");
  if (!metrics || !physics) throw ConfigError("cannot write into " + dir.string());
  metrics << metrics_header() << '\n';
  physics << "frame,time,px,py,pz,kinetic,membrane,bending,gravity,barrier,min_distance\n";
  auto physics_row = [&] {
    const Metrics m = world.metrics();
    physics << world.frame() << ',' << fmt(world.time()) << ',' << fmt(m.momentum.x()) << ','
            << fmt(m.momentum.y()) << ',' << fmt(m.momentum.z()) << ',' << fmt(m.kinetic) << ','
            << fmt(m.potential.membrane) << ',' << fmt(m.potential.bending) << ',' << fmt(m.potential.gravity)
            << ',' << fmt(m.potential.barrier) << ',' << fmt(m.min_distance) << '\n';
  };
  auto frame_path = [&](int f) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05d.obj", f);
    return (dir / name).string();
  };

  if (opts.write_frames) world.write_obj(frame_path(world.frame()));
  physics_row();

  RunSummary sum;
  const auto start = std::chrono::steady_clock::now();
  std::string failure;
  for (int k = 0; k < frames; ++k) {
    StepReport r;
    try {
      r = world.step();
    } catch (const SolverError& e) {
      failure = e.what();
      break;
    }
    metrics << metrics_row(world.frame(), r, opts.deterministic) << '\n';
    physics_row();
    if (opts.write_frames && world.frame() % every == 0) world.write_obj(frame_path(world.frame()));
    ++sum.frames;
    sum.total_iters += r.iters;
    sum.totals.t_assembly_ms += r.t_assembly_ms;
    sum.totals.t_factor_ms += r.t_factor_ms;
    sum.totals.t_solve_ms += r.t_solve_ms;
    sum.totals.t_ccd_ms += r.t_ccd_ms;
    sum.totals.t_ls_ms += r.t_ls_ms;
    sum.totals.pf_triggers += r.pf_triggers;
    sum.totals.pf_accepted += r.pf_accepted;
    sum.totals.max_pairs = std::max(sum.totals.max_pairs, r.max_pairs);
  }
  sum.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  nlohmann::json report;
  report["config"] = to_json(world.config());
  report["versions"] = {{"bscloth", version_string()},
                        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                      "." + std::to_string(EIGEN_MINOR_VERSION)},
                        {"spdlog", std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) + "." +
                                       std::to_string(SPDLOG_VER_PATCH)}};
  report["workers"] = opts.workers;
  report["deterministic"] = opts.deterministic;
  const auto& t = sum.totals;
  report["totals"] = {{"frames", sum.frames},
                      {"newton_iterations", sum.total_iters},
                      {"pf_triggers", t.pf_triggers},
                      {"pf_accepted", t.pf_accepted},
                      {"max_pairs", t.max_pairs}};
  if (!opts.deterministic) {
    report["totals"]["wall_ms"] = sum.wall_ms;
    report["totals"]["t_assembly_ms"] = t.t_assembly_ms;
    report["totals"]["t_factor_ms"] = t.t_factor_ms;
    report["totals"]["t_solve_ms"] = t.t_solve_ms;
    report["totals"]["t_ccd_ms"] = t.t_ccd_ms;
    report["totals"]["t_ls_ms"] = t.t_ls_ms;
  }
  report["status"] = failure.empty() ? "ok" : "solver_failure";
  if (!failure.empty()) report["error"] = failure;
  std::ofstream(dir / "report.json") << report.dump(2) << '\n';
  if (!failure.empty()) throw SolverError(failure);
  return sum;
}

}  // namespace bscloth
