#include "bscloth/bench.hpp"
#include "bscloth/checks.hpp"
#include "bscloth/log.hpp"
#include "bscloth/world.hpp"

#include <CLI11.hpp>
#include <tbb/global_control.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kSolverError = 2;

struct Globals {
  int workers = 0;
  bool deterministic = false;
};

std::unique_ptr<tbb::global_control> limit_workers(int workers) {
  if (workers <= 0) return nullptr;
  return std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism,
                                               static_cast<std::size_t>(workers));
}

struct SimulateArgs {
  std::string scene;
  std::string out;
  int frames = -1;
  std::vector<std::string> overrides;
  std::string snapshot;
  bool dump_config = false;
};

int simulate(const SimulateArgs& a, const Globals& g) {
  std::unique_ptr<bscloth::World> world;
  try {
    world = std::make_unique<bscloth::World>(bscloth::load_scene(a.scene, a.overrides));
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  if (a.dump_config) {
    std::cout << bscloth::to_json(world->config()).dump(2) << '\n';
    return kOk;
  }
  bscloth::RunOptions opts;
  opts.out_dir = a.out.empty() ? world->config().output_dir : a.out;
  opts.frames = a.frames;
  opts.deterministic = g.deterministic;
  opts.workers = g.workers;
  try {
    const bscloth::RunSummary s = bscloth::run_scene(*world, opts);
    if (!a.snapshot.empty()) world->save(a.snapshot);
    std::cout << "simulated " << s.frames << " frames, " << s.total_iters << " Newton iterations -> " << opts.out_dir
              << '\n';
  } catch (const bscloth::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolverError;
  }
  return kOk;
}

int benchmark(const std::string& name, std::vector<int> res, const std::string& out, const Globals& g) {
  try {
    if (res.empty()) res = bscloth::default_resolutions(name);
    std::vector<bscloth::BenchRow> rows = bscloth::run_benchmark(name, res);
    if (g.deterministic)
      for (auto& r : rows) r.wall_ms = 0.0;
    const std::string csv = bscloth::bench_csv(rows);
    std::cout << csv;
    if (!out.empty()) {
      std::ofstream f(out, std::ios::binary);
      if (!(f << csv)) throw bscloth::ConfigError("cannot write " + out);
    }
  } catch (const bscloth::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolverError;
  }
  return kOk;
}

int check(const std::string& suite) {
  std::vector<bscloth::CheckResult> results;
  try {
    results = bscloth::run_check_suite(suite);
  } catch (const bscloth::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "check aborted: " << e.what() << '\n';
    return kSolverError;
  }
  int failed = 0;
  for (const auto& r : results) {
    std::cout << bscloth::format_check(r) << '\n';
    failed += !r.pass;
  }
  std::cout << suite << ": " << results.size() - failed << "/" << results.size() << " passed\n";
  return failed == 0 ? kOk : kSolverError;
}

int export_obj(const std::string& snapshot, const std::string& obj) {
  try {
    bscloth::World::load(snapshot).write_obj(obj);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  bscloth::logger();  // reads BSCLOTH_LOG

  CLI::App app{"B-spline thin-shell cloth simulator", "bscloth"};
  app.set_version_flag("--version", bscloth::version_string());
  app.require_subcommand(1);

  Globals g;
  app.add_option("--workers", g.workers, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--deterministic", g.deterministic, "Byte-reproducible outputs (timings written as zero)");

  SimulateArgs sim;
  auto* cmd_sim = app.add_subcommand("simulate", "Run a scene file or built-in scene");
  cmd_sim->fallthrough();
  cmd_sim->add_option("scene", sim.scene, "Scene JSON path or built-in name")->required();
  cmd_sim->add_option("--out", sim.out, "Output directory (default: scene output.dir)");
  cmd_sim->add_option("--frames", sim.frames, "Override the frame count")->check(CLI::NonNegativeNumber);
  cmd_sim->add_option("--override", sim.overrides, "key=value with a dot-path into the scene config")
      ->allow_extra_args(false);
  cmd_sim->add_option("--save-snapshot", sim.snapshot, "Write the final state to a snapshot file");
  cmd_sim->add_flag("--dump-config", sim.dump_config, "Print the resolved scene config and exit");

  std::string bench_name, bench_out;
  std::vector<int> bench_res;
  auto* cmd_bench = app.add_subcommand("benchmark", "Run a convergence or validation benchmark");
  cmd_bench->fallthrough();
  cmd_bench->add_option("name", bench_name, "Benchmark name")
      ->required()
      ->check(CLI::IsMember(bscloth::benchmark_names()));
  cmd_bench->add_option("--resolutions", bench_res, "Control points per side, comma separated")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  cmd_bench->add_option("--out", bench_out, "Also write the CSV table to this file");

  std::string suite;
  auto* cmd_check = app.add_subcommand("check", "Run a verification suite");
  cmd_check->fallthrough();
  cmd_check->add_option("suite", suite, "Suite name")->required()->check(CLI::IsMember(bscloth::check_suite_names()));

  std::string snap, obj;
  auto* cmd_export = app.add_subcommand("export", "Write the embedded mesh of a snapshot as OBJ");
  cmd_export->fallthrough();
  cmd_export->add_option("snapshot", snap, "Snapshot file")->required()->check(CLI::ExistingFile);
  cmd_export->add_option("obj", obj, "Output OBJ path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kConfigError;
  }

  const auto limit = limit_workers(g.workers);
  if (*cmd_sim) return simulate(sim, g);
  if (*cmd_bench) return benchmark(bench_name, bench_res, bench_out, g);
  if (*cmd_check) return check(suite);
  return export_obj(snap, obj);
}
