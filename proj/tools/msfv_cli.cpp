#include <CLI11.hpp>

#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "msfv/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> mode;
  std::optional<std::string> solver;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--mode", o.mode, "full | ms-fixed | ms-adaptive");
  cmd->add_option("--solver", o.solver, "direct | blockcg");
  cmd->add_option("--workers", o.workers, "worker threads for block-parallel sections");
  cmd->add_option("--seed", o.seed, "noise seed");
  cmd->add_option("--out", o.out, "output directory");
}

msfv::ExperimentConfig resolve(const Overrides& o) {
  msfv::ExperimentConfig c = o.config.empty() ? msfv::ExperimentConfig{} : msfv::load_config(o.config);
  if (o.mode) c.mode = msfv::parse_mode(*o.mode);
  if (o.solver) c.solver.kind = msfv::parse_solver(*o.solver);
  if (o.workers) c.workers = *o.workers;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output = *o.out;
  c.validate();
  return c;
}

int cmd_forward(const Overrides& o) {
  const msfv::ExperimentConfig c = resolve(o);
  msfv::run_forward(c);
  std::cout << "forward (" << msfv::to_string(c.mode) << ") written to " << c.output << '\n';
  return 0;
}

int cmd_invert(const Overrides& o) {
  const msfv::ExperimentConfig c = resolve(o);
  const msfv::ExperimentResult r = msfv::run_experiment(c);
  const msfv::TraceRow& last = r.run.trace.rows.back();
  std::cout << msfv::to_string(c.mode) << ": " << last.iter << " iterations, total "
            << last.total << ", stop " << r.run.trace.stop_reason << ", " << r.run.seconds << " s\n";
  if (!std::isnan(r.run.relative_error)) {
    std::cout << "relative error vs full direct: " << r.run.relative_error << '\n';
  }
  std::cout << "outputs in " << c.output << '\n';
  return 0;
}

int cmd_bench(const Overrides& o, int repeats) {
  const msfv::ExperimentConfig c = resolve(o);
  const auto rows = msfv::scaling_benchmark(c, c.bench_workers, repeats);
  std::filesystem::create_directories(c.output);
  std::ofstream table(std::filesystem::path(c.output) / "scaling.csv");
  table << "# provenance: " << msfv::build_provenance() << '\n';
  msfv::write_scaling_table(rows, table);
  msfv::write_scaling_table(rows, std::cout);
  for (const auto& r : rows) {
    if (!r.identical) {
      std::cerr << "error: outputs at " << r.workers << " workers differ from serial\n";
      return 1;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale adaptive-basis DC resistivity forward modelling and inversion"};
  app.set_version_flag("--version", msfv::build_provenance());
  app.require_subcommand(1);

  Overrides fwd, inv, bench;
  int repeats = 3;
  auto* f = app.add_subcommand("forward", "simulate data for the configured true model");
  add_common(f, fwd);
  auto* i = app.add_subcommand("invert", "simulate noisy data and invert it");
  add_common(i, inv);
  auto* b = app.add_subcommand("bench", "strong-scaling timings for basis assembly and Y/X");
  add_common(b, bench);
  b->add_option("--repeats", repeats, "timed repetitions per worker count")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (f->parsed()) return cmd_forward(fwd);
    if (i->parsed()) return cmd_invert(inv);
    return cmd_bench(bench, repeats);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
