// Command-line front end: one subcommand per batch task plus `emit`, which
// turns a finished result store into plot-ready files.  Settings resolve in
// order: built-in defaults, preset, JSON config file, explicit flags.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ckchain/runner.hpp"

namespace {

using namespace ckchain;

struct Flags {
  std::string config;
  std::string out;
  std::string preset;
  int workers = 1;
  std::uint64_t seed = 123456789;

  double omega = 1.0, g1 = 0.8, g2 = 1.35, t = 0.25, delta = -2.0;
  int n_max = 3;

  int m = 80, m_warm = 0, n_targets = 1, n_sweeps_max = 20;
  double energy_tol = 1e-9, solver_tol = 1e-7, final_tol = 1e-10;
  bool polish = true;

  std::vector<int> sizes, m_values, r_values;
  std::vector<double> g2_values, delta_values, t_values;
  std::string g2_grid;
  int n_pol = -1;
};

void add_task_options(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file");
  sub->add_option("--out", f.out, "output directory for the result store");
  sub->add_option("--preset", f.preset, "task-scale defaults: desk or paper");
  sub->add_option("--workers", f.workers, "concurrent jobs");
  sub->add_option("--seed", f.seed, "base seed for the sweep engine");

  sub->add_option("--omega", f.omega, "drive strength (energy unit)");
  sub->add_option("--g1", f.g1, "intracavity coupling");
  sub->add_option("--g2", f.g2, "cross-cavity coupling");
  sub->add_option("--t", f.t, "photon hopping");
  sub->add_option("--delta", f.delta, "level-4 detuning");
  sub->add_option("--n-max", f.n_max, "photon cutoff per cavity");

  sub->add_option("--m", f.m, "kept states per block");
  sub->add_option("--m-warm", f.m_warm, "kept states for the warm stage");
  sub->add_option("--targets", f.n_targets, "states targeted per sweep");
  sub->add_option("--max-sweeps", f.n_sweeps_max, "sweep cap per stage");
  sub->add_option("--energy-tol", f.energy_tol, "per-site sweep threshold");
  sub->add_option("--solver-tol", f.solver_tol, "bulk eigensolver residual");
  sub->add_option("--final-tol", f.final_tol, "polishing sweep residual");
  sub->add_option("--polish", f.polish, "run the polishing sweep (0/1)");

  sub->add_option("--sizes", f.sizes, "chain lengths")->delimiter(',');
  sub->add_option("--g2-values", f.g2_values, "explicit g2 list")
      ->delimiter(',');
  sub->add_option("--g2-grid", f.g2_grid, "uniform g2 grid start:step:stop");
  sub->add_option("--delta-values", f.delta_values, "detuning list")
      ->delimiter(',');
  sub->add_option("--t-values", f.t_values, "hopping list")->delimiter(',');
  sub->add_option("--m-values", f.m_values, "kept-states list")
      ->delimiter(',');
  sub->add_option("--r-values", f.r_values, "correlator distances")
      ->delimiter(',');
  sub->add_option("--n-pol", f.n_pol, "polariton sector (default: L)");
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Grid parse_grid(const std::string& text) {
  Grid g;
  if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &g.start, &g.step, &g.stop) !=
      3)
    throw std::invalid_argument("malformed grid '" + text +
                                "', expected start:step:stop");
  return g;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ground-state scans for the coupled-cavity chain"};
  app.require_subcommand(1);

  Flags f;
  std::vector<std::pair<CLI::App*, Task>> task_subs;
  for (Task t : {Task::point, Task::charge_gap_cut, Task::neutral_gap_cut,
                 Task::dw_curve, Task::dw_scan, Task::phase_grid,
                 Task::ed_check}) {
    CLI::App* sub = app.add_subcommand(task_name(t));
    add_task_options(sub, f);
    task_subs.emplace_back(sub, t);
  }

  std::string emit_store, emit_figure, emit_out;
  CLI::App* emit = app.add_subcommand(
      "emit", "plot-ready column files from a finished result store");
  emit->add_option("--store", emit_store, "result store directory")
      ->required();
  emit->add_option("--figure", emit_figure,
                   "fig2 | fig3 | fig4 | fig5 | funDelta")
      ->required();
  emit->add_option("--out", emit_out, "destination directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand(emit)) {
    const EmitResult r = emit_plot_data({emit_store, emit_figure, emit_out});
    if (!r.ok) {
      for (const std::string& m : r.missing)
        std::cerr << "missing input: " << m << "\n";
      return 2;
    }
    for (const std::string& o : r.outputs) std::cout << o << "\n";
    return 0;
  }

  CLI::App* sub = nullptr;
  RunConfig cfg;
  for (const auto& [s, t] : task_subs)
    if (app.got_subcommand(s)) {
      sub = s;
      cfg.task = t;
    }

  try {
    std::string file_text;
    if (sub->count("--config")) file_text = slurp(f.config);

    std::string preset = f.preset;
    if (!file_text.empty()) {
      const nlohmann::json j = nlohmann::json::parse(file_text);
      if (preset.empty()) preset = j.value("preset", "");
      if (j.contains("task") &&
          j.at("task").get<std::string>() != task_name(cfg.task))
        throw std::invalid_argument(
            "config file task '" + j.at("task").get<std::string>() +
            "' does not match subcommand '" + task_name(cfg.task) + "'");
    }
    apply_preset(cfg, preset);
    if (!file_text.empty()) merge_json(cfg, file_text);

    const auto set = [&](const char* name) { return sub->count(name) > 0; };
    if (set("--out")) cfg.out = f.out;
    if (set("--workers")) cfg.workers = f.workers;
    if (set("--seed")) cfg.seed = f.seed;
    if (set("--omega")) cfg.model.omega = f.omega;
    if (set("--g1")) cfg.model.g1 = f.g1;
    if (set("--g2")) cfg.model.g2 = f.g2;
    if (set("--t")) cfg.model.t = f.t;
    if (set("--delta")) cfg.model.delta = f.delta;
    if (set("--n-max")) cfg.model.n_max = f.n_max;
    if (set("--m")) cfg.dmrg.m = f.m;
    if (set("--m-warm")) cfg.dmrg.m_warm = f.m_warm;
    if (set("--targets")) cfg.dmrg.n_targets = f.n_targets;
    if (set("--max-sweeps")) cfg.dmrg.n_sweeps_max = f.n_sweeps_max;
    if (set("--energy-tol")) cfg.dmrg.energy_tol = f.energy_tol;
    if (set("--solver-tol")) cfg.dmrg.solver_tol = f.solver_tol;
    if (set("--final-tol")) cfg.dmrg.final_tol = f.final_tol;
    if (set("--polish")) cfg.dmrg.polish = f.polish;
    if (set("--sizes")) cfg.sizes = f.sizes;
    if (set("--g2-values")) cfg.g2_values = f.g2_values;
    if (set("--g2-grid")) cfg.g2_grid = parse_grid(f.g2_grid);
    if (set("--delta-values")) cfg.delta_values = f.delta_values;
    if (set("--t-values")) cfg.t_values = f.t_values;
    if (set("--m-values")) cfg.m_values = f.m_values;
    if (set("--r-values")) cfg.r_values = f.r_values;
    if (set("--n-pol")) cfg.n_pol = f.n_pol;

    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    const RunSummary sum = run_task(cfg);
    int cached = 0;
    for (const JobOutcome& o : sum.outcomes) cached += o.cached ? 1 : 0;
    std::cout << task_name(cfg.task) << ": " << sum.jobs_total << " jobs, "
              << sum.jobs_failed << " failed, " << cached << " cached\n";
    for (const JobOutcome& o : sum.outcomes)
      if (!o.ok) std::cerr << "job failed: " << o.key << ": " << o.error << "\n";
    for (const std::string& o : sum.outputs) std::cout << o << "\n";
    return sum.jobs_failed == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
