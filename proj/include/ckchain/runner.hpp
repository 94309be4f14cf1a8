#pragma once

// Batch driver behind the command-line tool: resolve a run configuration,
// execute the independent simulation jobs on a small worker pool with
// atomic per-job persistence, then aggregate deterministic CSV tables and
// a manifest that hashes every artifact.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ckchain/dmrg.hpp"
#include "ckchain/model.hpp"

namespace ckchain {

inline constexpr const char* kCodeVersion = "ckchain 1.0.0";

enum class Task {
  point,
  charge_gap_cut,
  neutral_gap_cut,
  dw_curve,
  dw_scan,
  phase_grid,
  ed_check,
};

std::string task_name(Task t);
std::optional<Task> task_from_name(const std::string& name);

// inclusive uniform grid start, start+step, ... up to stop
struct Grid {
  double start = 0.0;
  double step = 0.0;
  double stop = 0.0;
  bool enabled() const { return step > 0.0; }
  std::vector<double> values() const;
};

struct RunConfig {
  Task task = Task::point;
  ModelParams model;
  DmrgConfig dmrg;
  std::vector<int> sizes;            // chain lengths
  std::vector<double> g2_values;     // explicit list wins over the grid
  Grid g2_grid;
  std::vector<double> delta_values;  // detuning sweep (dw-curve)
  std::vector<double> t_values;      // hopping rows (phase-grid)
  std::vector<int> m_values;         // kept-states sweep (neutral-gap-cut)
  std::vector<int> r_values;         // correlator distances; empty = 1..L/2
  std::optional<int> n_pol;          // sector override; default is L
  std::string out = "runs/out";
  int workers = 1;
  std::uint64_t seed = 123456789;
  std::string preset;  // "desk" | "paper" | ""

  void validate() const;
  // every resolved field, serialized with sorted keys
  std::string canonical_json() const;

  // the g2 list a run will actually use (explicit values, grid, or model.g2)
  std::vector<double> resolved_g2() const;
  std::vector<double> resolved_delta() const;
  std::vector<double> resolved_t() const;
  std::vector<int> resolved_m() const;
};

// opinionated task-scale defaults; call with cfg.task already set
void apply_preset(RunConfig& cfg, const std::string& preset);
// set the fields present in the JSON object, leave the rest untouched
void merge_json(RunConfig& cfg, const std::string& json_text);

struct JobOutcome {
  std::string key;
  bool ok = false;
  bool cached = false;
  std::string error;
};

struct RunSummary {
  std::string out_dir;
  int jobs_total = 0;
  int jobs_failed = 0;
  std::vector<JobOutcome> outcomes;  // in deterministic job order
  std::vector<std::string> outputs;  // aggregated artifact paths
};

// execute all jobs for the config and write the artifact tables; throws on
// invalid config, reports per-job failures instead of aborting the batch
RunSummary run_task(const RunConfig& cfg);

struct EmitRequest {
  std::string store;   // directory produced by run_task
  std::string figure;  // fig2 | fig3 | fig4 | fig5 | funDelta
  std::string out;     // destination directory
};

struct EmitResult {
  bool ok = false;
  std::vector<std::string> outputs;
  std::vector<std::string> missing;  // required tables that were absent
};

// turn stored tables into plot-ready column files plus a gnuplot script
EmitResult emit_plot_data(const EmitRequest& req);

// stable hashing and float formatting shared by all artifacts
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64_file(const std::string& path);
std::string format_g(double v);  // printf %.15g

}  // namespace ckchain
