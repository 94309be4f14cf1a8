#include "ckchain/runner.hpp"

#include <atomic>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "ckchain/ed.hpp"
#include "ckchain/measure.hpp"
#include "ckchain/observables.hpp"
#include "ckchain/scaling.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ckchain {

// ----------------------------------------------------------------- utilities

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t k = 0; k < n; ++k) {
    h ^= p[k];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash missing file: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const auto got = std::size_t(in.gcount());
    for (std::size_t k = 0; k < got; ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

// --------------------------------------------------------------------- tasks

std::string task_name(Task t) {
  switch (t) {
    case Task::point: return "point";
    case Task::charge_gap_cut: return "charge-gap-cut";
    case Task::neutral_gap_cut: return "neutral-gap-cut";
    case Task::dw_curve: return "dw-curve";
    case Task::dw_scan: return "dw-scan";
    case Task::phase_grid: return "phase-grid";
    case Task::ed_check: return "ed-check";
  }
  return "point";
}

std::optional<Task> task_from_name(const std::string& name) {
  for (Task t : {Task::point, Task::charge_gap_cut, Task::neutral_gap_cut,
                 Task::dw_curve, Task::dw_scan, Task::phase_grid,
                 Task::ed_check})
    if (task_name(t) == name) return t;
  return std::nullopt;
}

std::vector<double> Grid::values() const {
  std::vector<double> out;
  if (!enabled()) return out;
  const int n = int(std::floor((stop - start) / step + 1e-9));
  for (int k = 0; k <= n; ++k) out.push_back(start + k * step);
  return out;
}

// ------------------------------------------------------------- configuration

std::vector<double> RunConfig::resolved_g2() const {
  if (!g2_values.empty()) return g2_values;
  if (g2_grid.enabled()) return g2_grid.values();
  return {model.g2};
}

std::vector<double> RunConfig::resolved_delta() const {
  if (!delta_values.empty()) return delta_values;
  return {model.delta};
}

std::vector<double> RunConfig::resolved_t() const {
  if (!t_values.empty()) return t_values;
  return {model.t};
}

std::vector<int> RunConfig::resolved_m() const {
  if (!m_values.empty()) return m_values;
  return {dmrg.m};
}

void RunConfig::validate() const {
  model.validate();
  dmrg.validate();
  if (out.empty()) throw std::invalid_argument("config: empty output directory");
  if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
  if (sizes.empty()) throw std::invalid_argument("config: no chain sizes");
  for (int L : sizes) {
    if (L < 2) throw std::invalid_argument("config: sizes must be >= 2");
    if (task == Task::ed_check && L > 6)
      throw std::invalid_argument(
          "config: ed-check sizes are capped at 6 (sector dimensions explode)");
    if ((task == Task::charge_gap_cut || task == Task::neutral_gap_cut ||
         task == Task::phase_grid) &&
        L < 4)
      throw std::invalid_argument("config: gap tasks need sizes >= 4");
  }
  if (g2_grid.step < 0.0 ||
      (g2_grid.enabled() && g2_grid.stop < g2_grid.start))
    throw std::invalid_argument("config: malformed g2 grid");
  for (int m : m_values)
    if (m < 8) throw std::invalid_argument("config: m values must be >= 8");
  for (int r : r_values)
    if (r < 1) throw std::invalid_argument("config: distances must be >= 1");
  if (n_pol && *n_pol < 0)
    throw std::invalid_argument("config: negative polariton sector");
  if (task == Task::dw_scan && resolved_g2().size() < 2)
    throw std::invalid_argument("config: dw-scan needs at least two g2 points");
}

std::string RunConfig::canonical_json() const {
  json j;
  j["task"] = task_name(task);
  j["model"] = {{"omega", model.omega}, {"g1", model.g1},
                {"g2", model.g2},       {"t", model.t},
                {"delta", model.delta}, {"n_max", model.n_max}};
  j["dmrg"] = {{"m", dmrg.m},
               {"m_warm", dmrg.m_warm},
               {"n_targets", dmrg.n_targets},
               {"n_sweeps_max", dmrg.n_sweeps_max},
               {"energy_tol", dmrg.energy_tol},
               {"solver_tol", dmrg.solver_tol},
               {"final_tol", dmrg.final_tol},
               {"polish", dmrg.polish}};
  j["sizes"] = sizes;
  j["g2_values"] = g2_values;
  j["g2_grid"] = {{"start", g2_grid.start},
                  {"step", g2_grid.step},
                  {"stop", g2_grid.stop}};
  j["delta_values"] = delta_values;
  j["t_values"] = t_values;
  j["m_values"] = m_values;
  j["r_values"] = r_values;
  if (n_pol) j["n_pol"] = *n_pol;
  // out and workers are execution details: they never change the results,
  // so they stay out of the canonical form and its hash
  j["seed"] = seed;
  j["preset"] = preset;
  return j.dump(2) + "\n";
}

void apply_preset(RunConfig& cfg, const std::string& preset) {
  if (preset.empty()) return;
  if (preset != "desk" && preset != "paper")
    throw std::invalid_argument("unknown preset: " + preset);
  cfg.preset = preset;
  const bool desk = preset == "desk";

  cfg.dmrg.m = desk ? 48 : 80;
  cfg.dmrg.m_warm = desk ? 0 : 32;
  switch (cfg.task) {
    case Task::point:
      cfg.sizes = desk ? std::vector<int>{8} : std::vector<int>{100};
      break;
    case Task::charge_gap_cut:
      cfg.sizes = desk ? std::vector<int>{4, 5, 6}
                       : std::vector<int>{20, 40, 60, 80, 100};
      cfg.g2_values = {1.30, 1.35, 1.40};
      cfg.dmrg.polish = false;
      if (!desk) cfg.dmrg.energy_tol = 1e-8;
      break;
    case Task::neutral_gap_cut:
      cfg.sizes = desk ? std::vector<int>{4, 6} : std::vector<int>{40, 80};
      cfg.g2_values = {1.3, 1.6, 2.0};
      cfg.dmrg.n_targets = 2;
      cfg.dmrg.polish = false;
      if (!desk) cfg.dmrg.energy_tol = 1e-8;
      break;
    case Task::dw_curve:
      cfg.model.t = 0.05;
      cfg.sizes = desk ? std::vector<int>{8} : std::vector<int>{300};
      cfg.g2_values = desk ? std::vector<double>{1.3, 1.6}
                           : std::vector<double>{1.3, 1.35, 1.4, 1.6};
      break;
    case Task::dw_scan:
      cfg.model.t = 0.05;
      cfg.sizes = desk ? std::vector<int>{6, 8, 10, 12}
                       : std::vector<int>{40, 80, 120, 160};
      cfg.g2_grid = desk ? Grid{1.3, 0.1, 1.6} : Grid{1.30, 0.05, 1.60};
      cfg.dmrg.m = desk ? 40 : 80;
      break;
    case Task::phase_grid:
      cfg.t_values = desk ? std::vector<double>{0.05, 0.25}
                          : std::vector<double>{0.05, 0.15, 0.25};
      cfg.g2_values = desk ? std::vector<double>{1.0, 1.6}
                           : std::vector<double>{1.0, 1.2, 1.4, 1.6, 1.8};
      cfg.sizes = desk ? std::vector<int>{4, 6, 8, 10}
                       : std::vector<int>{20, 40, 60};
      cfg.dmrg.m = desk ? 40 : 60;
      cfg.dmrg.m_warm = desk ? 0 : 24;
      cfg.dmrg.polish = false;
      break;
    case Task::ed_check:
      cfg.sizes = desk ? std::vector<int>{3, 4} : std::vector<int>{2, 3, 4};
      cfg.dmrg.m = 256;
      cfg.dmrg.m_warm = 0;
      break;
  }
}

void merge_json(RunConfig& cfg, const std::string& json_text) {
  const json j = json::parse(json_text);
  if (!j.is_object()) throw std::invalid_argument("config: not a JSON object");

  if (j.contains("task")) {
    const auto t = task_from_name(j.at("task").get<std::string>());
    if (!t) throw std::invalid_argument("config: unknown task");
    cfg.task = *t;
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    if (m.contains("omega")) cfg.model.omega = m.at("omega").get<double>();
    if (m.contains("g1")) cfg.model.g1 = m.at("g1").get<double>();
    if (m.contains("g2")) cfg.model.g2 = m.at("g2").get<double>();
    if (m.contains("t")) cfg.model.t = m.at("t").get<double>();
    if (m.contains("delta")) cfg.model.delta = m.at("delta").get<double>();
    if (m.contains("n_max")) cfg.model.n_max = m.at("n_max").get<int>();
  }
  if (j.contains("dmrg")) {
    const json& d = j.at("dmrg");
    if (d.contains("m")) cfg.dmrg.m = d.at("m").get<int>();
    if (d.contains("m_warm")) cfg.dmrg.m_warm = d.at("m_warm").get<int>();
    if (d.contains("n_targets"))
      cfg.dmrg.n_targets = d.at("n_targets").get<int>();
    if (d.contains("n_sweeps_max"))
      cfg.dmrg.n_sweeps_max = d.at("n_sweeps_max").get<int>();
    if (d.contains("energy_tol"))
      cfg.dmrg.energy_tol = d.at("energy_tol").get<double>();
    if (d.contains("solver_tol"))
      cfg.dmrg.solver_tol = d.at("solver_tol").get<double>();
    if (d.contains("final_tol"))
      cfg.dmrg.final_tol = d.at("final_tol").get<double>();
    if (d.contains("polish")) cfg.dmrg.polish = d.at("polish").get<bool>();
  }
  if (j.contains("sizes")) cfg.sizes = j.at("sizes").get<std::vector<int>>();
  if (j.contains("g2_values"))
    cfg.g2_values = j.at("g2_values").get<std::vector<double>>();
  if (j.contains("g2_grid")) {
    const json& g = j.at("g2_grid");
    cfg.g2_grid.start = g.value("start", 0.0);
    cfg.g2_grid.step = g.value("step", 0.0);
    cfg.g2_grid.stop = g.value("stop", 0.0);
  }
  if (j.contains("delta_values"))
    cfg.delta_values = j.at("delta_values").get<std::vector<double>>();
  if (j.contains("t_values"))
    cfg.t_values = j.at("t_values").get<std::vector<double>>();
  if (j.contains("m_values"))
    cfg.m_values = j.at("m_values").get<std::vector<int>>();
  if (j.contains("r_values"))
    cfg.r_values = j.at("r_values").get<std::vector<int>>();
  if (j.contains("n_pol")) cfg.n_pol = j.at("n_pol").get<int>();
  if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
  if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("preset")) cfg.preset = j.at("preset").get<std::string>();
}

// ---------------------------------------------------------------------- jobs

namespace {

enum class JobKind { ground, dwcurve, edcheck };

struct JobSpec {
  JobKind kind = JobKind::ground;
  ModelParams par;
  int L = 0;
  int n_pol = 0;
  DmrgConfig dmrg;
  std::vector<int> rs;  // dwcurve distances
  std::string key;
};

struct JobResult {
  bool ok = false;
  std::string error;
  double e0 = kNan, e1 = kNan;
  bool converged = false;
  int n_sweeps = 0;
  double max_discarded = kNan;
  std::vector<std::array<double, 4>> curve;  // r, i, j, value
  double e_ed = kNan, e_dmrg = kNan;
};

std::string job_key(const JobSpec& s) {
  std::ostringstream k;
  switch (s.kind) {
    case JobKind::ground: k << "ground"; break;
    case JobKind::dwcurve: k << "dwcurve"; break;
    case JobKind::edcheck: k << "edcheck"; break;
  }
  k << "|L=" << s.L << "|N=" << s.n_pol << "|omega=" << format_g(s.par.omega)
    << "|g1=" << format_g(s.par.g1)
    << "|g2=" << format_g(s.par.g2) << "|t=" << format_g(s.par.t)
    << "|delta=" << format_g(s.par.delta) << "|nmax=" << s.par.n_max
    << "|m=" << s.dmrg.m << "|mw=" << s.dmrg.m_warm
    << "|nt=" << s.dmrg.n_targets << "|ns=" << s.dmrg.n_sweeps_max
    << "|et=" << format_g(s.dmrg.energy_tol)
    << "|st=" << format_g(s.dmrg.solver_tol)
    << "|ft=" << format_g(s.dmrg.final_tol) << "|pol=" << int(s.dmrg.polish)
    << "|seed=" << s.dmrg.seed;
  if (s.kind == JobKind::dwcurve) {
    k << "|rs=";
    for (std::size_t i = 0; i < s.rs.size(); ++i)
      k << (i ? "," : "") << s.rs[i];
  }
  return k.str();
}

// distances measurable on an L-site chain (drops ones that fall off the edge)
std::vector<int> usable_distances(int L, const std::vector<int>& wanted) {
  std::vector<int> rs;
  if (wanted.empty()) {
    for (int r = 1; r <= L / 2; ++r) rs.push_back(r);
  } else {
    rs = wanted;
    std::sort(rs.begin(), rs.end());
    rs.erase(std::unique(rs.begin(), rs.end()), rs.end());
  }
  std::vector<int> ok;
  for (int r : rs) {
    if (r < 1 || r > L - 1) continue;
    if (r % 2 == 0 && (L - r) / 2 < 1) continue;
    ok.push_back(r);
  }
  return ok;
}

struct JobPlan {
  std::vector<JobSpec> jobs;
  // flat index of a job by its position in the task loops
  std::map<std::string, std::size_t> by_key;
};

JobSpec make_ground(const RunConfig& cfg, const ModelParams& par, int L,
                    int n_pol, int m, int n_targets) {
  JobSpec s;
  s.kind = JobKind::ground;
  s.par = par;
  s.L = L;
  s.n_pol = n_pol;
  s.dmrg = cfg.dmrg;
  s.dmrg.m = m;
  s.dmrg.n_targets = n_targets;
  s.dmrg.seed = cfg.seed;
  s.key = job_key(s);
  return s;
}

JobSpec make_dwcurve(const RunConfig& cfg, const ModelParams& par, int L,
                     const std::vector<int>& rs) {
  JobSpec s;
  s.kind = JobKind::dwcurve;
  s.par = par;
  s.L = L;
  s.n_pol = cfg.n_pol.value_or(L);
  s.dmrg = cfg.dmrg;
  s.dmrg.n_targets = 1;
  s.dmrg.polish = true;  // measurement quality regardless of the energy runs
  s.dmrg.seed = cfg.seed;
  s.rs = rs;
  s.key = job_key(s);
  return s;
}

JobSpec make_edcheck(const RunConfig& cfg, int L, int n_pol) {
  JobSpec s;
  s.kind = JobKind::edcheck;
  s.par = cfg.model;
  s.L = L;
  s.n_pol = n_pol;
  s.dmrg = cfg.dmrg;
  s.dmrg.n_targets = 1;
  s.dmrg.seed = cfg.seed;
  s.key = job_key(s);
  return s;
}

void push(JobPlan& plan, JobSpec s) {
  if (plan.by_key.count(s.key)) return;  // shared sector runs collapse
  plan.by_key[s.key] = plan.jobs.size();
  plan.jobs.push_back(std::move(s));
}

JobPlan build_jobs(const RunConfig& cfg) {
  JobPlan plan;
  switch (cfg.task) {
    case Task::point:
      for (int L : cfg.sizes)
        push(plan, make_ground(cfg, cfg.model, L, cfg.n_pol.value_or(L),
                               cfg.dmrg.m, cfg.dmrg.n_targets));
      break;

    case Task::charge_gap_cut:
      for (double g2 : cfg.resolved_g2())
        for (int L : cfg.sizes)
          for (int d : {-1, 0, +1}) {
            ModelParams par = cfg.model;
            par.g2 = g2;
            push(plan, make_ground(cfg, par, L, L + d, cfg.dmrg.m, 1));
          }
      break;

    case Task::neutral_gap_cut:
      for (int m : cfg.resolved_m())
        for (double g2 : cfg.resolved_g2())
          for (int L : cfg.sizes) {
            ModelParams par = cfg.model;
            par.g2 = g2;
            push(plan, make_ground(cfg, par, L, L, m,
                                   std::max(2, cfg.dmrg.n_targets)));
          }
      break;

    case Task::dw_curve:
      for (double delta : cfg.resolved_delta())
        for (double g2 : cfg.resolved_g2())
          for (int L : cfg.sizes) {
            ModelParams par = cfg.model;
            par.g2 = g2;
            par.delta = delta;
            push(plan,
                 make_dwcurve(cfg, par, L, usable_distances(L, cfg.r_values)));
          }
      break;

    case Task::dw_scan:
      for (double g2 : cfg.resolved_g2())
        for (int L : cfg.sizes) {
          ModelParams par = cfg.model;
          par.g2 = g2;
          push(plan, make_dwcurve(cfg, par, L, {L / 2}));
        }
      break;

    case Task::phase_grid:
      for (double t : cfg.resolved_t())
        for (double g2 : cfg.resolved_g2()) {
          ModelParams par = cfg.model;
          par.t = t;
          par.g2 = g2;
          for (int L : cfg.sizes)
            for (int d : {-1, 0, +1})
              push(plan, make_ground(cfg, par, L, L + d, cfg.dmrg.m, 1));
          for (int L : cfg.sizes) push(plan, make_dwcurve(cfg, par, L, {L / 2}));
        }
      break;

    case Task::ed_check:
      for (int L : cfg.sizes)
        for (int d : {-1, 0, +1}) {
          if (L + d < 0) continue;
          push(plan, make_edcheck(cfg, L, L + d));
        }
      break;
  }
  return plan;
}

// ------------------------------------------------------ execute and persist

json result_to_json(const std::string& key, const JobResult& r) {
  json j;
  j["key"] = key;
  j["ok"] = r.ok;
  if (!r.error.empty()) j["error"] = r.error;
  auto put = [&](const char* name, double v) {
    if (std::isfinite(v)) j[name] = v;
  };
  put("e0", r.e0);
  put("e1", r.e1);
  j["converged"] = r.converged;
  j["n_sweeps"] = r.n_sweeps;
  put("max_discarded", r.max_discarded);
  if (!r.curve.empty()) {
    json c = json::array();
    for (const auto& row : r.curve)
      c.push_back({int(row[0]), int(row[1]), int(row[2]), row[3]});
    j["curve"] = c;
  }
  put("e_ed", r.e_ed);
  put("e_dmrg", r.e_dmrg);
  return j;
}

JobResult result_from_json(const json& j) {
  JobResult r;
  r.ok = j.value("ok", false);
  r.error = j.value("error", std::string{});
  r.e0 = j.value("e0", kNan);
  r.e1 = j.value("e1", kNan);
  r.converged = j.value("converged", false);
  r.n_sweeps = j.value("n_sweeps", 0);
  r.max_discarded = j.value("max_discarded", kNan);
  if (j.contains("curve"))
    for (const auto& row : j.at("curve"))
      r.curve.push_back({row.at(0).get<double>(), row.at(1).get<double>(),
                         row.at(2).get<double>(), row.at(3).get<double>()});
  r.e_ed = j.value("e_ed", kNan);
  r.e_dmrg = j.value("e_dmrg", kNan);
  return r;
}

JobResult compute_job(const JobSpec& s) {
  JobResult r;
  switch (s.kind) {
    case JobKind::ground: {
      const GroundStateResult g = dmrg_run(s.par, s.L, s.n_pol, s.dmrg);
      r.e0 = g.e0;
      r.e1 = g.e1;
      r.converged = g.converged;
      r.n_sweeps = g.n_sweeps;
      r.max_discarded = g.max_discarded;
      break;
    }
    case JobKind::dwcurve: {
      const GroundStateResult g = dmrg_run(s.par, s.L, s.n_pol, s.dmrg);
      r.e0 = g.e0;
      r.e1 = g.e1;
      r.converged = g.converged;
      r.n_sweeps = g.n_sweeps;
      r.max_discarded = g.max_discarded;
      const DwCurve c = dw_curve(g.state, s.rs);
      for (const DwPoint& p : c.points)
        r.curve.push_back({double(p.r), double(p.i), double(p.j), p.value});
      break;
    }
    case JobKind::edcheck: {
      const SiteBasis basis = build_site_basis(s.par.n_max);
      const SectorBasis sector = enumerate_sector(basis, s.L, s.n_pol);
      EdOptions opt;
      const EdResult ed = ed_lowest_states(sector, s.par, opt);
      if (!ed.converged)
        throw std::runtime_error("exact diagonalization did not converge");
      const GroundStateResult g = dmrg_run(s.par, s.L, s.n_pol, s.dmrg);
      r.e_ed = ed.energies[0];
      r.e_dmrg = g.e0;
      r.e0 = g.e0;
      r.converged = g.converged;
      r.n_sweeps = g.n_sweeps;
      r.max_discarded = g.max_discarded;
      break;
    }
  }
  r.ok = true;
  return r;
}

JobResult load_or_compute(const fs::path& jobs_dir, const JobSpec& s,
                          bool& cached) {
  const fs::path file = jobs_dir / (hex64(fnv1a64(s.key.data(), s.key.size())) +
                                    ".json");
  cached = false;
  if (fs::exists(file)) {
    try {
      const json j = json::parse(read_file(file));
      if (j.value("key", std::string{}) == s.key && j.value("ok", false)) {
        cached = true;
        return result_from_json(j);
      }
    } catch (const std::exception&) {
      // fall through to recompute
    }
  }

  JobResult r;
  try {
    r = compute_job(s);
  } catch (const std::exception& e) {
    r = JobResult{};
    r.error = e.what();
  }
  if (r.ok)  // failures are recomputed on the next run instead of cached
    write_file_atomic(file, result_to_json(s.key, r).dump(2) + "\n");
  return r;
}

// ------------------------------------------------------------- aggregation

struct Table {
  std::string text;
  explicit Table(const std::string& header) { text = header + "\n"; }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k)
      text += (k ? "," : "") + cells[k];
    text += "\n";
  }
};

std::string b01(bool v) { return v ? "1" : "0"; }

const JobResult& at(const JobPlan& plan, const std::vector<JobResult>& res,
                    const std::string& key) {
  return res[plan.by_key.at(key)];
}

std::string status_of(const JobResult& r) {
  if (r.ok) return "ok";
  return "failed:" + sanitize(r.error);
}

// one charge-gap row from the three sector results
void charge_row(Table& gaps, const ModelParams& par, int L, int m,
                const JobResult& minus, const JobResult& zero,
                const JobResult& plus,
                std::vector<std::pair<int, double>>* per_size) {
  const bool ok = minus.ok && zero.ok && plus.ok;
  const double value =
      ok ? ((plus.e0 - zero.e0) - (zero.e0 - minus.e0)) / L : kNan;
  const bool conv = ok && minus.converged && zero.converged && plus.converged;
  std::string status = "ok";
  for (const JobResult* r : {&minus, &zero, &plus})
    if (!r->ok) status = status_of(*r);
  gaps.row({"charge", std::to_string(L), std::to_string(L),
            format_g(par.g1), format_g(par.g2), format_g(par.t),
            format_g(par.delta), std::to_string(par.n_max), std::to_string(m),
            format_g(value), format_g(ok ? minus.e0 / L : kNan),
            format_g(ok ? zero.e0 / L : kNan),
            format_g(ok ? plus.e0 / L : kNan), format_g(kNan),
            format_g(ok ? minus.e0 : kNan), format_g(ok ? zero.e0 : kNan),
            format_g(ok ? plus.e0 : kNan), format_g(kNan), b01(conv), status});
  if (ok && conv && per_size) per_size->emplace_back(L, value);
}

const char* kGapsHeader =
    "kind,L,n_pol,g1,g2,t,delta,n_max,m,value,e_minus,e_zero,e_plus,e_one,"
    "total_minus,total_zero,total_plus,total_one,converged,status";
const char* kMidpointsHeader =
    "L,n_pol,g1,g2,t,delta,n_max,m,r,value,status";
const char* kExtrapolationHeader =
    "kind,t,g2,n_sizes,lin_c0,lin_c1,lin_err0,quad_c0,quad_c1,quad_c2,"
    "quad_err0,intercept_difference";
const char* kBoundaryHeader = "t,method,g2_star,uncertainty,found,note";
const char* kClassificationHeader =
    "t,g2,n_sizes,class,rate,amplitude,asymptote,rss_pure,rss_offset";

void extrapolation_row(Table& tab, const char* kind, double t, double g2,
                       const std::vector<std::pair<int, double>>& pts,
                       std::vector<std::pair<double, double>>* intercepts) {
  if (pts.size() < 3) return;
  const GapExtrapolation ex = extrapolate_gap(pts);
  tab.row({kind, format_g(t), format_g(g2), std::to_string(pts.size()),
           format_g(ex.linear.coef[0]), format_g(ex.linear.coef[1]),
           format_g(ex.linear.intercept_err), format_g(ex.quadratic.coef[0]),
           format_g(ex.quadratic.coef[1]), format_g(ex.quadratic.coef[2]),
           format_g(ex.quadratic.intercept_err),
           format_g(ex.intercept_difference)});
  if (intercepts) intercepts->emplace_back(g2, ex.linear.intercept);
}

void boundary_row(Table& tab, const BoundaryPoint& bp) {
  tab.row({format_g(bp.t), bp.method, format_g(bp.found ? bp.g2_star : kNan),
           format_g(bp.uncertainty), b01(bp.found),
           bp.note.empty() ? "-" : sanitize(bp.note)});
}

void midpoint_rows(Table& tab, const JobSpec& s, const JobResult& r) {
  const int mid = s.L / 2;
  for (const auto& row : r.curve)
    if (int(row[0]) == mid)
      tab.row({std::to_string(s.L), std::to_string(s.n_pol),
               format_g(s.par.g1), format_g(s.par.g2), format_g(s.par.t),
               format_g(s.par.delta), std::to_string(s.par.n_max),
               std::to_string(s.dmrg.m), std::to_string(mid),
               format_g(row[3]), status_of(r)});
  if (!r.ok)
    tab.row({std::to_string(s.L), std::to_string(s.n_pol), format_g(s.par.g1),
             format_g(s.par.g2), format_g(s.par.t), format_g(s.par.delta),
             std::to_string(s.par.n_max), std::to_string(s.dmrg.m),
             std::to_string(mid), format_g(kNan), status_of(r)});
}

std::map<std::string, std::string> aggregate(const RunConfig& cfg,
                                             const JobPlan& plan,
                                             const std::vector<JobResult>& res) {
  std::map<std::string, std::string> tables;

  switch (cfg.task) {
    case Task::point: {
      Table tab(
          "L,n_pol,g1,g2,t,delta,n_max,m,e0,e1,converged,n_sweeps,"
          "max_discarded,status");
      for (int L : cfg.sizes) {
        const JobSpec probe = make_ground(cfg, cfg.model, L,
                                          cfg.n_pol.value_or(L), cfg.dmrg.m,
                                          cfg.dmrg.n_targets);
        const JobResult& r = at(plan, res, probe.key);
        tab.row({std::to_string(L), std::to_string(probe.n_pol),
                 format_g(cfg.model.g1), format_g(cfg.model.g2),
                 format_g(cfg.model.t), format_g(cfg.model.delta),
                 std::to_string(cfg.model.n_max), std::to_string(cfg.dmrg.m),
                 format_g(r.e0), format_g(r.e1), b01(r.converged),
                 std::to_string(r.n_sweeps), format_g(r.max_discarded),
                 status_of(r)});
      }
      tables["point.csv"] = tab.text;
      break;
    }

    case Task::charge_gap_cut: {
      Table gaps(kGapsHeader);
      Table extr(kExtrapolationHeader);
      Table bound(kBoundaryHeader);
      std::vector<std::pair<double, double>> intercepts;
      for (double g2 : cfg.resolved_g2()) {
        ModelParams par = cfg.model;
        par.g2 = g2;
        std::vector<std::pair<int, double>> per_size;
        for (int L : cfg.sizes) {
          const JobResult& minus =
              at(plan, res, make_ground(cfg, par, L, L - 1, cfg.dmrg.m, 1).key);
          const JobResult& zero =
              at(plan, res, make_ground(cfg, par, L, L, cfg.dmrg.m, 1).key);
          const JobResult& plus =
              at(plan, res, make_ground(cfg, par, L, L + 1, cfg.dmrg.m, 1).key);
          charge_row(gaps, par, L, cfg.dmrg.m, minus, zero, plus, &per_size);
        }
        extrapolation_row(extr, "charge", cfg.model.t, g2, per_size,
                          &intercepts);
      }
      tables["gaps.csv"] = gaps.text;
      if (cfg.sizes.size() >= 3) tables["extrapolation.csv"] = extr.text;
      if (intercepts.size() >= 2) {
        boundary_row(bound, locate_critical_g2(cfg.model.t, intercepts));
        tables["boundary.csv"] = bound.text;
      }
      break;
    }

    case Task::neutral_gap_cut: {
      Table gaps(kGapsHeader);
      for (int m : cfg.resolved_m())
        for (double g2 : cfg.resolved_g2())
          for (int L : cfg.sizes) {
            ModelParams par = cfg.model;
            par.g2 = g2;
            const JobResult& r = at(
                plan, res,
                make_ground(cfg, par, L, L, m, std::max(2, cfg.dmrg.n_targets))
                    .key);
            const bool ok = r.ok && std::isfinite(r.e1);
            const double value = ok ? (r.e1 - r.e0) / L : kNan;
            gaps.row({"neutral", std::to_string(L), std::to_string(L),
                      format_g(par.g1), format_g(par.g2), format_g(par.t),
                      format_g(par.delta), std::to_string(par.n_max),
                      std::to_string(m), format_g(value), format_g(kNan),
                      format_g(ok ? r.e0 / L : kNan), format_g(kNan),
                      format_g(ok ? r.e1 / L : kNan), format_g(kNan),
                      format_g(ok ? r.e0 : kNan), format_g(kNan),
                      format_g(ok ? r.e1 : kNan),
                      b01(ok && r.converged), status_of(r)});
          }
      tables["gaps.csv"] = gaps.text;
      break;
    }

    case Task::dw_curve: {
      Table corr("L,n_pol,g1,g2,t,delta,n_max,m,r,i,j,value,status");
      Table mid(kMidpointsHeader);
      for (double delta : cfg.resolved_delta())
        for (double g2 : cfg.resolved_g2())
          for (int L : cfg.sizes) {
            ModelParams par = cfg.model;
            par.g2 = g2;
            par.delta = delta;
            const JobSpec s =
                make_dwcurve(cfg, par, L, usable_distances(L, cfg.r_values));
            const JobResult& r = at(plan, res, s.key);
            for (const auto& row : r.curve)
              corr.row({std::to_string(L), std::to_string(s.n_pol),
                        format_g(par.g1), format_g(par.g2), format_g(par.t),
                        format_g(par.delta), std::to_string(par.n_max),
                        std::to_string(s.dmrg.m), std::to_string(int(row[0])),
                        std::to_string(int(row[1])),
                        std::to_string(int(row[2])), format_g(row[3]),
                        status_of(r)});
            if (!r.ok)
              corr.row({std::to_string(L), std::to_string(s.n_pol),
                        format_g(par.g1), format_g(par.g2), format_g(par.t),
                        format_g(par.delta), std::to_string(par.n_max),
                        std::to_string(s.dmrg.m), "-1", "-1", "-1",
                        format_g(kNan), status_of(r)});
            midpoint_rows(mid, s, r);
          }
      tables["correlators.csv"] = corr.text;
      tables["midpoints.csv"] = mid.text;
      break;
    }

    case Task::dw_scan: {
      Table mid(kMidpointsHeader);
      Table cls(kClassificationHeader);
      Table bound(kBoundaryHeader);
      const std::vector<double> g2s = cfg.resolved_g2();
      std::vector<int> finite_flags(g2s.size(), -1);  // -1 unknown
      for (std::size_t gi = 0; gi < g2s.size(); ++gi) {
        ModelParams par = cfg.model;
        par.g2 = g2s[gi];
        std::vector<std::pair<int, double>> series;
        bool all_ok = true;
        for (int L : cfg.sizes) {
          const JobSpec s = make_dwcurve(cfg, par, L, {L / 2});
          const JobResult& r = at(plan, res, s.key);
          midpoint_rows(mid, s, r);
          if (r.ok && !r.curve.empty())
            series.emplace_back(L, r.curve.front()[3]);
          else
            all_ok = false;
        }
        if (all_ok && series.size() >= 4) {
          const DwClassification c = classify_dw(series);
          finite_flags[gi] = c.cls == DwClass::finite ? 1 : 0;
          cls.row({format_g(cfg.model.t), format_g(g2s[gi]),
                   std::to_string(series.size()),
                   c.cls == DwClass::finite ? "finite" : "vanishing",
                   format_g(c.rate), format_g(c.pure.amplitude),
                   format_g(c.asymptote), format_g(c.pure.rss),
                   format_g(c.offset.rss)});
        } else {
          cls.row({format_g(cfg.model.t), format_g(g2s[gi]),
                   std::to_string(series.size()), "unknown", format_g(kNan),
                   format_g(kNan), format_g(kNan), format_g(kNan),
                   format_g(kNan)});
        }
      }
      BoundaryPoint bp;
      bp.t = cfg.model.t;
      bp.method = "dw-first-nonzero";
      for (std::size_t gi = 0; gi < g2s.size(); ++gi) {
        if (finite_flags[gi] != 1) continue;
        bp.g2_star = g2s[gi];
        bp.found = true;
        bp.uncertainty = gi > 0 ? g2s[gi] - g2s[gi - 1]
                                : (g2s.size() > 1 ? g2s[1] - g2s[0] : 0.0);
        break;
      }
      if (!bp.found) bp.note = "no finite order parameter on the scanned grid";
      boundary_row(bound, bp);
      tables["midpoints.csv"] = mid.text;
      tables["classification.csv"] = cls.text;
      tables["boundary.csv"] = bound.text;
      break;
    }

    case Task::phase_grid: {
      Table gaps(kGapsHeader);
      Table mid(kMidpointsHeader);
      Table grid(
          "t,g2,label,charge_intercept,charge_err,dw_rate,dw_asymptote,"
          "status");
      for (double t : cfg.resolved_t())
        for (double g2 : cfg.resolved_g2()) {
          ModelParams par = cfg.model;
          par.t = t;
          par.g2 = g2;
          std::vector<std::pair<int, double>> per_size;
          std::vector<std::pair<int, double>> series;
          bool all_ok = true;
          for (int L : cfg.sizes) {
            const JobResult& minus = at(
                plan, res, make_ground(cfg, par, L, L - 1, cfg.dmrg.m, 1).key);
            const JobResult& zero =
                at(plan, res, make_ground(cfg, par, L, L, cfg.dmrg.m, 1).key);
            const JobResult& plus = at(
                plan, res, make_ground(cfg, par, L, L + 1, cfg.dmrg.m, 1).key);
            charge_row(gaps, par, L, cfg.dmrg.m, minus, zero, plus, &per_size);
            all_ok = all_ok && minus.ok && zero.ok && plus.ok;
          }
          for (int L : cfg.sizes) {
            const JobSpec s = make_dwcurve(cfg, par, L, {L / 2});
            const JobResult& r = at(plan, res, s.key);
            midpoint_rows(mid, s, r);
            if (r.ok && !r.curve.empty())
              series.emplace_back(L, r.curve.front()[3]);
            else
              all_ok = false;
          }
          std::string label = "NA";
          double chi = kNan, che = kNan, dwr = kNan, dwa = kNan;
          if (all_ok && per_size.size() >= 3 && series.size() >= 4) {
            const GapExtrapolation ex = extrapolate_gap(per_size);
            const DwClassification c = classify_dw(series);
            chi = ex.linear.intercept;
            che = ex.linear.intercept_err;
            dwr = c.rate;
            dwa = c.asymptote;
            if (c.cls == DwClass::finite)
              label = "DW";
            else if (chi > std::max(1e-3, 2.0 * che))
              label = "MI";
            else
              label = "SF";
          }
          grid.row({format_g(t), format_g(g2), label, format_g(chi),
                    format_g(che), format_g(dwr), format_g(dwa),
                    all_ok ? "ok" : "failed:incomplete-point"});
        }
      tables["gaps.csv"] = gaps.text;
      tables["midpoints.csv"] = mid.text;
      tables["phase_grid.csv"] = grid.text;
      break;
    }

    case Task::ed_check: {
      Table tab("L,n_pol,g1,g2,t,delta,n_max,e_ed,e_dmrg,abs_diff,status");
      for (int L : cfg.sizes)
        for (int d : {-1, 0, +1}) {
          if (L + d < 0) continue;
          const JobResult& r = at(plan, res, make_edcheck(cfg, L, L + d).key);
          const double diff =
              r.ok ? std::abs(r.e_ed - r.e_dmrg) : kNan;
          tab.row({std::to_string(L), std::to_string(L + d),
                   format_g(cfg.model.g1), format_g(cfg.model.g2),
                   format_g(cfg.model.t), format_g(cfg.model.delta),
                   std::to_string(cfg.model.n_max), format_g(r.e_ed),
                   format_g(r.e_dmrg), format_g(diff), status_of(r)});
        }
      tables["ed_check.csv"] = tab.text;
      break;
    }
  }
  return tables;
}

std::string iso_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
  return buf;
}

}  // namespace

// ----------------------------------------------------------------- run_task

RunSummary run_task(const RunConfig& cfg) {
  cfg.validate();

  const fs::path out_dir(cfg.out);
  const fs::path jobs_dir = out_dir / "jobs";
  fs::create_directories(jobs_dir);

  const std::string config_text = cfg.canonical_json();
  write_file_atomic(out_dir / "config.json", config_text);

  const JobPlan plan = build_jobs(cfg);
  std::vector<JobResult> results(plan.jobs.size());
  std::vector<char> cached(plan.jobs.size(), 0);

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plan.jobs.size()) return;
      bool was_cached = false;
      results[i] = load_or_compute(jobs_dir, plan.jobs[i], was_cached);
      cached[i] = was_cached ? 1 : 0;
    }
  };
  const int n_workers =
      int(std::min<std::size_t>(std::max(1, cfg.workers), plan.jobs.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(work);
  work();
  for (std::thread& th : pool) th.join();

  RunSummary sum;
  sum.out_dir = out_dir.string();
  sum.jobs_total = int(plan.jobs.size());
  for (std::size_t i = 0; i < plan.jobs.size(); ++i) {
    JobOutcome o;
    o.key = plan.jobs[i].key;
    o.ok = results[i].ok;
    o.cached = cached[i] != 0;
    o.error = results[i].error;
    if (!o.ok) ++sum.jobs_failed;
    sum.outcomes.push_back(std::move(o));
  }

  const auto tables = aggregate(cfg, plan, results);
  for (const auto& [name, text] : tables) {
    write_file_atomic(out_dir / name, text);
    sum.outputs.push_back((out_dir / name).string());
  }

  // manifest: hash every artifact of this run
  json manifest;
  manifest["code_version"] = kCodeVersion;
  manifest["config_hash"] =
      hex64(fnv1a64(config_text.data(), config_text.size()));
  manifest["created"] = iso_utc_now();
  manifest["task"] = task_name(cfg.task);
  manifest["jobs"] = {{"total", sum.jobs_total}, {"failed", sum.jobs_failed}};
  std::vector<std::string> files = {"config.json"};
  for (const auto& [name, text] : tables) files.push_back(name);
  for (const JobSpec& s : plan.jobs) {
    const std::string f =
        "jobs/" + hex64(fnv1a64(s.key.data(), s.key.size())) + ".json";
    if (fs::exists(out_dir / f)) files.push_back(f);
  }
  std::sort(files.begin(), files.end());
  json listing = json::array();
  for (const std::string& f : files) {
    const fs::path p = out_dir / f;
    listing.push_back({{"path", f},
                       {"bytes", fs::file_size(p)},
                       {"fnv1a64", hex64(fnv1a64_file(p.string()))}});
  }
  manifest["outputs"] = listing;
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  sum.outputs.push_back((out_dir / "manifest.json").string());
  return sum;
}

// --------------------------------------------------------------------- emit

namespace {

struct CsvFile {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (std::size_t k = 0; k < columns.size(); ++k)
      if (columns[k] == name) return int(k);
    throw std::runtime_error("missing column " + name);
  }
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

CsvFile parse_csv(const fs::path& path) {
  CsvFile f;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (std::getline(in, line)) f.columns = split_csv(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    f.rows.push_back(split_csv(line));
  }
  return f;
}

std::string value_tag(double v) {
  std::string s = format_g(v);
  for (char& c : s) {
    if (c == '.') c = 'p';
    if (c == '-') c = 'm';
  }
  return s;
}

// rows with status == ok (or tables without a status column)
std::vector<std::vector<std::string>> ok_rows(const CsvFile& f) {
  int sc = -1;
  for (std::size_t k = 0; k < f.columns.size(); ++k)
    if (f.columns[k] == "status") sc = int(k);
  std::vector<std::vector<std::string>> out;
  for (const auto& r : f.rows)
    if (sc < 0 || r[std::size_t(sc)] == "ok") out.push_back(r);
  return out;
}

}  // namespace

EmitResult emit_plot_data(const EmitRequest& req) {
  EmitResult result;
  const fs::path store(req.store);
  const fs::path out(req.out);

  static const std::map<std::string, std::vector<std::string>> kRequired = {
      {"fig2", {"phase_grid.csv"}},
      {"fig3", {"gaps.csv", "extrapolation.csv"}},
      {"fig4", {"correlators.csv", "midpoints.csv"}},
      {"fig5", {"gaps.csv"}},
      {"funDelta", {"midpoints.csv"}},
  };
  const auto it = kRequired.find(req.figure);
  if (it == kRequired.end()) {
    result.missing.push_back("unknown figure: " + req.figure);
    return result;
  }
  for (const std::string& f : it->second)
    if (!fs::exists(store / f)) result.missing.push_back((store / f).string());
  if (!result.missing.empty()) return result;

  fs::create_directories(out);
  auto emit_file = [&](const std::string& name, const std::string& text) {
    write_file_atomic(out / name, text);
    result.outputs.push_back((out / name).string());
  };

  if (req.figure == "fig2") {
    const CsvFile grid = parse_csv(store / "phase_grid.csv");
    const int ct = grid.col("t"), cg = grid.col("g2"), cl = grid.col("label");
    std::map<std::string, std::string> by_label;
    for (const auto& r : ok_rows(grid))
      by_label[r[std::size_t(cl)]] +=
          r[std::size_t(cg)] + " " + r[std::size_t(ct)] + "\n";
    std::string gp = "set xlabel 'g2'\nset ylabel 't'\n";
    std::string plots;
    for (const char* lab : {"MI", "SF", "DW"}) {
      const auto found = by_label.find(lab);
      if (found == by_label.end()) continue;
      const std::string name = std::string("fig2_") + lab + ".dat";
      emit_file(name, found->second);
      plots += plots.empty() ? "plot " : ", ";
      plots += "'" + name + "' with points title '" + lab + "'";
    }
    gp += plots + "\n";
    emit_file("fig2.gp", gp);
  } else if (req.figure == "fig3") {
    const CsvFile gaps = parse_csv(store / "gaps.csv");
    const CsvFile extr = parse_csv(store / "extrapolation.csv");
    const int gk = gaps.col("kind"), gL = gaps.col("L"), gg = gaps.col("g2"),
              gv = gaps.col("value");
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (const auto& r : ok_rows(gaps)) {
      if (r[std::size_t(gk)] != "charge") continue;
      series[r[std::size_t(gg)]].emplace_back(
          1.0 / std::stod(r[std::size_t(gL)]), std::stod(r[std::size_t(gv)]));
    }
    std::string gp = "set xlabel '1/L'\nset ylabel 'charge gap'\n";
    std::string plots;
    for (auto& [g2, pts] : series) {
      std::sort(pts.begin(), pts.end());
      std::string text;
      for (const auto& [x, y] : pts)
        text += format_g(x) + " " + format_g(y) + "\n";
      const std::string tag = value_tag(std::stod(g2));
      const std::string name = "fig3_gap_" + tag + ".dat";
      emit_file(name, text);
      plots += plots.empty() ? "plot " : ", ";
      plots += "'" + name + "' with points title 'g2=" + g2 + "'";
    }
    const int eg = extr.col("g2"), el0 = extr.col("lin_c0"),
              el1 = extr.col("lin_c1"), eq0 = extr.col("quad_c0"),
              eq1 = extr.col("quad_c1"), eq2 = extr.col("quad_c2");
    for (const auto& r : extr.rows) {
      const std::string tag = value_tag(std::stod(r[std::size_t(eg)]));
      gp += "lin_" + tag + "(x) = " + r[std::size_t(el0)] + " + " +
            r[std::size_t(el1)] + "*x\n";
      gp += "quad_" + tag + "(x) = " + r[std::size_t(eq0)] + " + " +
            r[std::size_t(eq1)] + "*x + " + r[std::size_t(eq2)] + "*x**2\n";
      plots += ", lin_" + tag + "(x) with lines title 'linear g2=" +
               r[std::size_t(eg)] + "'";
      plots += ", quad_" + tag + "(x) with lines dt 2 title 'quadratic g2=" +
               r[std::size_t(eg)] + "'";
    }
    gp += plots + "\n";
    emit_file("fig3.gp", gp);
  } else if (req.figure == "fig4") {
    const CsvFile corr = parse_csv(store / "correlators.csv");
    const CsvFile mid = parse_csv(store / "midpoints.csv");
    const int cL = corr.col("L"), cg = corr.col("g2"), cr = corr.col("r"),
              cv = corr.col("value"), cd = corr.col("delta");
    // a store holding a detuning sweep keeps the detunings apart
    std::set<std::string> deltas;
    for (const auto& r : ok_rows(corr)) deltas.insert(r[std::size_t(cd)]);
    const bool multi_delta = deltas.size() > 1;
    auto group_tag = [&](const std::string& g2, const std::string& delta) {
      std::string tag = value_tag(std::stod(g2));
      if (multi_delta) tag += "_d" + value_tag(std::stod(delta));
      return tag;
    };
    auto group_title = [&](const std::string& g2, const std::string& delta) {
      std::string title = "g2=" + g2;
      if (multi_delta) title += " delta=" + delta;
      return title;
    };
    // left panel: the correlator against distance at the largest size per group
    std::map<std::pair<std::string, std::string>, int> biggest;
    for (const auto& r : ok_rows(corr)) {
      int L = std::stoi(r[std::size_t(cL)]);
      auto& cur = biggest[{r[std::size_t(cg)], r[std::size_t(cd)]}];
      cur = std::max(cur, L);
    }
    std::string gp = "set log y\nset xlabel 'r'\nset ylabel 'C_DW(r)'\n";
    std::string plots;
    for (const auto& [key, L] : biggest) {
      std::vector<std::pair<int, double>> pts;
      for (const auto& r : ok_rows(corr))
        if (r[std::size_t(cg)] == key.first &&
            r[std::size_t(cd)] == key.second &&
            std::stoi(r[std::size_t(cL)]) == L)
          pts.emplace_back(std::stoi(r[std::size_t(cr)]),
                           std::stod(r[std::size_t(cv)]));
      std::sort(pts.begin(), pts.end());
      std::string text;
      for (const auto& [r_, v] : pts)
        text += std::to_string(r_) + " " + format_g(v) + "\n";
      const std::string name =
          "fig4_left_" + group_tag(key.first, key.second) + ".dat";
      emit_file(name, text);
      plots += plots.empty() ? "plot " : ", ";
      plots += "'" + name + "' with linespoints title '" +
               group_title(key.first, key.second) + "'";
    }
    gp += plots + "\n";
    // right panel: the midpoint against size per group
    const int mL = mid.col("L"), mg = mid.col("g2"), mv = mid.col("value"),
              md = mid.col("delta");
    std::map<std::pair<std::string, std::string>,
             std::vector<std::pair<int, double>>>
        mseries;
    for (const auto& r : ok_rows(mid))
      mseries[{r[std::size_t(mg)], r[std::size_t(md)]}].emplace_back(
          std::stoi(r[std::size_t(mL)]), std::stod(r[std::size_t(mv)]));
    std::string plots2;
    for (auto& [key, pts] : mseries) {
      std::sort(pts.begin(), pts.end());
      std::string text;
      for (const auto& [L, v] : pts)
        text += std::to_string(L) + " " + format_g(v) + "\n";
      const std::string name =
          "fig4_right_" + group_tag(key.first, key.second) + ".dat";
      emit_file(name, text);
      plots2 += plots2.empty() ? "plot " : ", ";
      plots2 += "'" + name + "' with linespoints title '" +
                group_title(key.first, key.second) + "'";
    }
    gp += "# right panel: midpoint correlator against L\n";
    gp += "# " + plots2 + "\n";
    emit_file("fig4.gp", gp);
  } else if (req.figure == "fig5") {
    const CsvFile gaps = parse_csv(store / "gaps.csv");
    const int gk = gaps.col("kind"), gL = gaps.col("L"), gg = gaps.col("g2"),
              gm = gaps.col("m"), gv = gaps.col("value");
    std::map<std::pair<int, int>, std::vector<std::pair<double, double>>>
        groups;  // (L, m) -> (g2, gap)
    for (const auto& r : ok_rows(gaps)) {
      if (r[std::size_t(gk)] != "neutral") continue;
      groups[{std::stoi(r[std::size_t(gL)]), std::stoi(r[std::size_t(gm)])}]
          .emplace_back(std::stod(r[std::size_t(gg)]),
                        std::stod(r[std::size_t(gv)]));
    }
    if (groups.empty()) {
      result.missing.push_back("gaps.csv has no neutral rows");
      return result;
    }
    std::string gp = "set xlabel 'g2'\nset ylabel 'neutral gap'\n";
    std::string plots;
    for (auto& [key, pts] : groups) {
      std::sort(pts.begin(), pts.end());
      std::string text;
      for (const auto& [x, y] : pts)
        text += format_g(x) + " " + format_g(y) + "\n";
      const std::string name = "fig5_L" + std::to_string(key.first) + "_m" +
                               std::to_string(key.second) + ".dat";
      emit_file(name, text);
      plots += plots.empty() ? "plot " : ", ";
      plots += "'" + name + "' with linespoints title 'L=" +
               std::to_string(key.first) + " m=" + std::to_string(key.second) +
               "'";
    }
    gp += plots + "\n";
    emit_file("fig5.gp", gp);
  } else {  // funDelta
    const CsvFile mid = parse_csv(store / "midpoints.csv");
    const int mL = mid.col("L"), md = mid.col("delta"), mv = mid.col("value");
    int biggest = 0;
    for (const auto& r : ok_rows(mid))
      biggest = std::max(biggest, std::stoi(r[std::size_t(mL)]));
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : ok_rows(mid))
      if (std::stoi(r[std::size_t(mL)]) == biggest)
        pts.emplace_back(std::stod(r[std::size_t(md)]),
                         std::stod(r[std::size_t(mv)]));
    if (pts.empty()) {
      result.missing.push_back("midpoints.csv has no usable rows");
      return result;
    }
    std::sort(pts.begin(), pts.end());
    std::string text;
    for (const auto& [x, y] : pts)
      text += format_g(x) + " " + format_g(y) + "\n";
    emit_file("funDelta.dat", text);
    emit_file("funDelta.gp",
              "set xlabel 'delta'\nset ylabel 'C_DW(L/2)'\n"
              "plot 'funDelta.dat' with linespoints title 'L=" +
                  std::to_string(biggest) + "'\n");
  }

  result.ok = true;
  return result;
}

}  // namespace ckchain
