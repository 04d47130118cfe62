#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "adastab/config_io.hpp"
#include "adastab/diagnostics.hpp"
#include "adastab/experiment.hpp"
#include "adastab/probes.hpp"

namespace adastab::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void apply_overrides(ExperimentConfig& cfg, const CommonOverrides& ov) {
  if (ov.out) cfg.output = *ov.out;
  if (ov.runs) cfg.runs = *ov.runs;
  if (ov.horizon) cfg.horizon = *ov.horizon;
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.threads) cfg.threads = *ov.threads;
  if (ov.checks) {
    cfg.checks.clear();
    std::stringstream ss(*ov.checks);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (!name.empty()) cfg.checks.insert(name);
    }
  }
  validate_config(cfg);
}

struct VerdictTable {
  std::vector<std::pair<std::string, bool>> rows;
  void add(const std::string& name, bool pass) { rows.emplace_back(name, pass); }
  bool all_pass() const {
    return std::all_of(rows.begin(), rows.end(),
                       [](const auto& r) { return r.second; });
  }
  void print(std::ostream& out) const {
    for (const auto& [name, pass] : rows) {
      out << (pass ? "PASS" : "FAIL") << "  " << name << "\n";
    }
  }
};

std::int64_t violations_of(const BatchResult& batch, const std::string& name) {
  std::int64_t total = 0;
  for (const auto& run : batch.runs) {
    auto it = run.checker_violations.find(name);
    if (it != run.checker_violations.end()) total += it->second;
  }
  return total;
}

bool check_enabled(const BatchResult& batch, const std::string& name) {
  for (const auto& run : batch.runs) {
    if (run.checker_violations.count(name)) return true;
  }
  return false;
}

void add_batch_verdicts(VerdictTable& table, const BatchResult& batch) {
  static const std::vector<std::pair<std::string, std::string>> rows = {
      {"identity", "step identity"},
      {"gamma_series", "gamma series bounds"},
      {"gamma_lambda", "gamma/lambda envelope"},
      {"smooth_descent", "smoothness descent"},
      {"adjacent_lyapunov", "adjacent lyapunov bound"},
      {"step_bound", "step norm bound"},
      {"gradient_energy", "gradient energy (2Lg)"},
      {"excursion_bands", "excursion bands"},
      {"rms_recursion", "rmsprop exact recursion"},
      {"rms_alpha", "rmsprop alpha monotone"},
      {"rms_nv", "rmsprop nv >= r1 S"},
      {"rms_omega", "rmsprop omega partial sum"},
  };
  for (const auto& [key, label] : rows) {
    if (check_enabled(batch, key)) {
      table.add(label, violations_of(batch, key) == 0);
    }
  }
  if (batch.diverged_runs > 0) {
    table.add("no diverged runs", false);
  }
}

int offline_verify_records(const fs::path& target, std::ostream& out,
                           std::ostream& err);

}  // namespace

int cmd_run(const std::string& config_path, const CommonOverrides& ov,
            std::ostream& out, std::ostream& err) {
  try {
    ExperimentConfig cfg = load_config_file(config_path);
    apply_overrides(cfg, ov);
    BatchResult batch = run_batch(cfg);
    out << "runs: " << batch.runs.size()
        << "  diverged: " << batch.diverged_runs
        << "  checker violations: " << batch.total_checker_violations << "\n";
    if (!cfg.output.empty()) {
      out << "outputs written to " << cfg.output << "\n";
    }
    return batch.total_checker_violations == 0 ? kOk : kViolations;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
}

namespace {

int verify_config_target(const std::string& config_path,
                         const CommonOverrides& ov, std::ostream& out) {
  ExperimentConfig cfg = load_config_file(config_path);
  apply_overrides(cfg, ov);
  cfg.checks.clear();  // verify runs every applicable checker
  BatchResult batch = run_batch(cfg);

  VerdictTable table;
  add_batch_verdicts(table, batch);

  const Objective obj = make_objective(cfg.problem_id, cfg.dim, cfg.problem_params);
  const NoiseModel noise = make_noise(cfg.noise_id, obj, cfg.noise_params);
  RandomStream probe_stream(SeedSpec{cfg.seed, 0, 2});

  const auto sm = probe_smoothness(obj, probe_stream, 4000, 3.0);
  table.add("assumption: L-smoothness (sampled)", sm.pass);

  Vector theta1 = cfg.theta1.empty()
                      ? Vector(static_cast<std::size_t>(cfg.dim), 0.0)
                      : Vector(cfg.theta1);
  const auto av = probe_affine_variance(obj, noise, theta1, 4000, probe_stream);
  table.add("assumption: affine variance (sampled)", av.pass);

  const auto ub = probe_unbiasedness(obj, noise, theta1, 4000, probe_stream);
  table.add("assumption: unbiasedness (sampled)", ub.pass);

  {
    const double base = std::max(2.0, obj.crit_radius + 0.75);
    const auto nf = probe_nonflatness(obj, probe_stream,
                                      {base, 2.0 * base, 4.0 * base}, 256);
    table.add("assumption: not asymptotically flat (sampled)", nf.pass);
  }

  {
    const auto sh = probe_sharpness(obj, noise, probe_stream, 20, 50);
    if (sh.applicable) {
      table.add("assumption: near-critical sharpness (sampled)", sh.pass);
    } else {
      out << "note: noise model declares no sharpness constants; "
             "near-critical sharpness not claimed\n";
    }
  }

  table.print(out);
  return table.all_pass() ? kOk : kViolations;
}

int offline_verify_records(const fs::path& target, std::ostream& out,
                           std::ostream& err) {
  std::vector<fs::path> record_files;
  std::optional<json> summary;

  fs::path summary_path;
  if (fs::is_directory(target)) {
    summary_path = target / "summary.json";
    for (const auto& entry : fs::directory_iterator(target)) {
      if (entry.path().extension() == ".csv") {
        record_files.push_back(entry.path());
      }
    }
    std::sort(record_files.begin(), record_files.end());
  } else {
    record_files.push_back(target);
    summary_path = target.parent_path() / "summary.json";
  }
  if (record_files.empty()) {
    err << "error: no record files under " << target << "\n";
    return kError;
  }
  if (fs::exists(summary_path)) {
    std::ifstream f(summary_path);
    try {
      json j;
      f >> j;
      summary = j;
    } catch (const std::exception& e) {
      err << "error: cannot parse " << summary_path << ": " << e.what() << "\n";
      return kError;
    }
  }

  std::int64_t identity_fail = 0, gamma_fail = 0, envelope_fail = 0,
               lyap_fail = 0, band_fail = 0, sigma_fail = 0;
  std::int64_t rms_nv_fail = 0, rms_alpha_fail = 0, rms_omega_fail = 0;
  bool have_constants = false;
  TheoryConstants constants;
  if (summary) {
    const auto& c = (*summary)["constants"];
    constants.h_a = c["h_a"].get<double>();
    constants.h_b = c["h_b"].get<double>();
    constants.delta_tau = c["delta_tau"].get<double>();
    constants.s0 = c["s0"].get<double>();
    have_constants = true;
  }

  bool any_rms = false;
  for (const auto& file : record_files) {
    std::ifstream f(file, std::ios::binary);
    if (!f) {
      err << "error: cannot open " << file << "\n";
      return kError;
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    std::vector<TrajectoryRecord> rows;
    try {
      rows = parse_record_csv(ss.str());
    } catch (const std::exception& e) {
      err << "error: " << file << ": " << e.what() << "\n";
      return kError;
    }
    if (rows.empty()) continue;
    if (rows.front().rms) {
      any_rms = true;
      double r1 = 0.0;
      if (summary && (*summary)["constants"].contains("r1")) {
        r1 = (*summary)["constants"]["r1"].get<double>();
      }
      const RmsRecordCheck rc = recheck_rmsprop_records(rows, r1);
      rms_nv_fail += rc.nv_bound_violations;
      rms_alpha_fail += rc.alpha_monotone_violations;
      rms_omega_fail += rc.omega_violations;
      continue;
    }
    const double s0 = rows.front().s_prev;
    double prev_sigma = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& rec = rows[i];
      if (!check_step_identity(rec).pass) identity_fail += 1;
      const bool env = rec.gamma <= 1.0 + 1e-12 &&
                       rec.lambda <= rec.gamma * (1.0 + 1e-12) &&
                       rec.lambda >= 0.5 * rec.gamma * (1.0 - 1e-12);
      if (!env) envelope_fail += 1;
      if (rec.sigma_gamma <= prev_sigma) sigma_fail += 1;
      prev_sigma = rec.sigma_gamma;
      if (have_constants && i + 1 < rows.size()) {
        if (!check_adjacent_lyapunov(rec, rows[i + 1], constants).pass) {
          lyap_fail += 1;
        }
      }
    }
    const GammaSeriesResult gs = check_gamma_series(rows, s0);
    if (!gs.pass) gamma_fail += 1;
    if (have_constants) {
      std::vector<double> ghat;
      ghat.reserve(rows.size());
      for (const auto& rec : rows) ghat.push_back(rec.ghat);
      if (!ghat.empty() && ghat.front() <= constants.delta_tau) {
        const auto exc = partition_stopping_times(ghat, constants.delta_tau);
        band_fail += check_excursion_bands(exc, ghat, constants.delta_tau);
      }
    }
  }

  VerdictTable table;
  if (any_rms) {
    table.add("rmsprop nv >= r1 S (records)", rms_nv_fail == 0);
    table.add("rmsprop alpha extremes monotone (records)",
              rms_alpha_fail == 0);
    table.add("rmsprop omega partial sum (records)", rms_omega_fail == 0);
    out << "note: the exact recursion uses per-coordinate v values, which "
           "records do not carry; it is checked online during runs\n";
  } else {
    table.add("step identity (records)", identity_fail == 0);
    table.add("gamma series bounds (records)", gamma_fail == 0);
    table.add("gamma/lambda envelope (records)", envelope_fail == 0);
    table.add("step-size sum increasing (records)", sigma_fail == 0);
    if (have_constants) {
      table.add("adjacent lyapunov bound (records)", lyap_fail == 0);
      table.add("excursion bands (records)", band_fail == 0);
    } else {
      out << "note: no summary.json next to the records; constants-dependent "
             "checks skipped\n";
    }
  }
  table.print(out);
  return table.all_pass() ? kOk : kViolations;
}

}  // namespace

int cmd_verify(const std::string& target, const CommonOverrides& ov,
               std::ostream& out, std::ostream& err) {
  try {
    const fs::path p(target);
    if (fs::is_directory(p) || p.extension() == ".csv") {
      return offline_verify_records(p, out, err);
    }
    return verify_config_target(target, ov, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
}

int cmd_sweep(const std::string& config_path, const std::string& grid_path,
              const CommonOverrides& ov, std::ostream& out, std::ostream& err) {
  try {
    ExperimentConfig base = load_config_file(config_path);
    apply_overrides(base, ov);
    if (base.output.empty()) {
      err << "error: sweep requires an output directory (config.output or "
             "--out)\n";
      return kError;
    }

    json grid;
    {
      std::ifstream f(grid_path);
      if (!f) {
        err << "error: cannot open grid file '" << grid_path << "'\n";
        return kError;
      }
      try {
        f >> grid;
      } catch (const std::exception& e) {
        err << "error: grid: " << e.what() << "\n";
        return kError;
      }
    }
    if (!grid.is_object()) {
      err << "error: grid must be a JSON object of name -> value list\n";
      return kError;
    }

    // Assigns one grid value onto a config; names address optimizer fields,
    // noise/problem params, or top-level scalars.
    auto assign = [&](ExperimentConfig& cfg, const std::string& name,
                      const json& value) {
      auto need_num = [&]() -> double {
        if (!value.is_number()) {
          throw std::invalid_argument("grid value for '" + name +
                                      "' must be a number");
        }
        return value.get<double>();
      };
      if (name == "optimizer.alpha0") cfg.alpha0 = need_num();
      else if (name == "optimizer.s0") cfg.s0 = need_num();
      else if (name == "optimizer.beta1") cfg.beta1 = need_num();
      else if (name == "optimizer.eps") cfg.eps = need_num();
      else if (name == "optimizer.v0") cfg.v0 = need_num();
      else if (name == "optimizer.lr") cfg.sgd_lr = need_num();
      else if (name == "horizon") cfg.horizon = static_cast<std::int64_t>(need_num());
      else if (name == "runs") cfg.runs = static_cast<std::int64_t>(need_num());
      else if (name == "seed") cfg.seed = static_cast<std::uint64_t>(need_num());
      else if (name.rfind("noise.", 0) == 0) {
        cfg.noise_params[name.substr(6)] = need_num();
      } else if (name.rfind("problem.", 0) == 0) {
        cfg.problem_params[name.substr(8)] = need_num();
      } else {
        throw std::invalid_argument("unknown sweep parameter '" + name + "'");
      }
    };

    std::vector<std::string> names;
    std::vector<std::vector<json>> values;
    for (const auto& [name, list] : grid.items()) {
      if (!list.is_array() || list.empty()) {
        err << "error: grid entry '" << name << "' must be a non-empty array\n";
        return kError;
      }
      names.push_back(name);
      values.push_back(std::vector<json>(list.begin(), list.end()));
    }

    const fs::path out_root(base.output);
    fs::create_directories(out_root);

    std::size_t total = 1;
    for (const auto& v : values) total *= v.size();

    json index = json::array();
    std::int64_t worst = kOk;
    std::vector<std::size_t> odo(names.size(), 0);
    for (std::size_t case_id = 0; case_id < total; ++case_id) {
      ExperimentConfig cfg = base;
      json assignment;
      for (std::size_t k = 0; k < names.size(); ++k) {
        assign(cfg, names[k], values[k][odo[k]]);
        assignment[names[k]] = values[k][odo[k]];
      }
      char dir_name[32];
      std::snprintf(dir_name, sizeof(dir_name), "case_%03zu", case_id);
      cfg.output = (out_root / dir_name).string();
      validate_config(cfg);
      BatchResult batch = run_batch(cfg);
      index.push_back({{"case", dir_name},
                       {"params", assignment},
                       {"diverged_runs", batch.diverged_runs},
                       {"checker_violations", batch.total_checker_violations}});
      if (batch.total_checker_violations > 0) worst = kViolations;
      out << dir_name << ": violations=" << batch.total_checker_violations
          << " diverged=" << batch.diverged_runs << "\n";
      // Advance the odometer (last name varies fastest).
      for (std::size_t k = names.size(); k-- > 0;) {
        if (++odo[k] < values[k].size()) break;
        odo[k] = 0;
      }
    }
    std::ofstream idx(out_root / "sweep_index.json",
                      std::ios::binary | std::ios::trunc);
    idx << index.dump(2) << "\n";
    out << "sweep index written to " << (out_root / "sweep_index.json") << "\n";
    return static_cast<int>(worst);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
}

int cmd_report(const std::string& batch_dir, std::ostream& out,
               std::ostream& err) {
  try {
    const fs::path dir(batch_dir);
    const fs::path summary_path = dir / "summary.json";
    if (!fs::exists(summary_path)) {
      err << "error: no summary.json under " << batch_dir << "\n";
      return kError;
    }
    json j;
    {
      std::ifstream f(summary_path);
      f >> j;
    }
    out << "batch: " << batch_dir << "\n";
    out << "problem: " << j["config"]["problem"]["id"].get<std::string>()
        << "  noise: " << j["config"]["noise"]["id"].get<std::string>()
        << "  optimizer: " << j["config"]["optimizer"]["id"].get<std::string>()
        << "\n";
    out << "runs: " << j["config"]["runs"].get<std::int64_t>()
        << "  horizon: " << j["config"]["horizon"].get<std::int64_t>()
        << "  seed: " << j["config"]["seed"].get<std::uint64_t>() << "\n";
    const auto& st = j["estimators"]["stability"];
    out << "stability: mean sup_g = " << st["mean_sup_g"].get<double>()
        << " +- " << st["ci95_half_width"].get<double>()
        << " (95% CI), max = " << st["max_sup_g"].get<double>() << "\n";
    if (j["diverged_runs"].get<std::int64_t>() > 0) {
      out << "diverged runs (excluded from estimators): "
          << j["diverged_runs"].get<std::int64_t>() << "\n";
    }
    if (!j["estimators"]["mse_curve"].empty()) {
      out << "mean |grad|^2 by checkpoint:\n";
      for (const auto& pt : j["estimators"]["mse_curve"]) {
        out << "  n=" << pt["n"].get<std::int64_t>() << "  "
            << pt["mean_grad_sq"].get<double>() << " +- "
            << pt["ci95_half_width"].get<double>() << "\n";
      }
    }
    const auto& as = j["estimators"]["as_probe"];
    out << "a.s. probe: fraction of runs with tail sup |grad| < "
        << as["threshold"].get<double>() << " is "
        << as["fraction"].get<double>() << "\n";
    if (j["estimators"].contains("lem_su")) {
      const auto& ls = j["estimators"]["lem_su"];
      out << "indicator-gated gamma sum: estimate "
          << ls["estimate"].get<double>() << " (se " << ls["se"].get<double>()
          << ") vs bound " << ls["bound"].get<double>()
          << (ls["pass"].get<bool>() ? "  [ok]" : "  [exceeded]") << "\n";
    }
    std::int64_t excursions = 0, reached = 0;
    for (const auto& run : j["runs"]) {
      excursions += run["excursion_count"].get<std::int64_t>();
      reached += run["reached_2delta_count"].get<std::int64_t>();
    }
    out << "excursions: " << excursions << " total, " << reached
        << " reached the doubled band\n";
    out << "checker verdicts:\n";
    for (const auto& [name, v] : j["checker_verdicts"].items()) {
      out << "  " << (v["pass"].get<bool>() ? "PASS" : "FAIL") << "  " << name
          << " (violations: " << v["violations"].get<std::int64_t>() << ")\n";
    }
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"adastab: adaptive-method stability and convergence lab"};
  app.require_subcommand(1);

  CommonOverrides ov;
  std::string config_path, target, grid_path, batch_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", ov.out, "Override output directory");
    sub->add_option("--runs", ov.runs, "Override run count");
    sub->add_option("--horizon", ov.horizon, "Override horizon");
    sub->add_option("--seed", ov.seed, "Override master seed");
    sub->add_option("--checks", ov.checks, "Comma-separated checker names");
    sub->add_option("--threads", ov.threads, "Worker thread cap");
  };

  CLI::App* run = app.add_subcommand("run", "Run an experiment batch");
  run->add_option("--config", config_path, "Config JSON path")->required();
  add_common(run);

  CLI::App* verify = app.add_subcommand(
      "verify", "Re-check lemma shadows on a config or persisted records");
  verify->add_option("--target", target,
                     "Config JSON, batch directory, or record CSV")
      ->required();
  add_common(verify);

  CLI::App* sweep = app.add_subcommand("sweep", "Cartesian parameter sweep");
  sweep->add_option("--config", config_path, "Config JSON path")->required();
  sweep->add_option("--grid", grid_path, "Grid JSON path")->required();
  add_common(sweep);

  CLI::App* report = app.add_subcommand("report", "Digest a persisted batch");
  report->add_option("--batch", batch_dir, "Batch directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kError;
  }

  if (run->parsed()) return cmd_run(config_path, ov, out, err);
  if (verify->parsed()) return cmd_verify(target, ov, out, err);
  if (sweep->parsed()) return cmd_sweep(config_path, grid_path, ov, out, err);
  if (report->parsed()) return cmd_report(batch_dir, out, err);
  err << "error: no subcommand\n";
  return kError;
}

}  // namespace adastab::cli
