#include "adastab/config_io.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace adastab {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& what) {
  throw std::invalid_argument("config: " + what);
}

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
  if (!obj.is_object()) fail(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) fail("unknown key '" + where + "." + key + "'");
  }
}

std::map<std::string, double> number_map(const json& obj,
                                         const std::string& where) {
  std::map<std::string, double> out;
  if (!obj.is_object()) fail(where + " must be an object of numbers");
  for (const auto& [key, val] : obj.items()) {
    if (!val.is_number()) fail(where + "." + key + " must be a number");
    out[key] = val.get<double>();
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("not valid JSON: ") + e.what());
  }
  require_keys(j, "$",
               {"problem", "noise", "optimizer", "init", "horizon", "runs",
                "seed", "checkpoints", "checks", "delta_tau_override",
                "sigma0_floor", "lemsu_delta", "as_threshold", "output",
                "record_runs", "threads", "inject"});

  ExperimentConfig cfg;

  if (!j.contains("problem")) fail("missing 'problem'");
  require_keys(j["problem"], "problem", {"id", "dim", "params"});
  if (!j["problem"].contains("id") || !j["problem"]["id"].is_string()) {
    fail("problem.id must be a string");
  }
  cfg.problem_id = j["problem"]["id"].get<std::string>();
  if (j["problem"].contains("dim")) {
    if (!j["problem"]["dim"].is_number_integer()) fail("problem.dim must be an integer");
    cfg.dim = j["problem"]["dim"].get<int>();
  }
  if (j["problem"].contains("params")) {
    cfg.problem_params = number_map(j["problem"]["params"], "problem.params");
  }

  if (!j.contains("noise")) fail("missing 'noise'");
  require_keys(j["noise"], "noise", {"id", "params"});
  if (!j["noise"].contains("id") || !j["noise"]["id"].is_string()) {
    fail("noise.id must be a string");
  }
  cfg.noise_id = j["noise"]["id"].get<std::string>();
  if (j["noise"].contains("params")) {
    cfg.noise_params = number_map(j["noise"]["params"], "noise.params");
  }

  if (!j.contains("optimizer")) fail("missing 'optimizer'");
  const json& opt = j["optimizer"];
  require_keys(opt, "optimizer",
               {"id", "alpha0", "s0", "beta1", "eps", "v0", "lr"});
  if (!opt.contains("id") || !opt["id"].is_string()) {
    fail("optimizer.id must be a string");
  }
  const std::string opt_id = opt["id"].get<std::string>();
  if (opt_id == "adagrad_norm") {
    cfg.optimizer = OptimizerKind::adagrad_norm;
  } else if (opt_id == "rmsprop") {
    cfg.optimizer = OptimizerKind::rmsprop;
  } else if (opt_id == "sgd") {
    cfg.optimizer = OptimizerKind::sgd;
  } else {
    fail("optimizer.id must be adagrad_norm | rmsprop | sgd, got '" + opt_id +
         "'");
  }
  auto num = [&](const json& o, const char* key, double& into) {
    if (o.contains(key)) {
      if (!o[key].is_number()) fail(std::string("optimizer.") + key);
      into = o[key].get<double>();
    }
  };
  num(opt, "alpha0", cfg.alpha0);
  num(opt, "s0", cfg.s0);
  num(opt, "beta1", cfg.beta1);
  num(opt, "eps", cfg.eps);
  num(opt, "v0", cfg.v0);
  num(opt, "lr", cfg.sgd_lr);

  if (j.contains("init")) {
    require_keys(j["init"], "init", {"theta"});
    if (!j["init"].contains("theta") || !j["init"]["theta"].is_array()) {
      fail("init.theta must be an array of numbers");
    }
    for (const auto& v : j["init"]["theta"]) {
      if (!v.is_number()) fail("init.theta entries must be numbers");
      cfg.theta1.push_back(v.get<double>());
    }
  }

  if (!j.contains("horizon")) fail("missing 'horizon'");
  if (!j["horizon"].is_number_integer()) fail("horizon must be an integer");
  cfg.horizon = j["horizon"].get<std::int64_t>();
  if (j.contains("runs")) {
    if (!j["runs"].is_number_integer()) fail("runs must be an integer");
    cfg.runs = j["runs"].get<std::int64_t>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
      fail("seed must be an unsigned integer");
    }
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("checkpoints")) {
    if (!j["checkpoints"].is_array()) fail("checkpoints must be an array");
    for (const auto& v : j["checkpoints"]) {
      if (!v.is_number_integer()) fail("checkpoints entries must be integers");
      cfg.checkpoints.push_back(v.get<std::int64_t>());
    }
  }
  if (j.contains("checks")) {
    if (!j["checks"].is_array()) fail("checks must be an array of names");
    for (const auto& v : j["checks"]) {
      if (!v.is_string()) fail("checks entries must be strings");
      cfg.checks.insert(v.get<std::string>());
    }
  }
  if (j.contains("delta_tau_override")) {
    if (!j["delta_tau_override"].is_number()) {
      fail("delta_tau_override must be a number");
    }
    cfg.delta_tau_override = j["delta_tau_override"].get<double>();
  }
  auto top_num = [&](const char* key, double& into) {
    if (j.contains(key)) {
      if (!j[key].is_number()) fail(std::string(key) + " must be a number");
      into = j[key].get<double>();
    }
  };
  top_num("sigma0_floor", cfg.sigma0_floor);
  top_num("lemsu_delta", cfg.lemsu_delta);
  top_num("as_threshold", cfg.as_threshold);
  if (j.contains("output")) {
    if (!j["output"].is_string()) fail("output must be a string path");
    cfg.output = j["output"].get<std::string>();
  }
  if (j.contains("record_runs")) {
    if (!j["record_runs"].is_number_integer()) {
      fail("record_runs must be an integer");
    }
    cfg.record_runs = j["record_runs"].get<std::int64_t>();
  }
  if (j.contains("threads")) {
    if (!j["threads"].is_number_integer()) fail("threads must be an integer");
    cfg.threads = j["threads"].get<int>();
  }
  if (j.contains("inject")) {
    require_keys(j["inject"], "inject", {"kind", "run", "step", "scale"});
    if (!j["inject"].contains("kind") ||
        j["inject"]["kind"].get<std::string>() != "corrupt_s") {
      fail("inject.kind must be 'corrupt_s'");
    }
    FaultInjection inj;
    if (j["inject"].contains("run")) inj.run = j["inject"]["run"].get<std::int64_t>();
    if (j["inject"].contains("step")) inj.step = j["inject"]["step"].get<std::int64_t>();
    if (j["inject"].contains("scale")) inj.scale = j["inject"]["scale"].get<double>();
    cfg.inject = inj;
  }

  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw std::invalid_argument("config: cannot open file '" + path + "'");
  }
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_json(ss.str());
}

std::string config_json(const ExperimentConfig& cfg) {
  // Reuse the summary echo so the two stay in sync.
  json j;
  j["problem"] = {{"id", cfg.problem_id}, {"dim", cfg.dim}};
  if (!cfg.problem_params.empty()) j["problem"]["params"] = cfg.problem_params;
  j["noise"] = {{"id", cfg.noise_id}};
  if (!cfg.noise_params.empty()) j["noise"]["params"] = cfg.noise_params;
  switch (cfg.optimizer) {
    case OptimizerKind::adagrad_norm:
      j["optimizer"] = {{"id", "adagrad_norm"}, {"alpha0", cfg.alpha0},
                        {"s0", cfg.s0}};
      break;
    case OptimizerKind::rmsprop:
      j["optimizer"] = {{"id", "rmsprop"}, {"beta1", cfg.beta1},
                        {"eps", cfg.eps}, {"v0", cfg.v0}};
      break;
    case OptimizerKind::sgd:
      j["optimizer"] = {{"id", "sgd"}, {"lr", cfg.sgd_lr}};
      break;
  }
  if (!cfg.theta1.empty()) j["init"] = {{"theta", cfg.theta1}};
  j["horizon"] = cfg.horizon;
  j["runs"] = cfg.runs;
  j["seed"] = cfg.seed;
  if (!cfg.checkpoints.empty()) j["checkpoints"] = cfg.checkpoints;
  if (!cfg.checks.empty()) j["checks"] = cfg.checks;
  if (cfg.delta_tau_override) j["delta_tau_override"] = *cfg.delta_tau_override;
  j["sigma0_floor"] = cfg.sigma0_floor;
  j["lemsu_delta"] = cfg.lemsu_delta;
  j["as_threshold"] = cfg.as_threshold;
  if (!cfg.output.empty()) j["output"] = cfg.output;
  j["record_runs"] = cfg.record_runs;
  j["threads"] = cfg.threads;
  if (cfg.inject) {
    j["inject"] = {{"kind", "corrupt_s"}, {"run", cfg.inject->run},
                   {"step", cfg.inject->step}, {"scale", cfg.inject->scale}};
  }
  return j.dump(2) + "\n";
}

}  // namespace adastab
