#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;
using namespace adastab;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("adastab_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << text;
  return p;
}

std::string basic_config(const std::string& extra = "") {
  return std::string(R"({
  "problem": {"id": "quadratic", "dim": 2},
  "noise": {"id": "affine_gaussian", "params": {"a": 0.5, "b": 0.5}},
  "optimizer": {"id": "adagrad_norm", "alpha0": 1.0, "s0": 1.0},
  "init": {"theta": [2.0, -1.0]},
  "horizon": 200,
  "runs": 3,
  "seed": 11)") +
         extra + "\n}\n";
}

}  // namespace

TEST_CASE("cmd_run: clean batch exits 0, bad config exits 1 naming the field") {
  TempDir tmp("run");
  const fs::path cfg = write_file(tmp.path / "cfg.json", basic_config());
  std::ostringstream out, err;
  CHECK(cli::cmd_run(cfg.string(), {}, out, err) == cli::kOk);

  const fs::path bad = write_file(
      tmp.path / "bad.json",
      R"({"problem":{"id":"quadratic"},"noise":{"id":"deterministic"},)"
      R"("optimizer":{"id":"adagrad_norm"},"horizon":0})");
  std::ostringstream out2, err2;
  CHECK(cli::cmd_run(bad.string(), {}, out2, err2) == cli::kError);
  CHECK(err2.str().find("horizon") != std::string::npos);

  std::ostringstream out3, err3;
  CHECK(cli::cmd_run((tmp.path / "missing.json").string(), {}, out3, err3) ==
        cli::kError);
}

TEST_CASE("cmd_run: injected identity fault exits 2") {
  TempDir tmp("fault");
  const fs::path cfg = write_file(
      tmp.path / "cfg.json",
      basic_config(R"(,
  "inject": {"kind": "corrupt_s", "run": 0, "step": 17, "scale": 1e-6})"));
  std::ostringstream out, err;
  CHECK(cli::cmd_run(cfg.string(), {}, out, err) == cli::kViolations);
}

TEST_CASE("cmd_verify on a config prints a verdict table and passes") {
  TempDir tmp("verify");
  const fs::path cfg = write_file(tmp.path / "cfg.json", basic_config());
  std::ostringstream out, err;
  const int rc = cli::cmd_verify(cfg.string(), {}, out, err);
  CHECK(rc == cli::kOk);
  const std::string text = out.str();
  CHECK(text.find("step identity") != std::string::npos);
  CHECK(text.find("gamma series") != std::string::npos);
  CHECK(text.find("adjacent lyapunov") != std::string::npos);
  CHECK(text.find("excursion bands") != std::string::npos);
  CHECK(text.find("affine variance") != std::string::npos);
  CHECK(text.find("FAIL") == std::string::npos);
}

TEST_CASE("cmd_verify flags the asymptotically flat anti-example") {
  TempDir tmp("flat");
  const fs::path cfg = write_file(tmp.path / "cfg.json", R"({
  "problem": {"id": "exp_flat", "dim": 1},
  "noise": {"id": "deterministic"},
  "optimizer": {"id": "adagrad_norm"},
  "init": {"theta": [0.5]},
  "horizon": 50,
  "runs": 1,
  "seed": 3
})");
  std::ostringstream out, err;
  const int rc = cli::cmd_verify(cfg.string(), {}, out, err);
  CHECK(rc == cli::kViolations);
  CHECK(out.str().find("FAIL  assumption: not asymptotically flat") !=
        std::string::npos);
}

TEST_CASE("cmd_verify re-checks persisted records and catches corruption") {
  TempDir tmp("records");
  const fs::path out_dir = tmp.path / "batch";
  const fs::path cfg = write_file(
      tmp.path / "cfg.json",
      basic_config(",\n  \"output\": \"" + out_dir.string() + "\""));
  std::ostringstream out, err;
  REQUIRE(cli::cmd_run(cfg.string(), {}, out, err) == cli::kOk);

  std::ostringstream vout, verr;
  CHECK(cli::cmd_verify(out_dir.string(), {}, vout, verr) == cli::kOk);
  CHECK(vout.str().find("FAIL") == std::string::npos);
  CHECK(vout.str().find("excursion bands (records)") != std::string::npos);

  // Corrupt one S value in run 0 and re-verify: identity must fail.
  const fs::path run0 = out_dir / "run_00000.csv";
  std::ifstream in(run0);
  std::string header, row1, rest((std::istreambuf_iterator<char>(in)), {});
  // Parse out the first two lines from the captured text.
  {
    std::istringstream ss(rest);
    std::getline(ss, header);
    std::getline(ss, row1);
    std::string remainder((std::istreambuf_iterator<char>(ss)), {});
    // Column 6 is S; scale it.
    std::vector<std::string> cols;
    std::stringstream rs(row1);
    std::string c;
    while (std::getline(rs, c, ',')) cols.push_back(c);
    REQUIRE(cols.size() == 12);
    cols[5] = "999.25";
    std::string corrupted = cols[0];
    for (std::size_t i = 1; i < cols.size(); ++i) corrupted += "," + cols[i];
    std::ofstream outf(run0, std::ios::binary | std::ios::trunc);
    outf << header << "\n" << corrupted << "\n" << remainder;
  }
  std::ostringstream vout2, verr2;
  CHECK(cli::cmd_verify(out_dir.string(), {}, vout2, verr2) ==
        cli::kViolations);
  CHECK(vout2.str().find("FAIL  step identity (records)") !=
        std::string::npos);

  // Unreadable target: error exit.
  std::ostringstream vout3, verr3;
  CHECK(cli::cmd_verify((tmp.path / "nope.csv").string(), {}, vout3, verr3) ==
        cli::kError);
}

TEST_CASE("cmd_sweep: 2x2 grid produces four cases and an index") {
  TempDir tmp("sweep");
  const fs::path out_dir = tmp.path / "sweep_out";
  const fs::path cfg = write_file(
      tmp.path / "cfg.json",
      basic_config(",\n  \"output\": \"" + out_dir.string() +
                   "\",\n  \"record_runs\": 0"));
  const fs::path grid = write_file(tmp.path / "grid.json", R"({
  "optimizer.alpha0": [0.1, 1.0],
  "optimizer.s0": [1.0, 4.0]
})");
  std::ostringstream out, err;
  CHECK(cli::cmd_sweep(cfg.string(), grid.string(), {}, out, err) == cli::kOk);
  for (const char* name : {"case_000", "case_001", "case_002", "case_003"}) {
    CHECK(fs::exists(out_dir / name / "summary.json"));
  }
  CHECK(fs::exists(out_dir / "sweep_index.json"));

  // Unknown parameter name is an error.
  const fs::path bad_grid =
      write_file(tmp.path / "bad_grid.json", R"({"optimizer.warp": [1]})");
  std::ostringstream out2, err2;
  CHECK(cli::cmd_sweep(cfg.string(), bad_grid.string(), {}, out2, err2) ==
        cli::kError);

  // Empty grid degenerates to a single run.
  const fs::path empty_grid = write_file(tmp.path / "empty.json", "{}");
  std::ostringstream out3, err3;
  CHECK(cli::cmd_sweep(cfg.string(), empty_grid.string(), {}, out3, err3) ==
        cli::kOk);
  CHECK(fs::exists(out_dir / "case_000" / "summary.json"));
}

TEST_CASE("step-bound sweep over alpha0 holds on every case") {
  TempDir tmp("alpha");
  const fs::path out_dir = tmp.path / "out";
  const fs::path cfg = write_file(
      tmp.path / "cfg.json",
      basic_config(",\n  \"output\": \"" + out_dir.string() +
                   "\",\n  \"record_runs\": 1"));
  const fs::path grid = write_file(tmp.path / "grid.json",
                                   R"({"optimizer.alpha0": [0.1, 1.0, 10.0]})");
  std::ostringstream out, err;
  REQUIRE(cli::cmd_sweep(cfg.string(), grid.string(), {}, out, err) == cli::kOk);
  const double alphas[3] = {0.1, 1.0, 10.0};
  for (int c = 0; c < 3; ++c) {
    char dir[16];
    std::snprintf(dir, sizeof(dir), "case_%03d", c);
    std::ifstream f(out_dir / dir / "run_00000.csv", std::ios::binary);
    REQUIRE(f.good());
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      // step_norm is column 11 (0-based 10).
      std::stringstream ss(line);
      std::string col;
      for (int i = 0; i <= 10; ++i) std::getline(ss, col, ',');
      CHECK(std::stod(col) <= alphas[c] * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("cmd_report digests a batch and flags divergence") {
  TempDir tmp("report");
  const fs::path out_dir = tmp.path / "batch";
  const fs::path cfg = write_file(
      tmp.path / "cfg.json",
      basic_config(",\n  \"output\": \"" + out_dir.string() +
                   "\",\n  \"checkpoints\": [10, 100]"));
  std::ostringstream out, err;
  REQUIRE(cli::cmd_run(cfg.string(), {}, out, err) == cli::kOk);
  std::ostringstream rout, rerr;
  CHECK(cli::cmd_report(out_dir.string(), rout, rerr) == cli::kOk);
  const std::string text = rout.str();
  CHECK(text.find("stability: mean sup_g") != std::string::npos);
  CHECK(text.find("mean |grad|^2 by checkpoint") != std::string::npos);
  CHECK(text.find("a.s. probe") != std::string::npos);
  CHECK(text.find("checker verdicts") != std::string::npos);

  std::ostringstream rout2, rerr2;
  CHECK(cli::cmd_report((tmp.path / "nothing").string(), rout2, rerr2) ==
        cli::kError);

  // A diverging SGD batch is reported with its excluded-run count.
  const fs::path div_dir = tmp.path / "diverged";
  const fs::path div_cfg = write_file(tmp.path / "div.json", R"({
  "problem": {"id": "quadratic", "dim": 1},
  "noise": {"id": "deterministic"},
  "optimizer": {"id": "sgd", "lr": 2.5},
  "init": {"theta": [1.0]},
  "horizon": 20000,
  "runs": 2,
  "seed": 5,
  "output": ")" + div_dir.string() + R"("
})");
  std::ostringstream dout, derr;
  cli::cmd_run(div_cfg.string(), {}, dout, derr);
  std::ostringstream rout3, rerr3;
  CHECK(cli::cmd_report(div_dir.string(), rout3, rerr3) == cli::kOk);
  CHECK(rout3.str().find("diverged runs") != std::string::npos);
}

TEST_CASE("run_cli parses subcommands and overrides") {
  TempDir tmp("argv");
  const fs::path cfg = write_file(tmp.path / "cfg.json", basic_config());
  const std::string cfg_arg = cfg.string();
  const char* argv[] = {"adastab", "run",        "--config", cfg_arg.c_str(),
                        "--runs",  "2",          "--horizon", "50",
                        "--seed",  "99",         "--threads", "2",
                        "--checks", "identity,gamma_series"};
  std::ostringstream out, err;
  CHECK(cli::run_cli(14, argv, out, err) == cli::kOk);

  const char* bad[] = {"adastab", "frobnicate"};
  std::ostringstream out2, err2;
  CHECK(cli::run_cli(2, bad, out2, err2) == cli::kError);
}

TEST_CASE("cmd_verify covers RMSProp lemmas online and from records") {
  TempDir tmp("rms");
  const fs::path out_dir = tmp.path / "batch";
  const fs::path cfg = write_file(tmp.path / "cfg.json", R"({
  "problem": {"id": "double_well", "dim": 2, "params": {"box": 6.0}},
  "noise": {"id": "affine_gaussian", "params": {"a": 0.5, "b": 0.5}},
  "optimizer": {"id": "rmsprop", "beta1": 0.9, "eps": 1e-8, "v0": 1e-3},
  "init": {"theta": [1.0, -1.0]},
  "horizon": 2000,
  "runs": 3,
  "seed": 21,
  "output": ")" + out_dir.string() + R"("
})");
  std::ostringstream out, err;
  const int rc = cli::cmd_verify(cfg.string(), {}, out, err);
  CHECK(rc == cli::kOk);
  CHECK(out.str().find("rmsprop exact recursion") != std::string::npos);
  CHECK(out.str().find("rmsprop alpha monotone") != std::string::npos);
  CHECK(out.str().find("rmsprop nv >= r1 S") != std::string::npos);
  CHECK(out.str().find("rmsprop omega partial sum") != std::string::npos);
  CHECK(out.str().find("FAIL") == std::string::npos);

  // Offline re-check of the persisted RMSProp records.
  std::ostringstream out2, err2;
  REQUIRE(cli::cmd_run(cfg.string(), {}, out2, err2) == cli::kOk);
  std::ostringstream vout, verr;
  CHECK(cli::cmd_verify(out_dir.string(), {}, vout, verr) == cli::kOk);
  CHECK(vout.str().find("rmsprop nv >= r1 S (records)") != std::string::npos);
  CHECK(vout.str().find("FAIL") == std::string::npos);
}
