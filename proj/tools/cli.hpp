#ifndef ADASTAB_CLI_HPP
#define ADASTAB_CLI_HPP

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace adastab::cli {

/// Exit codes: 0 success, 1 usage/config/runtime error, 2 check violations.
constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kViolations = 2;

struct CommonOverrides {
  std::optional<std::string> out;
  std::optional<long long> runs;
  std::optional<long long> horizon;
  std::optional<unsigned long long> seed;
  std::optional<std::string> checks;  // comma-separated names
  std::optional<int> threads;
};

int cmd_run(const std::string& config_path, const CommonOverrides& ov,
            std::ostream& out, std::ostream& err);

/// target is either a config file (fresh run + probes) or a persisted batch
/// directory / record file (offline re-check).
int cmd_verify(const std::string& target, const CommonOverrides& ov,
               std::ostream& out, std::ostream& err);

int cmd_sweep(const std::string& config_path, const std::string& grid_path,
              const CommonOverrides& ov, std::ostream& out, std::ostream& err);

int cmd_report(const std::string& batch_dir, std::ostream& out,
               std::ostream& err);

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace adastab::cli

#endif  // ADASTAB_CLI_HPP
