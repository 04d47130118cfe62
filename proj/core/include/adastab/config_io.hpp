#ifndef ADASTAB_CONFIG_IO_HPP
#define ADASTAB_CONFIG_IO_HPP

#include <string>

#include "adastab/experiment.hpp"

namespace adastab {

/// Parses an experiment config from JSON text. Unknown keys are errors: a
/// typo in an experiment file must fail loudly, not silently change the run.
/// Throws std::invalid_argument with the offending key / field in the message.
ExperimentConfig parse_config_json(const std::string& text);

ExperimentConfig load_config_file(const std::string& path);

/// Round-trip serialization of a config (matches the summary's config echo).
std::string config_json(const ExperimentConfig& cfg);

}  // namespace adastab

#endif  // ADASTAB_CONFIG_IO_HPP
