#pragma once

#include <string>

#include "lipscde/simulator.hpp"

namespace lipscde {

/// Writes one unit per line (JSON) to `<dir>/dataset.jsonl` and the manifest
/// (format version, config echo, split lists) to `<dir>/manifest.json`.
/// Writes are atomic: temp file then rename.
void write_dataset(const Dataset& ds, const std::string& dir);

/// Loads a dataset written by write_dataset; validates the format version.
Dataset read_dataset(const std::string& dir);

/// Config (de)serialization shared with the CLI's --config files.
std::string sim_config_to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const std::string& text);

}  // namespace lipscde
