#pragma once

#include <filesystem>
#include <string>

#include "parastab/io.hpp"
#include "parastab/model.hpp"

namespace parastab {

/// Paper-default configuration profile shared by all experiments.
Config paper_profile();

/// Resolves a coefficient specification: a preset name, or "table:<path>"
/// pointing at a JSON grid {"t": [...], "x": [...], "values": [[...]]}.
CoefficientField coefficient_from_spec(const std::string& spec);

/// Executes a named experiment preset (example1, example2, switching-demo,
/// stability-check), writing CSV/JSON artifacts and the run manifest into
/// out_dir. Overrides are validated against the known key set.
RunManifest run_experiment(const std::string& name, const Config& overrides,
                           const std::filesystem::path& out_dir);

}  // namespace parastab
