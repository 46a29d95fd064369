#pragma once

#include <filesystem>
#include <string_view>

#include "json.hpp"

#include "adsense/harness.hpp"
#include "adsense/model.hpp"

namespace adsense {

std::string_view version();

nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const ExperimentSpec& spec);

/// Writes `body` plus the library version and active kernel ISA.
void write_manifest(const std::filesystem::path& file, nlohmann::json body);

}  // namespace adsense
