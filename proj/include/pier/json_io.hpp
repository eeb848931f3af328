#pragma once

// JSON views of configuration structs, shared by the sidecar and the CLI.

#include "json.hpp"
#include "pier/data.hpp"
#include "pier/evaluation.hpp"
#include "pier/training.hpp"

namespace pier {

nlohmann::json to_json(const WorldConfig& config);
nlohmann::json to_json(const PointwiseConfig& config);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const OcpmConfig& config);
nlohmann::json to_json(const EvalConfig& config);

/// Overwrites only the keys present in `j`; unknown keys raise FormatError.
void update_from_json(WorldConfig& config, const nlohmann::json& j);
void update_from_json(PointwiseConfig& config, const nlohmann::json& j);
void update_from_json(TrainConfig& config, const nlohmann::json& j);
void update_from_json(OcpmConfig& config, const nlohmann::json& j);
void update_from_json(EvalConfig& config, const nlohmann::json& j);

}  // namespace pier
