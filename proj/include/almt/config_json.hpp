#pragma once

#include <json.hpp>

#include "almt/metrics.hpp"
#include "almt/model.hpp"

// JSON (de)serialization of the configuration types. Parsing is strict:
// unknown keys are rejected with a ValidationError naming them.

namespace almt {

nlohmann::json to_json(const AblationFlags& flags);
AblationFlags ablation_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const BucketSpec& spec);
BucketSpec bucket_spec_from_json(const nlohmann::json& j);

// Raises ValidationError listing any key of j missing from the schema object.
void reject_unknown_keys(const nlohmann::json& j, const nlohmann::json& schema,
                         const std::string& path);

} // namespace almt
