#pragma once

#include <string>

#include "almt/model.hpp"

namespace almt {

// Versioned binary checkpoint: magic "ALMT", u32 format version, u32 config
// length + canonical config JSON, u32 parameter count, then each parameter
// as (u32 name length, name bytes, u32 rank, u32 extents x rank, f32
// little-endian payload) in registry order. Round trips are bit-exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ALMTModel& model, const std::string& path);

// Rebuilds the model from the embedded config and loads every parameter;
// name, order or shape mismatches raise FormatError.
ALMTModel load_checkpoint(const std::string& path);

} // namespace almt
