#pragma once

#include <string>

#include "psm/model.hpp"
#include "psm/optim.hpp"

namespace psm {

// Binary checkpoint: magic "PSMB", u32 format version, u32 record count, then
// records {u32 name length, UTF-8 name, u8 dtype (0 f32, 1 f64), u8 rank,
// u32 dims, raw little-endian values}. Parameter names are the dotted paths
// from Model::collect; optimizer state rides along as adam.step / adam.m.* /
// adam.v.* records.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, Model& model, const AdamState* opt);
// opt may be null to skip optimizer state; throws CheckpointError on bad
// magic, unknown version, unknown names, or shape mismatches.
Model load_checkpoint(const std::string& path, AdamState* opt);

}  // namespace psm
