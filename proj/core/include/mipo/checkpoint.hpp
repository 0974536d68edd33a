#pragma once

#include <filesystem>
#include <string>

#include "mipo/model.hpp"

namespace mipo::lm {

// Self-describing binary checkpoint: magic, version, config, then named
// 64-bit parameter arrays, little-endian throughout. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const TinyLm& model);
TinyLm load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the file bytes, as a fixed-width hex string.
std::string checkpoint_hash(const std::filesystem::path& path);

}  // namespace mipo::lm
