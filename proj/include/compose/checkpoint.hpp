#pragma once

#include "compose/cvae.hpp"

#include <filesystem>

namespace compose {

inline constexpr int kCheckpointFormat = 1;

// JSON container: format version, model config, normalizer, every
// parameter tensor, AdamW moments and step count, epoch, RNG state and loss
// history. Doubles are written in shortest round-trip form, so a
// save/load cycle is bit-exact.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
// Throws IoError / ParseError / ValidationError.
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace compose
