#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "gyro/array.hpp"

namespace gyro {

// Flat binary container of named arrays: a versioned header followed by
// (name, shape, little-endian float64 payload) records. Used for the
// `checkpoints/step_<N>` files inside an experiment directory.
void save_checkpoint(const std::filesystem::path& path, const std::map<std::string, Array>& records);
std::map<std::string, Array> load_checkpoint(const std::filesystem::path& path);

}  // namespace gyro
