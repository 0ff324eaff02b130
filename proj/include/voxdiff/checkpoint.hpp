#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "voxdiff/io.hpp"
#include "voxdiff/swin_vnet.hpp"

namespace voxdiff {

class CheckpointError : public io::IoError {
 public:
  using io::IoError::IoError;
};

struct Checkpoint {
  SwinVnet model;
  std::size_t steps = 0;  // diffusion chain length N
  double slope = 0.0;
  std::string run_config;  // resolved key=value text
};

// "VXDF", version, config block, named f32 parameter records, run-config text.
std::string encode_checkpoint(const SwinVnet& model, std::size_t steps, double slope, std::string_view run_config);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const SwinVnet& model, std::size_t steps, double slope,
                     std::string_view run_config);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace voxdiff
