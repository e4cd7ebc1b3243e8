#pragma once

// Weight checkpoints: <stem>.bin holds raw little-endian float64 tensors back
// to back; <stem>.json lists name, shape and byte offset for each tensor.

#include <filesystem>
#include <string>
#include <vector>

#include "fade/autodiff.hpp"

namespace fade::ad {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

void save_checkpoint(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& stem);

}  // namespace fade::ad
