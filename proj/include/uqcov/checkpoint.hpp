#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "uqcov/nn.hpp"

namespace uqcov {

/// Flat binary model container: magic "UQCK", one version byte (0x01),
/// little-endian u32 tensor count, then per tensor a u16 name length, the
/// name bytes, u32 ndims, u32 dims, and 64-bit float data.
struct CheckpointTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

void write_checkpoint(const std::string& path, const std::vector<CheckpointTensor>& tensors);
std::vector<CheckpointTensor> read_checkpoint(const std::string& path);

/// Net parameters (one tensor per parameter block) plus named scalars.
void save_net(const std::string& path, nn::Net& net,
              const std::map<std::string, double>& scalars = {});
/// Restores parameters by block name into an already-built net of the same
/// architecture; returns the scalar entries.
std::map<std::string, double> load_net(const std::string& path, nn::Net& net);

}  // namespace uqcov
