#pragma once

// Versioned little-endian tensor container:
//   "SPF1" | version u32 | tensor count u32 |
//   per tensor: name length u32, UTF-8 name, rank u32, extents u64[rank],
//               raw IEEE-754 binary64 values.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sceneprior/autodiff.hpp"

namespace sceneprior {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(const std::vector<std::uint8_t>& bytes);

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

NamedTensor snapshot(const ad::ParamTensor& p);
const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);
// Copies values into p after checking the stored shape matches.
void restore(ad::ParamTensor& p, const NamedTensor& t);

}  // namespace sceneprior
