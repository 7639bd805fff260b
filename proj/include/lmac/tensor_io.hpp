#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lmac/tensor.hpp"

namespace lmac {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Writes the "LMT1" container: magic, u32 count, then per tensor a u16
/// name length, UTF-8 name, u8 rank, u32 dims and little-endian float32 data.
void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);

/// Reads an "LMT1" container, preserving tensor order. Throws FormatError on
/// a bad magic or truncated payload.
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

/// Convenience lookup; throws FormatError when `name` is absent.
const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace lmac
