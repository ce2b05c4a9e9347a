#pragma once

#include <filesystem>

#include "stsm/tensor.hpp"

namespace stsm {

// Binary tensor file: 8-byte magic "STSMT5\0\1", five u64 little-endian dims
// (N,C,T,H,W), then N*C*T*H*W IEEE-754 doubles, little-endian, flat order.
void save_tensor(const Tensor5& t, const std::filesystem::path& path);
Tensor5 load_tensor(const std::filesystem::path& path);

}  // namespace stsm
