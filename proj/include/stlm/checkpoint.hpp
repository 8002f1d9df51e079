#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stlm/tensor.hpp"

namespace stlm {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

// Checkpoint container: magic "STLMCKPT", u32 version=1, u32 tensor count;
// per tensor: u32 name length, UTF-8 name, u32 rank, u32 dims...,
// little-endian f32 payload row-major. Tensors are written sorted by name so
// identical weights produce identical files.
void save_checkpoint(const std::string& path, std::vector<NamedTensor> tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull);
uint64_t file_digest(const std::string& path);

}  // namespace stlm
