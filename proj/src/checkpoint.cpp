#include "stlm/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace stlm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'T', 'L', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, std::vector<NamedTensor> tensors) {
  std::sort(tensors.begin(), tensors.end(),
            [](const NamedTensor& a, const NamedTensor& b) { return a.name < b.name; });
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  put_u32(os, uint32_t(tensors.size()));
  for (const auto& t : tensors) {
    if (int64_t(t.data.size()) != shape_numel(t.shape))
      throw std::runtime_error("checkpoint tensor " + t.name + " has inconsistent size");
    put_u32(os, uint32_t(t.name.size()));
    os.write(t.name.data(), std::streamsize(t.name.size()));
    put_u32(os, uint32_t(t.shape.size()));
    for (int d : t.shape) put_u32(os, uint32_t(d));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             std::streamsize(t.data.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a STLMCKPT file: " + path);
  uint32_t version = get_u32(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  uint32_t count = get_u32(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    uint32_t name_len = get_u32(is);
    t.name.resize(name_len);
    is.read(t.name.data(), name_len);
    uint32_t rank = get_u32(is);
    t.shape.resize(rank);
    for (uint32_t r = 0; r < rank; ++r) t.shape[r] = int(get_u32(is));
    t.data.resize(size_t(shape_numel(t.shape)));
    is.read(reinterpret_cast<char*>(t.data.data()),
            std::streamsize(t.data.size() * sizeof(float)));
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    out.push_back(std::move(t));
  }
  return out;
}

uint64_t fnv1a(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for digest: " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof buf);
    h = fnv1a(buf, size_t(is.gcount()), h);
  }
  return h;
}

}  // namespace stlm
