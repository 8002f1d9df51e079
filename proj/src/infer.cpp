#include "stlm/infer.hpp"

#include <omp.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace stlm {

static_assert(std::endian::native == std::endian::little,
              "map format assumes a little-endian host");

void write_map_raw(const std::string& path, const ScoreMap& map) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open map for writing: " + path);
  os.write("STLMMAP0", 8);
  uint32_t h = uint32_t(map.h), w = uint32_t(map.w);
  os.write(reinterpret_cast<const char*>(&h), 4);
  os.write(reinterpret_cast<const char*>(&w), 4);
  os.write(reinterpret_cast<const char*>(map.v.data()),
           std::streamsize(map.v.size() * sizeof(float)));
}

ScoreMap read_map_raw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open map: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "STLMMAP0", 8) != 0)
    throw std::runtime_error("not a STLMMAP0 file: " + path);
  uint32_t h = 0, w = 0;
  is.read(reinterpret_cast<char*>(&h), 4);
  is.read(reinterpret_cast<char*>(&w), 4);
  ScoreMap map;
  map.h = int(h);
  map.w = int(w);
  map.v.resize(size_t(h) * w);
  is.read(reinterpret_cast<char*>(map.v.data()),
          std::streamsize(map.v.size() * sizeof(float)));
  if (!is) throw std::runtime_error("truncated map file: " + path);
  return map;
}

MetricsReport evaluate(Model<float>& model, const Dataset& ds, const EvalOptions& opt,
                       std::vector<ScoreMap>* maps_out) {
  if (ds.test.empty()) throw std::invalid_argument("evaluate: dataset has no test images");
  bool any_positive = false;
  for (const auto& s : ds.test) any_positive = any_positive || s.label;
  if (!any_positive) throw std::invalid_argument("evaluate: no positives in the test set");

  const int n = int(ds.test.size());
  std::vector<ScoreMap> maps(static_cast<size_t>(n));
  const int jobs = std::max(1, opt.jobs);
  if (jobs > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
    for (int i = 0; i < n; ++i) maps[size_t(i)] = infer_one(model, ds.test[size_t(i)].image);
  } else {
    for (int i = 0; i < n; ++i) maps[size_t(i)] = infer_one(model, ds.test[size_t(i)].image);
  }

  std::vector<std::string> ids, defects;
  std::vector<std::vector<uint8_t>> masks;
  std::vector<int> labels;
  for (const auto& s : ds.test) {
    ids.push_back(s.id);
    defects.push_back(s.defect);
    masks.push_back(s.mask);
    labels.push_back(s.label);
  }
  auto rep = compute_metrics(ids, defects, maps, masks, labels, opt);
  if (maps_out) *maps_out = std::move(maps);
  return rep;
}

}  // namespace stlm
