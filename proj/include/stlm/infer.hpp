#pragma once

#include <string>

#include "stlm/metrics.hpp"
#include "stlm/model.hpp"
#include "stlm/train.hpp"

namespace stlm {

// Teacher-free forward pass producing the per-pixel anomaly map.
template <class T>
ScoreMap infer_one(Model<T>& model, const Image& image) {
  Graph<T> g;
  Binder<T> b(g);
  auto map = model.infer_map(g, b, image_tensor(g, image));
  ScoreMap out;
  out.h = map.shape()[0];
  out.w = map.shape()[1];
  out.v.assign(map.values().begin(), map.values().end());
  return out;
}

// Raw map dump: magic "STLMMAP0", u32 H, u32 W, little-endian f32 row-major.
void write_map_raw(const std::string& path, const ScoreMap& map);
ScoreMap read_map_raw(const std::string& path);

// Runs inference over every test sample and aggregates the metric suite.
// jobs > 1 evaluates images on independent graphs in parallel.
MetricsReport evaluate(Model<float>& model, const Dataset& ds, const EvalOptions& opt,
                       std::vector<ScoreMap>* maps_out = nullptr);

}  // namespace stlm
