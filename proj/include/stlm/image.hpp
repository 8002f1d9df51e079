#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stlm {

// CHW float image, values in [0,1].
struct Image {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;

  Image() = default;
  Image(int c_, int h_, int w_, float fill = 0.f)
      : c(c_), h(h_), w(w_), v(size_t(c_) * h_ * w_, fill) {}

  float at(int ci, int y, int x) const { return v[(size_t(ci) * h + y) * w + x]; }
  float& at(int ci, int y, int x) { return v[(size_t(ci) * h + y) * w + x]; }
  size_t numel() const { return v.size(); }

  void clamp01() {
    for (auto& x : v) x = x < 0.f ? 0.f : (x > 1.f ? 1.f : x);
  }
};

Image resize_bilinear(const Image& src, int oh, int ow);

// One training/eval unit: image, binary ground-truth mask, image-level label.
struct ImageSample {
  Image image;
  std::vector<uint8_t> mask;  // h*w entries, 1 = anomalous pixel
  int label = 0;
  std::string id;
  std::string defect = "good";

  bool mask_nonempty() const {
    for (uint8_t m : mask)
      if (m) return true;
    return false;
  }
};

struct Dataset {
  std::string class_name;
  int channels = 0, height = 0, width = 0;
  std::vector<ImageSample> train;
  std::vector<ImageSample> test;
};

uint64_t image_digest(const Image& img);
uint64_t dataset_digest(const Dataset& ds);

}  // namespace stlm
