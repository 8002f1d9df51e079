#include "stlm/image.hpp"

#include "stlm/checkpoint.hpp"
#include "stlm/kernels.hpp"

namespace stlm {

Image resize_bilinear(const Image& src, int oh, int ow) {
  Image dst(src.c, oh, ow);
  kernels::serial::bilinear_fwd(src.v.data(), dst.v.data(), src.c, src.h, src.w, oh, ow);
  return dst;
}

uint64_t image_digest(const Image& img) {
  uint64_t h = fnv1a(&img.c, sizeof img.c);
  h = fnv1a(&img.h, sizeof img.h, h);
  h = fnv1a(&img.w, sizeof img.w, h);
  return fnv1a(img.v.data(), img.v.size() * sizeof(float), h);
}

uint64_t dataset_digest(const Dataset& ds) {
  uint64_t h = fnv1a(ds.class_name.data(), ds.class_name.size());
  auto mix = [&h](const ImageSample& s) {
    uint64_t ih = image_digest(s.image);
    h = fnv1a(&ih, sizeof ih, h);
    h = fnv1a(s.mask.data(), s.mask.size(), h);
    h = fnv1a(&s.label, sizeof s.label, h);
    h = fnv1a(s.id.data(), s.id.size(), h);
  };
  for (const auto& s : ds.train) mix(s);
  for (const auto& s : ds.test) mix(s);
  return h;
}

}  // namespace stlm
