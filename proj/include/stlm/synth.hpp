#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stlm/image.hpp"
#include "stlm/perlin.hpp"

namespace stlm {

enum class AnomalySource { ProceduralTextureBank, ImageDirectory };
enum class AnomalyGenerator { PerlinBlend, CutpastePatch, CutpasteScar };
enum class CutpasteMode { Patch, Scar };

struct AnomalySpec {
  double activation_prob = 0.5;
  double beta_min = 0.15, beta_max = 1.0;  // opacity range
  AnomalySource source = AnomalySource::ProceduralTextureBank;
  AnomalyGenerator generator = AnomalyGenerator::PerlinBlend;
  std::string image_dir;  // used when source == ImageDirectory
};

// I_a = inv(M)*N + (1-beta)*(M*A) + beta*(M*N) per channel, then clamp to
// [0,1]. With M=0 or beta=1 the result reproduces N bitwise.
Image blend_pseudo_anomaly(const Image& normal, const Image& anomaly,
                           const std::vector<uint8_t>& mask, float beta);

// Copies a region of the image onto itself. Patch: axis-aligned rectangle
// covering 2-15% of the image. Scar: thin rotated strip. The mask marks
// pasted pixels.
std::pair<Image, std::vector<uint8_t>> cutpaste(const Image& normal, CutpasteMode mode,
                                                uint64_t seed);

// Procedural stand-in for an external texture dataset.
Image texture_bank_sample(int c, int h, int w, uint64_t seed);

// Anomaly source image A for Eq.-style blending, from the bank or from disk.
Image anomaly_source_image(const AnomalySpec& spec, int c, int h, int w, uint64_t seed);

struct TrainingPair {
  ImageSample clean;
  ImageSample corrupted;
};

// With probability activation_prob the corrupted sample carries a generated
// anomaly (mask + label 1); otherwise it equals the clean sample. Empty
// masks are regenerated with fresh sub-seeds up to 8 times, then the pair
// falls back to clean.
TrainingPair sample_training_pair(const ImageSample& normal, const AnomalySpec& spec,
                                  const PerlinParams& params, uint64_t seed);

enum class SynthClass { Stripes, Blobs, Checker };

const char* synth_class_name(SynthClass c);
SynthClass synth_class_from_name(const std::string& name);

// Desk-scale synthetic dataset: procedurally textured normal images plus
// test defects blended from a held-out texture stream.
Dataset make_synthetic_dataset(SynthClass kind, int n_train, int n_test_good, int n_test_bad,
                               uint64_t seed, int channels = 3, int size = 64);

}  // namespace stlm
