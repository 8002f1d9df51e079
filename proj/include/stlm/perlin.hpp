#pragma once

#include <cstdint>
#include <vector>

namespace stlm {

struct PerlinParams {
  int octaves = 2;
  int period_min = 16, period_max = 32;  // lattice cell size in pixels
  double persistence = 0.7;              // octave amplitude falloff, in (0,1]
  double threshold = 0.5;                // binarization level, in (0,1)
};

// Single-octave classic gradient noise with the given lattice period,
// un-normalized. Zero at every lattice corner by construction.
std::vector<float> perlin_raw(int h, int w, int period, uint64_t seed);

// Octave sum with persistence weighting, min-max normalized to [0,1].
// Deterministic in (params, seed). Throws if params.period_min exceeds the
// smaller image extent; the sampled base period is capped at that extent.
std::vector<float> perlin_noise(int h, int w, const PerlinParams& params, uint64_t seed);

// M(i,j) = 1 iff noise(i,j) > threshold.
std::vector<uint8_t> make_mask(const std::vector<float>& noise, double threshold);

}  // namespace stlm
