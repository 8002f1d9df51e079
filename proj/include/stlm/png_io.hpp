#pragma once

#include <string>
#include <vector>

#include "stlm/image.hpp"

namespace stlm {

// 8-bit grayscale (c==1) or RGB (c==3), values clamped to [0,1] then scaled.
void write_png(const std::string& path, const Image& img);

// 16-bit grayscale; score*65535 clamped. Used for anomaly-map dumps.
void write_png_gray16(const std::string& path, const std::vector<float>& scores, int h, int w);

// Reads 8- or 16-bit gray/RGB(A) PNG as 1- or 3-channel float in [0,1].
Image read_png(const std::string& path);

// Ground-truth mask: any nonzero pixel is anomalous.
std::vector<uint8_t> read_png_mask(const std::string& path, int* h, int* w);

}  // namespace stlm
