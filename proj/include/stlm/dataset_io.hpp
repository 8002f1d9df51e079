#pragma once

#include <string>

#include "stlm/image.hpp"

namespace stlm {

// MVTec-style tree:
//   root/train/good/*.png
//   root/test/<defect>/*.png           ("good" carries no masks)
//   root/ground_truth/<defect>/<stem>_mask.png
void write_dataset(const std::string& root, const Dataset& ds);
Dataset read_dataset(const std::string& root, int resize_to = 0);

}  // namespace stlm
