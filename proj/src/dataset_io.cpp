#include "stlm/dataset_io.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <stdexcept>

#include "stlm/png_io.hpp"

namespace stlm {

namespace fs = std::filesystem;

void write_dataset(const std::string& root, const Dataset& ds) {
  fs::create_directories(fs::path(root) / "train" / "good");
  fs::create_directories(fs::path(root) / "test");

  auto path_for = [&](const ImageSample& s) {
    return fs::path(root) / (s.id + ".png");
  };
  for (const auto& s : ds.train) {
    fs::create_directories(path_for(s).parent_path());
    write_png(path_for(s).string(), s.image);
  }
  for (const auto& s : ds.test) {
    fs::create_directories(path_for(s).parent_path());
    write_png(path_for(s).string(), s.image);
    if (s.label) {
      Image m(1, s.image.h, s.image.w);
      for (size_t i = 0; i < s.mask.size(); ++i) m.v[i] = s.mask[i] ? 1.f : 0.f;
      fs::path stem = fs::path(s.id).filename();
      fs::path gt = fs::path(root) / "ground_truth" / s.defect /
                    (stem.string() + "_mask.png");
      fs::create_directories(gt.parent_path());
      write_png(gt.string(), m);
    }
  }
}

namespace {

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

Image load_image(const fs::path& p, int resize_to) {
  Image img = read_png(p.string());
  if (resize_to > 0 && (img.h != resize_to || img.w != resize_to))
    img = resize_bilinear(img, resize_to, resize_to);
  return img;
}

}  // namespace

Dataset read_dataset(const std::string& root, int resize_to) {
  Dataset ds;
  ds.class_name = fs::path(root).filename().string();

  auto train_dir = fs::path(root) / "train" / "good";
  if (!fs::is_directory(train_dir))
    throw std::runtime_error("dataset has no train/good directory: " + root);

  for (const auto& p : sorted_pngs(train_dir)) {
    ImageSample s;
    s.image = load_image(p, resize_to);
    s.mask.assign(size_t(s.image.h) * s.image.w, 0);
    s.id = "train/good/" + p.stem().string();
    ds.train.push_back(std::move(s));
  }
  if (ds.train.empty()) throw std::runtime_error("dataset has no training images: " + root);
  ds.channels = ds.train[0].image.c;
  ds.height = ds.train[0].image.h;
  ds.width = ds.train[0].image.w;

  auto test_root = fs::path(root) / "test";
  std::vector<fs::path> defect_dirs;
  if (fs::is_directory(test_root))
    for (const auto& e : fs::directory_iterator(test_root))
      if (e.is_directory()) defect_dirs.push_back(e.path());
  std::sort(defect_dirs.begin(), defect_dirs.end());

  for (const auto& dir : defect_dirs) {
    std::string defect = dir.filename().string();
    for (const auto& p : sorted_pngs(dir)) {
      ImageSample s;
      s.image = load_image(p, resize_to);
      s.defect = defect;
      s.id = "test/" + defect + "/" + p.stem().string();
      if (defect == "good") {
        s.mask.assign(size_t(s.image.h) * s.image.w, 0);
        s.label = 0;
      } else {
        fs::path gt = fs::path(root) / "ground_truth" / defect /
                      (p.stem().string() + "_mask.png");
        if (!fs::exists(gt))
          throw std::runtime_error("missing ground-truth mask: " + gt.string());
        int mh = 0, mw = 0;
        auto mask = read_png_mask(gt.string(), &mh, &mw);
        if (mh != s.image.h || mw != s.image.w) {
          // nearest-neighbour resample keeps the mask binary
          std::vector<uint8_t> rs(size_t(s.image.h) * s.image.w, 0);
          for (int y = 0; y < s.image.h; ++y)
            for (int x = 0; x < s.image.w; ++x) {
              int sy = std::min(mh - 1, int(int64_t(y) * mh / s.image.h));
              int sx = std::min(mw - 1, int(int64_t(x) * mw / s.image.w));
              rs[size_t(y) * s.image.w + x] = mask[size_t(sy) * mw + sx];
            }
          mask = std::move(rs);
        }
        s.mask = std::move(mask);
        s.label = s.mask_nonempty() ? 1 : 0;
      }
      ds.test.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace stlm
