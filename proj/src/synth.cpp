#include "stlm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "stlm/png_io.hpp"
#include "stlm/rng.hpp"

namespace stlm {

namespace fs = std::filesystem;

Image blend_pseudo_anomaly(const Image& normal, const Image& anomaly,
                           const std::vector<uint8_t>& mask, float beta) {
  if (anomaly.c != normal.c || anomaly.h != normal.h || anomaly.w != normal.w ||
      mask.size() != size_t(normal.h) * normal.w)
    throw std::invalid_argument("blend: shape mismatch between N, A and M");
  if (beta < 0.f || beta > 1.f) throw std::invalid_argument("blend: beta outside [0,1]");
  Image out(normal.c, normal.h, normal.w);
  const size_t plane = size_t(normal.h) * normal.w;
  for (int ci = 0; ci < normal.c; ++ci) {
    const float* n = normal.v.data() + ci * plane;
    const float* a = anomaly.v.data() + ci * plane;
    float* o = out.v.data() + ci * plane;
    for (size_t i = 0; i < plane; ++i) {
      float m = float(mask[i]);
      o[i] = (1.f - m) * n[i] + (1.f - beta) * (m * a[i]) + beta * (m * n[i]);
    }
  }
  out.clamp01();
  return out;
}

std::pair<Image, std::vector<uint8_t>> cutpaste(const Image& normal, CutpasteMode mode,
                                                uint64_t seed) {
  const int h = normal.h, w = normal.w;
  if (h < 16 || w < 16) throw std::invalid_argument("cutpaste: image extent must be >= 16");
  Rng rng(seed);
  Image out = normal;
  std::vector<uint8_t> mask(size_t(h) * w, 0);

  if (mode == CutpasteMode::Patch) {
    double frac = rng.uniform(0.02, 0.15);
    double aspect = rng.uniform(0.5, 2.0);
    double area = frac * h * w;
    int ph = std::clamp(int(std::lround(std::sqrt(area * aspect))), 2, h - 1);
    int pw = std::clamp(int(std::lround(area / ph)), 2, w - 1);
    int sy = int(rng.uniform_int(0, h - ph));
    int sx = int(rng.uniform_int(0, w - pw));
    int dy = sy, dx = sx;
    while (dy == sy && dx == sx) {
      dy = int(rng.uniform_int(0, h - ph));
      dx = int(rng.uniform_int(0, w - pw));
    }
    for (int ci = 0; ci < normal.c; ++ci)
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
          out.at(ci, dy + y, dx + x) = normal.at(ci, sy + y, sx + x);
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) mask[size_t(dy + y) * w + dx + x] = 1;
  } else {
    const int ext = h < w ? h : w;
    double len = rng.uniform(0.10, 0.22) * ext;
    double wid = rng.uniform(2.0, std::min(12.0, ext / 4.0));
    double angle = rng.uniform(0.0, 3.141592653589793);
    double ca = std::cos(angle), sa = std::sin(angle);
    double cy = rng.uniform(len / 2 + 1, h - len / 2 - 1);
    double cx = rng.uniform(len / 2 + 1, w - len / 2 - 1);
    int offy = int(rng.uniform_int(-h / 4, h / 4));
    int offx = int(rng.uniform_int(-w / 4, w / 4));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double px = x - cx, py = y - cy;
        double u = px * ca + py * sa;
        double v = -px * sa + py * ca;
        if (std::abs(u) > len / 2 || std::abs(v) > wid / 2) continue;
        int sy = std::clamp(y + offy, 0, h - 1);
        int sx = std::clamp(x + offx, 0, w - 1);
        for (int ci = 0; ci < normal.c; ++ci) out.at(ci, y, x) = normal.at(ci, sy, sx);
        mask[size_t(y) * w + x] = 1;
      }
  }
  return {std::move(out), std::move(mask)};
}

namespace {

Image sinusoid_texture(int c, int h, int w, Rng& rng) {
  Image img(c, h, w);
  double period = rng.uniform(4.0, 16.0);
  double angle = rng.uniform(0.0, 3.141592653589793);
  double kx = std::cos(angle) / period, ky = std::sin(angle) / period;
  double phase = rng.uniform(0.0, 6.28318530718);
  for (int ci = 0; ci < c; ++ci) {
    double base = rng.uniform(0.25, 0.75), amp = rng.uniform(0.15, 0.25);
    double chphase = phase + ci * rng.uniform(0.0, 1.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(ci, y, x) =
            float(base + amp * std::sin(6.28318530718 * (kx * x + ky * y) + chphase));
  }
  img.clamp01();
  return img;
}

Image voronoi_texture(int c, int h, int w, Rng& rng) {
  int npts = int(rng.uniform_int(4, 12));
  std::vector<double> px(npts), py(npts);
  std::vector<float> color(size_t(npts) * c);
  for (int i = 0; i < npts; ++i) {
    px[i] = rng.uniform(0.0, w);
    py[i] = rng.uniform(0.0, h);
    for (int ci = 0; ci < c; ++ci) color[size_t(i) * c + ci] = float(rng.uniform(0.1, 0.9));
  }
  Image img(c, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int best = 0;
      double bd = 1e30;
      for (int i = 0; i < npts; ++i) {
        double d = (x - px[i]) * (x - px[i]) + (y - py[i]) * (y - py[i]);
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      float shade = float(1.0 - 0.2 * std::min(1.0, std::sqrt(bd) / (0.25 * (h + w))));
      for (int ci = 0; ci < c; ++ci)
        img.at(ci, y, x) = color[size_t(best) * c + ci] * shade;
    }
  img.clamp01();
  return img;
}

Image gradient_texture(int c, int h, int w, Rng& rng) {
  Image img(c, h, w);
  double angle = rng.uniform(0.0, 6.28318530718);
  double ca = std::cos(angle), sa = std::sin(angle);
  double span = std::abs(ca) * w + std::abs(sa) * h;
  for (int ci = 0; ci < c; ++ci) {
    double c0 = rng.uniform(0.05, 0.95), c1 = rng.uniform(0.05, 0.95);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double t = (ca * x + sa * y) / span + 0.5;
        t = std::clamp(t, 0.0, 1.0);
        img.at(ci, y, x) = float(c0 + (c1 - c0) * t);
      }
  }
  for (auto& v : img.v) v += float(rng.uniform(-0.02, 0.02));
  img.clamp01();
  return img;
}

}  // namespace

Image texture_bank_sample(int c, int h, int w, uint64_t seed) {
  Rng rng(seed);
  switch (rng.uniform_int(0, 2)) {
    case 0: return sinusoid_texture(c, h, w, rng);
    case 1: return voronoi_texture(c, h, w, rng);
    default: return gradient_texture(c, h, w, rng);
  }
}

Image anomaly_source_image(const AnomalySpec& spec, int c, int h, int w, uint64_t seed) {
  if (spec.source == AnomalySource::ProceduralTextureBank)
    return texture_bank_sample(c, h, w, seed);

  std::vector<fs::path> files;
  if (fs::is_directory(spec.image_dir))
    for (const auto& e : fs::directory_iterator(spec.image_dir))
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  if (files.empty())
    throw std::runtime_error("anomaly source bank is empty: " + spec.image_dir);
  std::sort(files.begin(), files.end());
  Rng rng(seed);
  Image img = read_png(files[size_t(rng.uniform_int(0, int64_t(files.size()) - 1))].string());
  if (img.c != c) {
    Image conv(c, img.h, img.w);
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
          if (img.c == 1) {
            conv.at(ci, y, x) = img.at(0, y, x);
          } else {
            float s = 0;
            for (int k = 0; k < img.c; ++k) s += img.at(k, y, x);
            conv.at(ci, y, x) = s / float(img.c);
          }
        }
    img = std::move(conv);
  }
  if (img.h != h || img.w != w) img = resize_bilinear(img, h, w);
  return img;
}

TrainingPair sample_training_pair(const ImageSample& normal, const AnomalySpec& spec,
                                  const PerlinParams& params, uint64_t seed) {
  if (normal.mask_nonempty())
    throw std::invalid_argument("sample_training_pair: input sample must be anomaly-free");

  TrainingPair pair;
  pair.clean = normal;
  pair.corrupted = normal;

  Rng rng(seed);
  bool activated = rng.bernoulli(spec.activation_prob);
  uint64_t source_seed = rng.next();
  float beta = float(rng.uniform(spec.beta_min, spec.beta_max));
  if (!activated) return pair;

  const Image& n = normal.image;
  if (spec.generator == AnomalyGenerator::PerlinBlend) {
    std::vector<uint8_t> mask;
    for (int attempt = 0; attempt < 8; ++attempt) {
      auto noise = perlin_noise(n.h, n.w, params, hash_combine(seed, 100 + attempt));
      mask = make_mask(noise, params.threshold);
      if (std::find(mask.begin(), mask.end(), uint8_t(1)) != mask.end()) break;
      mask.clear();
    }
    if (mask.empty()) return pair;  // fall back to clean
    Image a = anomaly_source_image(spec, n.c, n.h, n.w, source_seed);
    pair.corrupted.image = blend_pseudo_anomaly(n, a, mask, beta);
    pair.corrupted.mask = std::move(mask);
    pair.corrupted.label = 1;
  } else {
    auto mode = spec.generator == AnomalyGenerator::CutpastePatch ? CutpasteMode::Patch
                                                                  : CutpasteMode::Scar;
    auto [img, mask] = cutpaste(n, mode, source_seed);
    pair.corrupted.image = std::move(img);
    pair.corrupted.mask = std::move(mask);
    pair.corrupted.label = pair.corrupted.mask_nonempty() ? 1 : 0;
  }
  return pair;
}

const char* synth_class_name(SynthClass c) {
  switch (c) {
    case SynthClass::Stripes: return "stripes";
    case SynthClass::Blobs: return "blobs";
    default: return "checker";
  }
}

SynthClass synth_class_from_name(const std::string& name) {
  if (name == "stripes") return SynthClass::Stripes;
  if (name == "blobs") return SynthClass::Blobs;
  if (name == "checker") return SynthClass::Checker;
  throw std::invalid_argument("unknown synthetic class: " + name);
}

namespace {

Image normal_texture(SynthClass kind, int c, int h, int w, uint64_t seed) {
  Rng rng(seed);
  Image img(c, h, w);
  switch (kind) {
    case SynthClass::Stripes: {
      double period = rng.uniform(10.0, 14.0);
      double angle = 0.5236 + rng.uniform(-0.09, 0.09);  // ~30 degrees
      double kx = std::cos(angle) / period, ky = std::sin(angle) / period;
      double phase = rng.uniform(0.0, 6.28318530718);
      for (int ci = 0; ci < c; ++ci) {
        double base = 0.45 + 0.05 * ci + rng.uniform(-0.02, 0.02);
        double amp = 0.22 + rng.uniform(-0.02, 0.02);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            img.at(ci, y, x) =
                float(base + amp * std::sin(6.28318530718 * (kx * x + ky * y) + phase));
      }
      break;
    }
    case SynthClass::Blobs: {
      PerlinParams pp;
      pp.octaves = 2;
      pp.period_min = std::max(8, h / 5);
      pp.period_max = std::max(pp.period_min, h / 3);
      pp.persistence = 0.6;
      auto field = perlin_noise(h, w, pp, rng.next());
      float c0[3] = {0.30f, 0.35f, 0.45f}, c1[3] = {0.70f, 0.65f, 0.55f};
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            float t = field[size_t(y) * w + x];
            img.at(ci, y, x) = c0[ci % 3] + (c1[ci % 3] - c0[ci % 3]) * t;
          }
      break;
    }
    case SynthClass::Checker: {
      int tile = int(rng.uniform_int(8, 12));
      double offy = rng.uniform(0.0, tile), offx = rng.uniform(0.0, tile);
      float a = float(rng.uniform(0.30, 0.40)), b = float(rng.uniform(0.60, 0.70));
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            int ty = int((y + offy) / tile), tx = int((x + offx) / tile);
            img.at(ci, y, x) = ((ty + tx) & 1) ? a : b;
          }
      break;
    }
  }
  for (auto& v : img.v) v += float(rng.uniform(-0.01, 0.01));
  img.clamp01();
  return img;
}

}  // namespace

Dataset make_synthetic_dataset(SynthClass kind, int n_train, int n_test_good, int n_test_bad,
                               uint64_t seed, int channels, int size) {
  if (n_train < 1 || n_test_good < 1 || n_test_bad < 0)
    throw std::invalid_argument("make_synthetic_dataset: counts must be >= 1");
  Dataset ds;
  ds.class_name = synth_class_name(kind);
  ds.channels = channels;
  ds.height = ds.width = size;

  const uint64_t s_train = hash_combine(seed, 1), s_good = hash_combine(seed, 2),
                 s_bad = hash_combine(seed, 3), s_anom = hash_combine(seed, 4);

  char buf[64];
  for (int i = 0; i < n_train; ++i) {
    ImageSample s;
    s.image = normal_texture(kind, channels, size, size, hash_combine(s_train, i));
    s.mask.assign(size_t(size) * size, 0);
    std::snprintf(buf, sizeof buf, "train/good/%03d", i);
    s.id = buf;
    ds.train.push_back(std::move(s));
  }
  for (int i = 0; i < n_test_good; ++i) {
    ImageSample s;
    s.image = normal_texture(kind, channels, size, size, hash_combine(s_good, i));
    s.mask.assign(size_t(size) * size, 0);
    std::snprintf(buf, sizeof buf, "test/good/%03d", i);
    s.id = buf;
    ds.test.push_back(std::move(s));
  }

  // test defects are coherent single-octave blobs: boundary-dominated
  // speckle masks are ill-posed targets at desk resolution
  PerlinParams pp;
  pp.octaves = 1;
  pp.period_min = std::max(8, size / 3);
  pp.period_max = std::max(pp.period_min, size / 2);
  for (int i = 0; i < n_test_bad; ++i) {
    ImageSample s;
    s.image = normal_texture(kind, channels, size, size, hash_combine(s_bad, i));
    std::vector<uint8_t> mask;
    for (int attempt = 0;; ++attempt) {
      auto noise = perlin_noise(size, size, pp, hash_combine(hash_combine(s_bad, i), attempt));
      double thr = attempt < 8 ? pp.threshold : pp.threshold * 0.5;  // force nonempty
      mask = make_mask(noise, thr);
      if (std::find(mask.begin(), mask.end(), uint8_t(1)) != mask.end()) break;
    }
    Image a = texture_bank_sample(channels, size, size, hash_combine(s_anom, i));
    Rng rng = Rng::for_index(s_anom, 1000 + i);
    // test defects use a clearly visible opacity band
    float beta = float(rng.uniform(0.2, 0.7));
    s.image = blend_pseudo_anomaly(s.image, a, mask, beta);
    s.mask = std::move(mask);
    s.label = 1;
    s.defect = "blend";
    std::snprintf(buf, sizeof buf, "test/blend/%03d", i);
    s.id = buf;
    ds.test.push_back(std::move(s));
  }
  return ds;
}

}  // namespace stlm
