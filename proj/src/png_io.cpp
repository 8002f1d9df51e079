#include "stlm/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace stlm {

namespace {

uint8_t to_u8(float v) {
  v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return uint8_t(std::lround(v * 255.f));
}

[[noreturn]] void fail(const std::string& what, const std::string& path, const png_image& img) {
  throw std::runtime_error(what + " " + path + ": " + img.message);
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
  if (img.c != 1 && img.c != 3)
    throw std::runtime_error("write_png: unsupported channel count " + std::to_string(img.c));
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  pi.width = png_uint_32(img.w);
  pi.height = png_uint_32(img.h);
  pi.format = img.c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<uint8_t> buf(size_t(img.h) * img.w * img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ci = 0; ci < img.c; ++ci)
        buf[(size_t(y) * img.w + x) * img.c + ci] = to_u8(img.at(ci, y, x));
  if (!png_image_write_to_file(&pi, path.c_str(), 0, buf.data(), 0, nullptr))
    fail("png write failed", path, pi);
}

void write_png_gray16(const std::string& path, const std::vector<float>& scores, int h, int w) {
  if (int64_t(scores.size()) != int64_t(h) * w)
    throw std::runtime_error("write_png_gray16: size mismatch");
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  pi.width = png_uint_32(w);
  pi.height = png_uint_32(h);
  pi.format = PNG_FORMAT_LINEAR_Y;
  std::vector<uint16_t> buf(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    float v = scores[i];
    v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    buf[i] = uint16_t(std::lround(v * 65535.f));
  }
  if (!png_image_write_to_file(&pi, path.c_str(), 0, buf.data(), 0, nullptr))
    fail("png write failed", path, pi);
}

Image read_png(const std::string& path) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.c_str())) fail("png open failed", path, pi);
  const bool color = (pi.format & PNG_FORMAT_FLAG_COLOR) != 0;
  pi.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int c = color ? 3 : 1;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr))
    fail("png read failed", path, pi);
  Image img(c, int(pi.height), int(pi.width));
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ci = 0; ci < c; ++ci)
        img.at(ci, y, x) = float(buf[(size_t(y) * img.w + x) * c + ci]) / 255.f;
  return img;
}

std::vector<uint8_t> read_png_mask(const std::string& path, int* h, int* w) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.c_str())) fail("png open failed", path, pi);
  pi.format = PNG_FORMAT_GRAY;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr))
    fail("png read failed", path, pi);
  *h = int(pi.height);
  *w = int(pi.width);
  std::vector<uint8_t> mask(buf.size());
  for (size_t i = 0; i < buf.size(); ++i) mask[i] = buf[i] ? 1 : 0;
  return mask;
}

}  // namespace stlm
