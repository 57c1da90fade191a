#pragma once

#include <png.h>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffex {

// 8-bit RGB image, row-major, tightly packed.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<unsigned char> rgb;

  unsigned char& at(std::size_t x, std::size_t y, std::size_t c) {
    return rgb[(y * width + x) * 3 + c];
  }
  unsigned char at(std::size_t x, std::size_t y, std::size_t c) const {
    return rgb[(y * width + x) * 3 + c];
  }
};

inline void write_png(const std::string& path, const Image& img) {
  if (img.rgb.size() != img.width * img.height * 3)
    throw std::invalid_argument("write_png: pixel buffer does not match dimensions");
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&pi, path.c_str(), 0, img.rgb.data(), 0, nullptr))
    throw std::runtime_error("write_png: " + path + ": " + pi.message);
}

inline Image read_png(const std::string& path) {
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.c_str()))
    throw std::runtime_error("read_png: " + path + ": " + pi.message);
  pi.format = PNG_FORMAT_RGB;
  Image img;
  img.width = pi.width;
  img.height = pi.height;
  img.rgb.resize(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, img.rgb.data(), 0, nullptr)) {
    const std::string msg = pi.message;
    png_image_free(&pi);
    throw std::runtime_error("read_png: " + path + ": " + msg);
  }
  return img;
}

// Plane-major [0,1] doubles (all of R, then G, then B) from packed 8-bit RGB.
inline std::vector<double> image_to_unit(const Image& img) {
  const std::size_t hw = img.width * img.height;
  std::vector<double> v(3 * hw);
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) v[c * hw + p] = img.rgb[p * 3 + c] / 255.0;
  return v;
}

inline Image unit_to_image(const std::vector<double>& v, std::size_t width, std::size_t height) {
  const std::size_t hw = width * height;
  if (v.size() != 3 * hw) throw std::invalid_argument("unit_to_image: size mismatch");
  Image img;
  img.width = width;
  img.height = height;
  img.rgb.resize(3 * hw);
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const double x = std::min(1.0, std::max(0.0, v[c * hw + p]));
      img.rgb[p * 3 + c] = static_cast<unsigned char>(std::lround(x * 255.0));
    }
  return img;
}

// Scale maps between the [0,1] pixel convention and the [-1,1] model range.
inline std::vector<double> unit_to_model(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = 2.0 * v[i] - 1.0;
  return out;
}

inline std::vector<double> model_to_unit(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = std::min(1.0, std::max(0.0, 0.5 * (v[i] + 1.0)));
  return out;
}

}  // namespace diffex
