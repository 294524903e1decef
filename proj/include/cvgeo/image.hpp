#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "cvgeo/error.hpp"

namespace cvgeo {

/// Row-major, channel-interleaved float image with values in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c = 1, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {
    if (w <= 0 || h <= 0 || (c != 1 && c != 3)) {
      throw ArgumentError("image: invalid dimensions " + std::to_string(w) + "x" + std::to_string(h) + "x" +
                          std::to_string(c));
    }
  }

  std::size_t index(int row, int col, int ch = 0) const {
    return (static_cast<std::size_t>(row) * width + col) * channels + ch;
  }
  float& at(int row, int col, int ch = 0) { return data[index(row, col, ch)]; }
  float at(int row, int col, int ch = 0) const { return data[index(row, col, ch)]; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Mean absolute difference between two same-sized images.
inline double mean_abs_diff(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw ShapeError("mean_abs_diff: image sizes differ");
  }
  double acc = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::abs(double(a.data[i]) - b.data[i]);
  return a.data.empty() ? 0.0 : acc / static_cast<double>(a.data.size());
}

/// Normalized cross-correlation of two equally sized sample sets.
inline double normalized_cross_correlation(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("ncc: sample sets differ in size");
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0 || sbb == 0) return (saa == sbb) ? 1.0 : 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Reads an 8-bit PNG as grayscale (channels = 1) or RGB (channels = 3).
inline Image read_png(const std::string& path, int channels = 1) {
  if (channels != 1 && channels != 3) throw ArgumentError("read_png: channels must be 1 or 3");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG '" + path + "': " + img.message);
  }
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG '" + path + "': " + img.message);
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), channels);
  for (std::size_t i = 0; i < buf.size(); ++i) out.data[i] = buf[i] / 255.0f;
  return out;
}

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline void write_png(const std::string& path, const Image& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(image.data.size());
  std::transform(image.data.begin(), image.data.end(), buf.begin(), to_byte);
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path + "': " + img.message);
  }
}

/// Round-trips through 8-bit quantization, matching what a PNG stores.
inline Image quantize8(Image image) {
  for (auto& v : image.data) v = to_byte(v) / 255.0f;
  return image;
}

}  // namespace cvgeo
