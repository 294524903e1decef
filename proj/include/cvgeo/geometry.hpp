#pragma once

// Flat-ground mapping between north-aligned equirectangular panoramas and
// metric ground coordinates, and the panorama -> bird's-eye-view transform.
//
// Frames: x = metres East, y = metres North, camera at the origin at height h.
// Azimuth θ is clockwise from North in [-π, π); elevation φ is 0 at the
// horizon, negative below. Pixel value (row i, col j) sits at u = j, v = i.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "cvgeo/error.hpp"
#include "cvgeo/image.hpp"
#include "cvgeo/common.hpp"

namespace cvgeo::geometry {

inline constexpr double kPi = std::numbers::pi;

struct SphericalCoord {
  double azimuth = 0.0;    // θ
  double elevation = 0.0;  // φ
};

struct PixelCoord {
  double u = 0.0;  // column
  double v = 0.0;  // row
};

/// A full-sphere panorama: width is exactly twice the height.
class EquirectImage {
 public:
  EquirectImage() = default;
  explicit EquirectImage(Image image) : image_(std::move(image)) {
    if (image_.width != 2 * image_.height) {
      throw ArgumentError("equirectangular image must be 2:1, got " + std::to_string(image_.width) + "x" +
                          std::to_string(image_.height));
    }
  }
  const Image& image() const { return image_; }
  int width() const { return image_.width; }
  int height() const { return image_.height; }
  int channels() const { return image_.channels; }

 private:
  Image image_;
};

struct BevImage {
  int size = 0;
  double ground_res = 0.0;  // metres per pixel
  double cam_height = 0.0;
  Image image;                      // size x size, row 0 = North edge
  std::vector<std::uint8_t> valid;  // 1 where the ray hits the ground

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v;
    return n;
  }
};

inline double wrap_azimuth(double theta) {
  theta = std::fmod(theta + kPi, 2.0 * kPi);
  if (theta < 0) theta += 2.0 * kPi;
  return theta - kPi;
}

inline SphericalCoord ground_to_sphere(double x, double y, double h) {
  if (!(h > 0)) throw ArgumentError("ground_to_sphere: camera height must be > 0");
  if (x == 0.0 && y == 0.0) throw ArgumentError("ground_to_sphere: azimuth undefined at the camera footprint");
  double theta = std::atan2(x, y);
  if (theta >= kPi) theta = -kPi;
  return {theta, -std::atan2(h, std::hypot(x, y))};
}

/// Inverse of ground_to_sphere for rays below the horizon.
inline Point2 sphere_to_ground(const SphericalCoord& c, double h) {
  if (!(c.elevation < 0)) throw ArgumentError("sphere_to_ground: ray does not hit the ground");
  const double rho = h / std::tan(-c.elevation);
  return {rho * std::sin(c.azimuth), rho * std::cos(c.azimuth)};
}

inline PixelCoord sphere_to_pixel(const SphericalCoord& c, int width, int height) {
  return {(c.azimuth + kPi) / (2.0 * kPi) * width, (kPi / 2.0 - c.elevation) / kPi * height};
}

inline SphericalCoord pixel_to_sphere(const PixelCoord& p, int width, int height) {
  return {wrap_azimuth(p.u / width * 2.0 * kPi - kPi), kPi / 2.0 - p.v / height * kPi};
}

/// Bilinear lookup; columns wrap across the 360° seam, rows clamp.
inline float bilinear_sample(const EquirectImage& pano, double u, double v, int channel = 0) {
  const Image& img = pano.image();
  const int w = img.width, h = img.height;
  v = std::clamp(v, 0.0, static_cast<double>(h - 1));
  const double uf = std::floor(u), vf = std::floor(v);
  const double au = u - uf, av = v - vf;
  const int c0 = static_cast<int>(((static_cast<long long>(uf) % w) + w) % w);
  const int c1 = (c0 + 1) % w;
  const int r0 = static_cast<int>(vf);
  const int r1 = std::min(r0 + 1, h - 1);
  const double top = (1 - au) * img.at(r0, c0, channel) + au * img.at(r0, c1, channel);
  const double bot = (1 - au) * img.at(r1, c0, channel) + au * img.at(r1, c1, channel);
  return static_cast<float>((1 - av) * top + av * bot);
}

/// Ground offset (metres) of the centre of BEV pixel (row, col).
inline Point2 bev_pixel_to_ground(int row, int col, int size, double ground_res) {
  return {(col - size / 2.0 + 0.5) * ground_res, (size / 2.0 - row - 0.5) * ground_res};
}

/// Inverse perspective mapping onto the flat ground plane at depth h.
inline BevImage pano_to_bev(const EquirectImage& pano, double cam_height, int size, double ground_res) {
  instrumentation().pano_to_bev.fetch_add(1, std::memory_order_relaxed);
  if (!(cam_height > 0) || size <= 0 || !(ground_res > 0)) {
    throw ArgumentError("pano_to_bev: height, size and ground resolution must be positive");
  }
  BevImage bev;
  bev.size = size;
  bev.ground_res = ground_res;
  bev.cam_height = cam_height;
  bev.image = Image(size, size, pano.channels());
  bev.valid.assign(static_cast<std::size_t>(size) * size, 0);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const Point2 g = bev_pixel_to_ground(i, j, size, ground_res);
      if (g.x == 0.0 && g.y == 0.0) continue;
      const SphericalCoord c = ground_to_sphere(g.x, g.y, cam_height);
      if (!(c.elevation < 0)) continue;
      const PixelCoord p = sphere_to_pixel(c, pano.width(), pano.height());
      for (int ch = 0; ch < pano.channels(); ++ch) bev.image.at(i, j, ch) = bilinear_sample(pano, p.u, p.v, ch);
      bev.valid[static_cast<std::size_t>(i) * size + j] = 1;
    }
  return bev;
}

}  // namespace cvgeo::geometry
