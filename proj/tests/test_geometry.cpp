#include <gtest/gtest.h>

#include <cmath>

#include "cvgeo/geometry.hpp"
#include "cvgeo/noise.hpp"
#include "cvgeo/worldgen.hpp"

namespace cvgeo::geometry {
namespace {

TEST(GroundToSphere, NorthAtFortyFiveDegrees) {
  const auto c = ground_to_sphere(0.0, 3.0, 3.0);
  EXPECT_DOUBLE_EQ(c.azimuth, 0.0);
  EXPECT_NEAR(c.elevation, -kPi / 4, 1e-15);
}

TEST(GroundToSphere, DueEast) {
  const auto c = ground_to_sphere(3.0, 0.0, 3.0);
  EXPECT_NEAR(c.azimuth, kPi / 2, 1e-15);
  EXPECT_NEAR(c.elevation, -kPi / 4, 1e-15);
}

TEST(GroundToSphere, DueSouthWrapsToMinusPi) {
  const auto c = ground_to_sphere(0.0, -1.0, 1e-9);
  EXPECT_DOUBLE_EQ(c.azimuth, -kPi);
  EXPECT_LT(c.elevation, 0.0);
  EXPECT_GT(c.elevation, -1e-8);
}

TEST(GroundToSphere, Errors) {
  EXPECT_THROW(ground_to_sphere(0.0, 0.0, 2.0), ArgumentError);
  EXPECT_THROW(ground_to_sphere(1.0, 0.0, 0.0), ArgumentError);
}

TEST(SphereToPixel, Conventions) {
  const auto p = sphere_to_pixel({0.0, -kPi / 4}, 2048, 1024);
  EXPECT_DOUBLE_EQ(p.u, 1024.0);
  EXPECT_DOUBLE_EQ(p.v, 768.0);
  EXPECT_DOUBLE_EQ(sphere_to_pixel({-kPi, 0.0}, 2048, 1024).u, 0.0);
  EXPECT_DOUBLE_EQ(sphere_to_pixel({0.0, kPi / 2}, 2048, 1024).v, 0.0);
  EXPECT_DOUBLE_EQ(sphere_to_pixel({0.0, 0.0}, 2048, 1024).v, 512.0);
  EXPECT_DOUBLE_EQ(sphere_to_pixel({0.0, -kPi / 2}, 2048, 1024).v, 1024.0);
}

TEST(RoundTrip, GroundPointsWithinHundredMetres) {
  Rng rng(3);
  const double h = 2.0;
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const double r = rng.uniform(0.01, 100.0), a = rng.uniform(-kPi, kPi);
    const double x = r * std::sin(a), y = r * std::cos(a);
    const auto px = sphere_to_pixel(ground_to_sphere(x, y, h), 2048, 1024);
    const auto g = sphere_to_ground(pixel_to_sphere(px, 2048, 1024), h);
    worst = std::max(worst, std::hypot(g.x - x, g.y - y));
  }
  EXPECT_LT(worst, 1e-4);
}

EquirectImage gradient_pano(int w, int h) {
  Image img(w, h);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) img.at(i, j) = static_cast<float>((i * 7 + j * 3) % 11) / 10.0f;
  return EquirectImage(std::move(img));
}

TEST(BilinearSample, IntegerCoordinatesAreExact) {
  const auto pano = gradient_pano(16, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 16; ++j) EXPECT_EQ(bilinear_sample(pano, j, i), pano.image().at(i, j));
}

TEST(BilinearSample, WrapsAcrossTheSeam) {
  const auto pano = gradient_pano(16, 8);
  const float expect = 0.5f * (pano.image().at(3, 15) + pano.image().at(3, 0));
  EXPECT_NEAR(bilinear_sample(pano, 15.5, 3.0), expect, 1e-6);
  EXPECT_NEAR(bilinear_sample(pano, -0.5, 3.0), expect, 1e-6);
}

TEST(BilinearSample, ConstantImage) {
  const EquirectImage pano(Image(16, 8, 1, 0.3f));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    EXPECT_FLOAT_EQ(bilinear_sample(pano, rng.uniform(-20, 40), rng.uniform(-2, 10)), 0.3f);
  }
}

TEST(EquirectImage, RejectsNonTwoToOne) { EXPECT_THROW(EquirectImage(Image(10, 10)), ArgumentError); }

TEST(PanoToBev, CenterPixelInvalidForOddSize) {
  const auto bev = pano_to_bev(gradient_pano(64, 32), 2.0, 9, 0.5);
  EXPECT_EQ(bev.valid[4 * 9 + 4], 0);
  EXPECT_EQ(bev.valid_count(), 80u);
}

TEST(PanoToBev, ValidCountDependsOnlyOnSize) {
  for (int s : {8, 9, 16, 31, 64}) {
    for (double h : {1.0, 2.5}) {
      for (double res : {0.1, 0.7}) {
        const auto bev = pano_to_bev(gradient_pano(64, 32), h, s, res);
        const std::size_t expect = static_cast<std::size_t>(s) * s - (s % 2 == 1 ? 1 : 0);
        EXPECT_EQ(bev.valid_count(), expect) << "size " << s;
      }
    }
  }
}

TEST(PanoToBev, Errors) {
  const auto pano = gradient_pano(64, 32);
  EXPECT_THROW(pano_to_bev(pano, 0.0, 16, 0.5), ArgumentError);
  EXPECT_THROW(pano_to_bev(pano, 2.0, 0, 0.5), ArgumentError);
  EXPECT_THROW(pano_to_bev(pano, 2.0, 16, -1.0), ArgumentError);
}

TEST(PanoToBev, ScaleInvarianceIsBitExact) {
  const auto pano = gradient_pano(256, 128);
  const auto a = pano_to_bev(pano, 2.0, 48, 0.25);
  const auto b = pano_to_bev(pano, 4.0, 48, 0.5);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.valid, b.valid);
}

TEST(PanoToBev, RotationallySymmetricPano) {
  Image img(256, 128);
  for (int i = 0; i < 128; ++i)
    for (int j = 0; j < 256; ++j) img.at(i, j) = static_cast<float>(0.5 + 0.5 * std::sin(i * 0.3));
  const auto bev = pano_to_bev(EquirectImage(img), 2.0, 40, 0.5);
  const int s = bev.size;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      // Quarter turn about the centre maps (i, j) to (j, s-1-i).
      EXPECT_NEAR(bev.image.at(i, j), bev.image.at(j, s - 1 - i), 1e-5);
      EXPECT_NEAR(bev.image.at(i, j), bev.image.at(s - 1 - i, s - 1 - j), 1e-5);
    }
}

TEST(PanoToBev, NorthColumnPointsUp) {
  const int w = 256, h = 128, s = 32;
  Image img(w, h, 1, 0.1f);
  for (int i = 0; i < h; ++i)
    for (int j = w / 2 - 8; j <= w / 2 + 8; ++j) img.at(i, j) = 0.9f;
  const auto bev = pano_to_bev(EquirectImage(img), 2.0, s, 0.5);
  for (int i = 0; i < s / 2 - 4; ++i) {
    EXPECT_GT(bev.image.at(i, s / 2), 0.8f) << "row " << i;
    EXPECT_LT(bev.image.at(s - 1 - i, s / 2), 0.2f) << "row " << s - 1 - i;
    EXPECT_LT(bev.image.at(s / 2, i), 0.2f);
    EXPECT_LT(bev.image.at(s / 2, s - 1 - i), 0.2f);
  }
}

TEST(PanoToBev, CountsInvocations) {
  const auto before = instrumentation().pano_to_bev.load();
  pano_to_bev(gradient_pano(64, 32), 2.0, 8, 0.5);
  EXPECT_EQ(instrumentation().pano_to_bev.load(), before + 1);
}

/// Mean absolute error of the BEV against the true ground texture, over
/// valid pixels closer than max_dist.
double checkerboard_bev_error(int pano_w, double square, double max_dist) {
  const double h = 2.0, res = 0.25;
  const int size = 128;
  const Point2 cam{50.3, 49.7};
  auto checker = [square](double x, double y) {
    const auto a = static_cast<long>(std::floor(x / square)), b = static_cast<long>(std::floor(y / square));
    return ((a + b) % 2 == 0) ? 0.1f : 0.9f;
  };
  const World world = World::from_function(100.0, 0.05, checker);
  const auto pano = render_pano(world, cam, h, pano_w, pano_w / 2, 3);
  const auto bev = pano_to_bev(pano, h, size, res);
  double err = 0;
  std::size_t n = 0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const Point2 g = bev_pixel_to_ground(i, j, size, res);
      if (!bev.valid[static_cast<std::size_t>(i) * size + j] || std::hypot(g.x, g.y) >= max_dist) continue;
      err += std::abs(bev.image.at(i, j) - world.sample(cam.x + g.x, cam.y + g.y));
      ++n;
    }
  return err / static_cast<double>(n);
}

TEST(PanoToBev, CheckerboardRoundTrip) {
  EXPECT_LT(checkerboard_bev_error(2048, 4.0, 16.0), 0.05);
}

}  // namespace
}  // namespace cvgeo::geometry
