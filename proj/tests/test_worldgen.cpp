#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "cvgeo/worldgen.hpp"

namespace cvgeo {
namespace {

WorldParams small_world() {
  WorldParams p;
  p.extent = 400.0;
  p.texel_res = 0.5;
  return p;
}

TEST(MakeWorld, DeterministicPerSeed) {
  const auto a = make_world(7, small_world()), b = make_world(7, small_world());
  EXPECT_EQ(a.texels(), b.texels());
}

TEST(MakeWorld, DifferentSeedsDiffer) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = make_world(s, small_world()), b = make_world(s + 100, small_world());
    double diff = 0;
    for (std::size_t i = 0; i < a.texels().size(); ++i) diff += std::abs(a.texels()[i] - b.texels()[i]);
    EXPECT_GT(diff / static_cast<double>(a.texels().size()), 0.01) << "seed " << s;
  }
}

TEST(MakeWorld, TexelsInUnitInterval) {
  const auto w = make_world(3, small_world());
  const auto [lo, hi] = std::minmax_element(w.texels().begin(), w.texels().end());
  EXPECT_GE(*lo, 0.0f);
  EXPECT_LE(*hi, 1.0f);
}

TEST(MakeWorld, RejectsBadExtent) { EXPECT_THROW(make_world(1, 0.0, 0.5), ArgumentError); }

TEST(RenderAerial, ConstantWorldGivesConstantTile) {
  const auto w = World::from_function(200, 0.5, [](double, double) { return 0.42f; });
  const auto img = render_aerial(w, {100, 100}, 100, 32);
  for (float v : img.data) EXPECT_FLOAT_EQ(v, 0.42f);
}

TEST(RenderAerial, IdenticalFootprintsGiveIdenticalImages) {
  const auto w = make_world(9, small_world());
  EXPECT_EQ(render_aerial(w, {150, 180}, 100, 64), render_aerial(w, {150, 180}, 100, 64));
}

TEST(RenderAerial, ShiftByOneStrideShiftsContent) {
  const auto w = make_world(4, small_world());
  const auto grid = build_grid(Rect::square(400), 100, 0.5);
  const auto a = render_aerial(w, grid, grid.tile(5), 64);
  const auto b = render_aerial(w, grid, grid.tile(6), 64);  // one stride East
  // The eastern half of a is the western half of b.
  std::vector<float> ea, wb;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 32; ++c) {
      ea.push_back(a.at(r, c + 32));
      wb.push_back(b.at(r, c));
    }
  EXPECT_GT(normalized_cross_correlation(ea, wb), 0.99);
}

TEST(RenderAerial, NorthIsRowZero) {
  const auto w = World::from_function(200, 0.5, [](double, double y) { return static_cast<float>(y / 200); });
  const auto img = render_aerial(w, {100, 100}, 100, 16);
  EXPECT_GT(img.at(0, 8), img.at(15, 8));
}

TEST(RenderAerial, OutsideWorldThrows) {
  const auto w = make_world(1, small_world());
  EXPECT_THROW(render_aerial(w, {30, 200}, 100, 64), ArgumentError);
}

TEST(RenderPano, NadirSamplesFootprint) {
  const auto w = World::from_function(100, 0.25, [](double x, double y) {
    return std::hypot(x - 50, y - 50) < 0.5 ? 0.9f : 0.2f;
  });
  const auto pano = render_pano(w, {50, 50}, 2.0, 128, 64, 1);
  for (int j = 0; j < 128; ++j) EXPECT_NEAR(pano.image().at(63, j), 0.9f, 1e-6);
  EXPECT_NEAR(pano.image().at(10, 0), sky_value(geometry::pixel_to_sphere({0, 10}, 128, 64).elevation), 1e-6);
}

TEST(RenderPano, RoadDueNorthIsCenterColumn) {
  const auto w = World::from_function(200, 0.25, [](double x, double y) {
    return (std::abs(x - 100) < 2.0 && y > 100) ? 0.95f : 0.1f;
  });
  const auto pano = render_pano(w, {100, 100}, 2.0, 128, 64);
  const int row = 40;  // below the horizon
  double sum = 0, wsum = 0;
  for (int j = 0; j < 128; ++j) {
    const double v = pano.image().at(row, j);
    if (v > 0.5) {
      sum += v * j;
      wsum += v;
    }
  }
  EXPECT_NEAR(sum / wsum, 64.0, 0.5);
  EXPECT_LT(pano.image().at(row, 0), 0.2f);
}

TEST(RenderPano, Errors) {
  const auto w = make_world(1, small_world());
  EXPECT_THROW(render_pano(w, {-5, 10}, 2.0, 128, 64), ArgumentError);
  EXPECT_THROW(render_pano(w, {50, 50}, 2.0, 100, 64), ArgumentError);
}

TEST(RenderPano, BevRecoversAerialContent) {
  // The BEV of a rendered panorama should agree with the aerial crop of the
  // same ground window.
  const auto w = make_world(12, small_world());
  const Point2 cam{201.3, 198.4};
  const double res = 0.5;
  const int size = 48;
  const auto pano = render_pano(w, cam, 2.0, 512, 256);
  const auto bev = geometry::pano_to_bev(pano, 2.0, size, res);
  const auto aerial = render_aerial(w, cam, size * res, size);
  std::vector<float> a, b;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const Point2 g = geometry::bev_pixel_to_ground(i, j, size, res);
      if (std::hypot(g.x, g.y) > 8.0 || !bev.valid[static_cast<std::size_t>(i) * size + j]) continue;
      a.push_back(bev.image.at(i, j));
      b.push_back(aerial.at(i, j));
    }
  EXPECT_GT(normalized_cross_correlation(a, b), 0.95);
}

TEST(BuildDataset, SplitPartitionsPanos) {
  const auto w = make_world(2, small_world());
  const auto grid = build_grid(Rect::square(400), 100, 0.125);
  const auto m = build_dataset(w, grid, 200, 5, 0.5);
  EXPECT_EQ(m.panos_in(Split::Train).size() + m.panos_in(Split::Test).size(), 200u);
  EXPECT_EQ(m.tiles.size(), grid.size());
  for (const auto& p : m.panos) {
    EXPECT_EQ(best_match(grid, p.location).id, p.tile_id);
    EXPECT_LE(p.d_norm, 1.0);
    EXPECT_EQ(subset_for(p.d_norm), p.subset);
  }
}

TEST(BuildDataset, SubsetProportionsApproachRingAreas) {
  const auto w = World::from_function(2000, 10.0, [](double, double) { return 0.5f; });
  const auto grid = build_grid(Rect::square(2000), 100, 0.125);
  const auto m = build_dataset(w, grid, 1000, 8, 0.5);
  const auto census = subset_census(m);
  const auto expect = analytic_subset_fractions();
  for (int k = 0; k < 4; ++k) {
    const double f = static_cast<double>(census.counts[0][k] + census.counts[1][k]) / 1000.0;
    EXPECT_NEAR(f, expect[k], 0.05) << "S" << k + 1;
  }
  EXPECT_EQ(census.total(), 1000u);
}

TEST(BuildDataset, SameSeedSameManifest) {
  const auto w = make_world(2, small_world());
  const auto grid = build_grid(Rect::square(400), 100, 0.125);
  EXPECT_EQ(manifest_to_json(build_dataset(w, grid, 50, 3, 0.6)), manifest_to_json(build_dataset(w, grid, 50, 3, 0.6)));
}

TEST(BuildDataset, Errors) {
  const auto w = make_world(2, small_world());
  EXPECT_THROW(build_dataset(w, build_grid(Rect::square(400), 100, 0.125), 0, 1, 0.5), ArgumentError);
  EXPECT_THROW(build_dataset(w, build_grid(Rect::square(800), 100, 0.125), 10, 1, 0.5), ArgumentError);
}

TEST(Manifest, JsonRoundTripAndFiles) {
  const auto w = make_world(2, small_world());
  const auto grid = build_grid(Rect::square(400), 100, 0.5);
  RenderParams rp;
  rp.pano_width = 64;
  rp.pano_height = 32;
  rp.aerial_px = 32;
  const auto m = build_dataset(w, grid, 6, 3, 0.5, rp, small_world());
  const auto root = std::filesystem::temp_directory_path() / "cvgeo_test_manifest";
  std::filesystem::remove_all(root);
  const auto images = render_dataset(w, m);
  write_dataset(root, m, images);
  const auto back = load_manifest(root / "manifest.json");
  EXPECT_EQ(manifest_to_json(back), manifest_to_json(m));
  const auto loaded = load_dataset_images(root, back);
  EXPECT_EQ(loaded.tiles, images.tiles);
  EXPECT_EQ(loaded.panos, images.panos);
  std::filesystem::remove(root / "pano" / "0.png");
  EXPECT_THROW(load_dataset_images(root, back), IoError);
  std::filesystem::remove_all(root);
}

TEST(Manifest, MalformedJsonIsFormatError) {
  EXPECT_THROW(manifest_from_json(nlohmann::json{{"world", 1}}), FormatError);
}

}  // namespace
}  // namespace cvgeo
