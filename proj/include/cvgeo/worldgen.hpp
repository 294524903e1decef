#pragma once

// Synthetic flat worlds and consistent cross-view renderings: aerial tiles
// cropped from the ground texture and north-aligned panoramas obtained by
// ray casting onto the same texture.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvgeo/geometry.hpp"
#include "cvgeo/gridlab.hpp"
#include "cvgeo/image.hpp"
#include "cvgeo/noise.hpp"
#include "cvgeo/parallel.hpp"

namespace cvgeo {

struct WorldParams {
  double extent = 2000.0;         // square side, metres
  double texel_res = 0.5;         // metres per texel
  double district_wavelength = 240.0;  // brightness, contrast and grain vary at this scale
  double fine_wavelength = 3.0;        // fine-grained detail noise, metres
  double coarse_wavelength = 16.0;     // coarse-grained detail noise, metres
  int detail_octaves = 3;
  double road_density = 6.0;      // segments per km²
  double road_width_min = 4.0;
  double road_width_max = 10.0;
  double road_length_min = 150.0;
  double road_length_max = 700.0;
  double lot_density = 800.0;     // candidate rectangular patches per km²
  double lot_size_min = 6.0;
  double lot_size_max = 24.0;
};

/// Immutable grayscale ground texture over [0, extent]². Texel (iy, ix) is
/// centred at ((ix + 0.5) r, (iy + 0.5) r) with iy growing northwards.
class World {
 public:
  World(std::uint64_t seed, double extent, double texel_res)
      : seed_(seed), extent_(extent), res_(texel_res) {
    if (!(extent > 0) || !(texel_res > 0)) throw ArgumentError("world: extent and texel size must be > 0");
    n_ = static_cast<int>(std::ceil(extent / texel_res));
    texels_.assign(static_cast<std::size_t>(n_) * n_, 0.0f);
  }

  /// World whose texture is fn(x, y) evaluated at texel centres.
  static World from_function(double extent, double texel_res, const std::function<float(double, double)>& fn) {
    World w(0, extent, texel_res);
    parallel_for(static_cast<std::size_t>(w.n_), [&](std::size_t iy) {
      for (int ix = 0; ix < w.n_; ++ix) {
        w.texel(static_cast<int>(iy), ix) =
            std::clamp(fn((ix + 0.5) * texel_res, (static_cast<double>(iy) + 0.5) * texel_res), 0.0f, 1.0f);
      }
    });
    return w;
  }

  std::uint64_t seed() const { return seed_; }
  double extent() const { return extent_; }
  double texel_res() const { return res_; }
  int texels_per_side() const { return n_; }
  const std::vector<float>& texels() const { return texels_; }

  float& texel(int iy, int ix) { return texels_[static_cast<std::size_t>(iy) * n_ + ix]; }
  float texel(int iy, int ix) const { return texels_[static_cast<std::size_t>(iy) * n_ + ix]; }

  bool contains(Point2 p) const { return p.x >= 0 && p.y >= 0 && p.x <= extent_ && p.y <= extent_; }

  /// Bilinear texture lookup in metres; clamps at the world border.
  float sample(double x, double y) const {
    const double fx = std::clamp(x / res_ - 0.5, 0.0, n_ - 1.0);
    const double fy = std::clamp(y / res_ - 0.5, 0.0, n_ - 1.0);
    const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
    const int x1 = std::min(x0 + 1, n_ - 1), y1 = std::min(y0 + 1, n_ - 1);
    const double ax = fx - x0, ay = fy - y0;
    const double a = texel(y0, x0) + ax * (texel(y0, x1) - texel(y0, x0));
    const double b = texel(y1, x0) + ax * (texel(y1, x1) - texel(y1, x0));
    return static_cast<float>(a + ay * (b - a));
  }

 private:
  std::uint64_t seed_;
  double extent_;
  double res_;
  int n_ = 0;
  std::vector<float> texels_;
};

namespace detail {

inline double segment_distance(Point2 p, Point2 a, Point2 b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

}  // namespace detail

/// Value-noise texture with slowly varying "districts" (brightness, contrast,
/// grain and lot density), rectangular lots and bright road segments.
inline World make_world(std::uint64_t seed, const WorldParams& params = {}) {
  World world(seed, params.extent, params.texel_res);
  const std::uint64_t base = splitmix64(seed);
  const ValueNoise brightness(base + 1), contrast(base + 2), grain(base + 3), lot_field(base + 4);
  const ValueNoise fine(base + 5), coarse(base + 6);
  // Two-octave fbm clusters around 0.5; spread it back over [0, 1].
  auto district = [&](const ValueNoise& n, double x, double y) {
    const double dw = params.district_wavelength;
    return std::clamp(0.5 + 2.2 * (n.fbm(x / dw, y / dw, 2) - 0.5), 0.0, 1.0);
  };
  const double res = params.texel_res;
  const int n = world.texels_per_side();
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t iy) {
    for (int ix = 0; ix < n; ++ix) {
      const double x = (ix + 0.5) * res, y = (static_cast<double>(iy) + 0.5) * res;
      const double b = 0.15 + 0.55 * district(brightness, x, y);
      const double c = 0.05 + 0.3 * district(contrast, x, y);
      const double mix = district(grain, x, y);
      const double detail =
          mix * fine.fbm(x / params.fine_wavelength, y / params.fine_wavelength, params.detail_octaves) +
          (1 - mix) * coarse.fbm(x / params.coarse_wavelength, y / params.coarse_wavelength, params.detail_octaves);
      world.texel(static_cast<int>(iy), ix) = static_cast<float>(std::clamp(b + c * 3.6 * (detail - 0.5), 0.02, 0.85));
    }
  });

  Rng rng(seed ^ 0x5eed0f5eedULL);
  const double area_km2 = params.extent * params.extent / 1e6;
  auto paint = [&](double xmin, double ymin, double xmax, double ymax, auto&& shade) {
    const int ix0 = std::max(0, static_cast<int>(std::floor(xmin / res))), ix1 = std::min(n - 1, static_cast<int>(xmax / res));
    const int iy0 = std::max(0, static_cast<int>(std::floor(ymin / res))), iy1 = std::min(n - 1, static_cast<int>(ymax / res));
    for (int iy = iy0; iy <= iy1; ++iy)
      for (int ix = ix0; ix <= ix1; ++ix) shade(iy, ix, Point2{(ix + 0.5) * res, (iy + 0.5) * res});
  };

  const auto lots = static_cast<int>(std::lround(params.lot_density * area_km2));
  for (int i = 0; i < lots; ++i) {
    const double cx = rng.uniform(0, params.extent), cy = rng.uniform(0, params.extent);
    const double hw = rng.uniform(params.lot_size_min, params.lot_size_max) / 2;
    const double hh = rng.uniform(params.lot_size_min, params.lot_size_max) / 2;
    const auto value = static_cast<float>(rng.uniform() < 0.5 ? rng.uniform(0.0, 0.2) : rng.uniform(0.6, 0.8));
    if (rng.uniform() >= district(lot_field, cx, cy)) continue;
    paint(cx - hw, cy - hh, cx + hw, cy + hh, [&](int iy, int ix, Point2) { world.texel(iy, ix) = value; });
  }

  const auto roads = static_cast<int>(std::lround(params.road_density * area_km2));
  for (int i = 0; i < roads; ++i) {
    const Point2 a{rng.uniform(0, params.extent), rng.uniform(0, params.extent)};
    const double angle = rng.uniform(0, 2 * geometry::kPi);
    const double len = rng.uniform(params.road_length_min, params.road_length_max);
    const Point2 b{a.x + len * std::sin(angle), a.y + len * std::cos(angle)};
    const double half = rng.uniform(params.road_width_min, params.road_width_max) / 2;
    const auto value = static_cast<float>(rng.uniform(0.88, 0.98));
    paint(std::min(a.x, b.x) - half - res, std::min(a.y, b.y) - half - res, std::max(a.x, b.x) + half + res,
          std::max(a.y, b.y) + half + res, [&](int iy, int ix, Point2 p) {
            const double d = detail::segment_distance(p, a, b);
            // One-texel soft edge.
            const double cover = std::clamp((half - d) / res + 0.5, 0.0, 1.0);
            if (cover > 0) world.texel(iy, ix) = static_cast<float>(world.texel(iy, ix) + cover * (value - world.texel(iy, ix)));
          });
  }
  return world;
}

inline World make_world(std::uint64_t seed, double extent, double texel_res) {
  WorldParams p;
  p.extent = extent;
  p.texel_res = texel_res;
  return make_world(seed, p);
}

/// Area-resampled crop of the texture over a square footprint. Row 0 is the
/// northern edge.
inline Image render_aerial(const World& world, Point2 center, double size, int out_px) {
  if (out_px <= 0 || !(size > 0)) throw ArgumentError("render_aerial: size and resolution must be positive");
  const double half = size / 2;
  constexpr double kTol = 1e-6;
  if (center.x - half < -kTol || center.y - half < -kTol || center.x + half > world.extent() + kTol ||
      center.y + half > world.extent() + kTol) {
    throw ArgumentError("render_aerial: tile footprint outside the world");
  }
  const double px = size / out_px;
  const int ss = std::clamp(static_cast<int>(std::ceil(px / world.texel_res())), 1, 8);
  Image img(out_px, out_px, 1);
  for (int r = 0; r < out_px; ++r)
    for (int c = 0; c < out_px; ++c) {
      double acc = 0;
      for (int a = 0; a < ss; ++a)
        for (int b = 0; b < ss; ++b) {
          const double x = center.x - half + (c + (b + 0.5) / ss) * px;
          const double y = center.y + half - (r + (a + 0.5) / ss) * px;
          acc += world.sample(x, y);
        }
      img.at(r, c) = static_cast<float>(acc / (ss * ss));
    }
  return img;
}

inline Image render_aerial(const World& world, const TileGrid& grid, const Tile& tile, int out_px) {
  return render_aerial(world, tile.center, grid.tile_size, out_px);
}

inline float sky_value(double elevation) {
  return static_cast<float>(0.6 + 0.35 * elevation / (geometry::kPi / 2));
}

/// Ray-cast panorama from a camera at `location`, height h, over flat ground.
/// Each pixel averages supersample² rays spread over its footprint.
inline geometry::EquirectImage render_pano(const World& world, Point2 location, double cam_height, int width,
                                           int height, int supersample = 3) {
  if (!world.contains(location)) throw ArgumentError("render_pano: location outside the world");
  if (!(cam_height > 0)) throw ArgumentError("render_pano: camera height must be > 0");
  if (width != 2 * height || height <= 0) throw ArgumentError("render_pano: panorama must be 2:1");
  const int ss = std::max(1, supersample);
  Image img(width, height, 1);
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) {
      double acc = 0;
      for (int a = 0; a < ss; ++a)
        for (int b = 0; b < ss; ++b) {
          const geometry::PixelCoord p{j + (b + 0.5) / ss - 0.5, i + (a + 0.5) / ss - 0.5};
          const auto dir = geometry::pixel_to_sphere(p, width, height);
          if (dir.elevation >= 0) {
            acc += sky_value(dir.elevation);
            continue;
          }
          const double rho = cam_height / std::tan(-dir.elevation);
          acc += world.sample(location.x + rho * std::sin(dir.azimuth), location.y + rho * std::cos(dir.azimuth));
        }
      img.at(i, j) = static_cast<float>(acc / (ss * ss));
    }
  return geometry::EquirectImage(std::move(img));
}

struct PanoRecord {
  std::uint32_t id = 0;
  Point2 location;
  double cam_height = 2.0;
  geometry::EquirectImage image;
};

struct RenderParams {
  int pano_width = 128;
  int pano_height = 64;
  double cam_height = 2.0;
  int aerial_px = 64;
  int supersample = 3;
};

struct TileEntry {
  std::uint32_t id = 0;
  int row = 0;
  int col = 0;
  Point2 center;
  std::string path;
};

struct PanoEntry {
  std::uint32_t id = 0;
  Point2 location;
  double cam_height = 2.0;
  std::uint32_t tile_id = 0;  // best-matched reference
  double dx = 0.0;
  double dy = 0.0;
  double d_norm = 0.0;
  Subset subset = Subset::S1;
  Split split = Split::Train;
  std::string path;

  DecentralityRecord record() const { return {id, tile_id, dx, dy, d_norm, subset}; }
};

struct DatasetManifest {
  std::uint64_t world_seed = 0;
  WorldParams world;
  Rect aoi;
  double tile_size = 100.0;
  double overlap = 0.125;
  RenderParams render;
  std::uint64_t seed = 0;
  double split_ratio = 0.5;  // fraction of panoramas in the training split
  std::vector<TileEntry> tiles;
  std::vector<PanoEntry> panos;

  TileGrid grid() const { return build_grid(aoi, tile_size, overlap); }

  std::vector<const PanoEntry*> panos_in(Split split) const {
    std::vector<const PanoEntry*> out;
    for (const auto& p : panos)
      if (p.split == split) out.push_back(&p);
    return out;
  }
};

/// Stable split assignment from the pano id alone.
inline Split split_for(std::uint32_t pano_id, double split_ratio) {
  const double u = static_cast<double>(splitmix64(pano_id) >> 11) * 0x1.0p-53;
  return u < split_ratio ? Split::Train : Split::Test;
}

/// Samples panorama locations uniformly over the grid's hit region and
/// assigns each its best-matched tile and decentrality band.
inline DatasetManifest build_dataset(const World& world, const TileGrid& grid, int n_panos, std::uint64_t seed,
                                     double split_ratio, const RenderParams& render = {},
                                     const WorldParams& world_params = {}) {
  if (n_panos <= 0) throw ArgumentError("build_dataset: n_panos must be > 0");
  if (!(split_ratio >= 0 && split_ratio <= 1)) throw ArgumentError("build_dataset: split_ratio must lie in [0, 1]");
  const Rect cov = grid.coverage();
  if (!world.contains({cov.x0, cov.y0}) || !world.contains({cov.x1, cov.y1})) {
    throw ArgumentError("build_dataset: tile grid extends beyond the world");
  }
  DatasetManifest m;
  m.world_seed = world.seed();
  m.world = world_params;
  m.world.extent = world.extent();
  m.world.texel_res = world.texel_res();
  m.aoi = grid.aoi;
  m.tile_size = grid.tile_size;
  m.overlap = grid.overlap;
  m.render = render;
  m.seed = seed;
  m.split_ratio = split_ratio;
  for (std::uint32_t id = 0; id < grid.size(); ++id) {
    const Tile t = grid.tile(id);
    m.tiles.push_back({id, t.row, t.col, t.center, "aerial/" + std::to_string(id) + ".png"});
  }
  const Rect hit = grid.hit_region();
  Rng rng(seed);
  for (int i = 0; i < n_panos; ++i) {
    PanoEntry p;
    p.id = static_cast<std::uint32_t>(i);
    p.location = {rng.uniform(hit.x0, hit.x1), rng.uniform(hit.y0, hit.y1)};
    p.cam_height = render.cam_height;
    const Tile t = best_match(grid, p.location);
    const DecentralityRecord rec = decentrality(t, p.location, grid.stride, p.id);
    p.tile_id = rec.tile_id;
    p.dx = rec.dx;
    p.dy = rec.dy;
    p.d_norm = rec.d_norm;
    p.subset = rec.subset;
    p.split = split_for(p.id, split_ratio);
    p.path = "pano/" + std::to_string(p.id) + ".png";
    m.panos.push_back(std::move(p));
  }
  return m;
}

inline SubsetCensus subset_census(const DatasetManifest& m) {
  SubsetCensus census;
  for (const auto& p : m.panos) census.add(p.split, p.subset);
  return census;
}

/// Images of a dataset held in memory; tiles indexed by tile id, panoramas
/// by position in the manifest.
struct DatasetImages {
  std::vector<Image> tiles;
  std::vector<Image> panos;
};

/// Renders every tile and panorama. With `quantize`, values are rounded to
/// 8 bits exactly as a PNG round trip would.
inline DatasetImages render_dataset(const World& world, const DatasetManifest& m, bool quantize = true) {
  DatasetImages out;
  out.tiles.resize(m.tiles.size());
  out.panos.resize(m.panos.size());
  parallel_for(m.tiles.size(), [&](std::size_t i) {
    Image img = render_aerial(world, m.tiles[i].center, m.tile_size, m.render.aerial_px);
    out.tiles[i] = quantize ? quantize8(std::move(img)) : std::move(img);
  });
  parallel_for(m.panos.size(), [&](std::size_t i) {
    const auto& p = m.panos[i];
    Image img = render_pano(world, p.location, p.cam_height, m.render.pano_width, m.render.pano_height,
                            m.render.supersample)
                    .image();
    out.panos[i] = quantize ? quantize8(std::move(img)) : std::move(img);
  });
  return out;
}

// ---- manifest JSON ----------------------------------------------------------

inline void to_json(nlohmann::json& j, const WorldParams& p) {
  j = {{"extent", p.extent},
       {"texel_res", p.texel_res},
       {"district_wavelength", p.district_wavelength},
       {"fine_wavelength", p.fine_wavelength},
       {"coarse_wavelength", p.coarse_wavelength},
       {"detail_octaves", p.detail_octaves},
       {"road_density", p.road_density},
       {"road_width_min", p.road_width_min},
       {"road_width_max", p.road_width_max},
       {"road_length_min", p.road_length_min},
       {"road_length_max", p.road_length_max},
       {"lot_density", p.lot_density},
       {"lot_size_min", p.lot_size_min},
       {"lot_size_max", p.lot_size_max}};
}

inline void from_json(const nlohmann::json& j, WorldParams& p) {
  j.at("extent").get_to(p.extent);
  j.at("texel_res").get_to(p.texel_res);
  j.at("district_wavelength").get_to(p.district_wavelength);
  j.at("fine_wavelength").get_to(p.fine_wavelength);
  j.at("coarse_wavelength").get_to(p.coarse_wavelength);
  j.at("detail_octaves").get_to(p.detail_octaves);
  j.at("road_density").get_to(p.road_density);
  j.at("road_width_min").get_to(p.road_width_min);
  j.at("road_width_max").get_to(p.road_width_max);
  j.at("road_length_min").get_to(p.road_length_min);
  j.at("road_length_max").get_to(p.road_length_max);
  j.at("lot_density").get_to(p.lot_density);
  j.at("lot_size_min").get_to(p.lot_size_min);
  j.at("lot_size_max").get_to(p.lot_size_max);
}

inline void to_json(nlohmann::json& j, const RenderParams& p) {
  j = {{"pano_width", p.pano_width},
       {"pano_height", p.pano_height},
       {"cam_height", p.cam_height},
       {"aerial_px", p.aerial_px},
       {"supersample", p.supersample}};
}

inline void from_json(const nlohmann::json& j, RenderParams& p) {
  j.at("pano_width").get_to(p.pano_width);
  j.at("pano_height").get_to(p.pano_height);
  j.at("cam_height").get_to(p.cam_height);
  j.at("aerial_px").get_to(p.aerial_px);
  j.at("supersample").get_to(p.supersample);
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["world"] = {{"seed", m.world_seed}, {"params", m.world}};
  j["grid"] = {{"aoi", {m.aoi.x0, m.aoi.y0, m.aoi.x1, m.aoi.y1}},
               {"tile_size", m.tile_size},
               {"overlap", m.overlap},
               {"stride", m.tile_size * (1.0 - m.overlap)}};
  j["render"] = m.render;
  j["seed"] = m.seed;
  j["split_ratio"] = m.split_ratio;
  auto& tiles = j["tiles"] = nlohmann::json::array();
  for (const auto& t : m.tiles) {
    tiles.push_back({{"id", t.id}, {"row", t.row}, {"col", t.col}, {"x", t.center.x}, {"y", t.center.y}, {"path", t.path}});
  }
  auto& panos = j["panos"] = nlohmann::json::array();
  for (const auto& p : m.panos) {
    panos.push_back({{"id", p.id},
                     {"x", p.location.x},
                     {"y", p.location.y},
                     {"cam_height", p.cam_height},
                     {"tile_id", p.tile_id},
                     {"dx", p.dx},
                     {"dy", p.dy},
                     {"d_norm", p.d_norm},
                     {"subset", static_cast<int>(p.subset)},
                     {"split", split_name(p.split)},
                     {"path", p.path}});
  }
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    j.at("world").at("seed").get_to(m.world_seed);
    m.world = j.at("world").at("params").get<WorldParams>();
    const auto& g = j.at("grid");
    m.aoi = {g.at("aoi").at(0).get<double>(), g.at("aoi").at(1).get<double>(), g.at("aoi").at(2).get<double>(),
             g.at("aoi").at(3).get<double>()};
    g.at("tile_size").get_to(m.tile_size);
    g.at("overlap").get_to(m.overlap);
    m.render = j.at("render").get<RenderParams>();
    j.at("seed").get_to(m.seed);
    j.at("split_ratio").get_to(m.split_ratio);
    for (const auto& t : j.at("tiles")) {
      m.tiles.push_back({t.at("id").get<std::uint32_t>(), t.at("row").get<int>(), t.at("col").get<int>(),
                         {t.at("x").get<double>(), t.at("y").get<double>()}, t.at("path").get<std::string>()});
    }
    for (const auto& p : j.at("panos")) {
      PanoEntry e;
      p.at("id").get_to(e.id);
      e.location = {p.at("x").get<double>(), p.at("y").get<double>()};
      p.at("cam_height").get_to(e.cam_height);
      p.at("tile_id").get_to(e.tile_id);
      p.at("dx").get_to(e.dx);
      p.at("dy").get_to(e.dy);
      p.at("d_norm").get_to(e.d_norm);
      const int s = p.at("subset").get<int>();
      if (s < 1 || s > 4) throw FormatError("manifest: subset out of range");
      e.subset = static_cast<Subset>(s);
      const auto split = p.at("split").get<std::string>();
      if (split != "train" && split != "test") throw FormatError("manifest: unknown split '" + split + "'");
      e.split = split == "train" ? Split::Train : Split::Test;
      p.at("path").get_to(e.path);
      m.panos.push_back(std::move(e));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << manifest_to_json(m).dump(1) << '\n';
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return manifest_from_json(j);
}

/// Writes manifest.json plus aerial/{tile_id}.png and pano/{pano_id}.png.
inline void write_dataset(const std::filesystem::path& root, const DatasetManifest& m, const DatasetImages& images) {
  std::filesystem::create_directories(root / "aerial");
  std::filesystem::create_directories(root / "pano");
  for (std::size_t i = 0; i < m.tiles.size(); ++i) write_png((root / m.tiles[i].path).string(), images.tiles[i]);
  for (std::size_t i = 0; i < m.panos.size(); ++i) write_png((root / m.panos[i].path).string(), images.panos[i]);
  save_manifest(root / "manifest.json", m);
}

inline DatasetImages load_dataset_images(const std::filesystem::path& root, const DatasetManifest& m) {
  DatasetImages out;
  out.tiles.resize(m.tiles.size());
  out.panos.resize(m.panos.size());
  auto load = [&](const std::string& rel) {
    const auto path = root / rel;
    if (!std::filesystem::exists(path)) throw IoError("missing image file '" + path.string() + "'");
    return read_png(path.string());
  };
  parallel_for(m.tiles.size(), [&](std::size_t i) { out.tiles[i] = load(m.tiles[i].path); });
  parallel_for(m.panos.size(), [&](std::size_t i) { out.panos[i] = load(m.panos[i].path); });
  return out;
}

}  // namespace cvgeo
