#pragma once

// Reference tile lattice over an area of interest, best-match assignment of
// query locations, and decentrality bands.
//
// Tile (row, col) has its centre at aoi.min + t/2 + (col, row) * stride;
// row 0 is the southern-most row. Ids are row-major.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cvgeo/common.hpp"
#include "cvgeo/error.hpp"

namespace cvgeo {

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool contains(Point2 p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  static Rect square(double side) { return {0.0, 0.0, side, side}; }
};

struct Tile {
  std::uint32_t id = 0;
  int row = 0;
  int col = 0;
  Point2 center;
};

struct TileGrid {
  Rect aoi;
  double tile_size = 0.0;
  double overlap = 0.0;
  double stride = 0.0;
  int rows = 0;
  int cols = 0;
  Point2 origin;  // centre of tile (0, 0)

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }

  Point2 center(int row, int col) const { return {origin.x + col * stride, origin.y + row * stride}; }

  Tile tile(std::uint32_t id) const {
    if (id >= size()) throw ArgumentError("tile id " + std::to_string(id) + " outside grid");
    const int row = static_cast<int>(id / static_cast<std::uint32_t>(cols));
    const int col = static_cast<int>(id % static_cast<std::uint32_t>(cols));
    return {id, row, col, center(row, col)};
  }

  Rect footprint(std::uint32_t id) const {
    const Point2 c = tile(id).center;
    return {c.x - tile_size / 2, c.y - tile_size / 2, c.x + tile_size / 2, c.y + tile_size / 2};
  }

  /// Union of all tile footprints.
  Rect coverage() const {
    return {origin.x - tile_size / 2, origin.y - tile_size / 2, origin.x + (cols - 1) * stride + tile_size / 2,
            origin.y + (rows - 1) * stride + tile_size / 2};
  }

  /// Union of all hit areas (side = stride around each centre); every point
  /// inside has normalized decentrality <= 1.
  Rect hit_region() const {
    return {origin.x - stride / 2, origin.y - stride / 2, origin.x + (cols - 1) * stride + stride / 2,
            origin.y + (rows - 1) * stride + stride / 2};
  }
};

inline int tiles_per_axis(double side, double tile_size, double stride) {
  // The epsilon absorbs representation error in exact multiples.
  return static_cast<int>(std::floor((side - tile_size) / stride + 1e-9)) + 1;
}

inline TileGrid build_grid(const Rect& aoi, double tile_size, double overlap) {
  if (!(tile_size > 0)) throw ArgumentError("build_grid: tile size must be > 0");
  if (!(overlap >= 0 && overlap < 1)) throw ArgumentError("build_grid: overlap must lie in [0, 1)");
  if (aoi.width() < tile_size || aoi.height() < tile_size) {
    throw ArgumentError("build_grid: area of interest is smaller than one tile");
  }
  TileGrid g;
  g.aoi = aoi;
  g.tile_size = tile_size;
  g.overlap = overlap;
  g.stride = tile_size * (1.0 - overlap);
  g.cols = tiles_per_axis(aoi.width(), tile_size, g.stride);
  g.rows = tiles_per_axis(aoi.height(), tile_size, g.stride);
  g.origin = {aoi.x0 + tile_size / 2, aoi.y0 + tile_size / 2};
  return g;
}

inline double chebyshev(Point2 a, Point2 b) { return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)); }

/// Tile whose centre is nearest to p in Chebyshev distance; ties go to the
/// smaller id.
inline Tile best_match(const TileGrid& grid, Point2 p) {
  if (!grid.coverage().contains(p)) {
    throw ArgumentError("best_match: point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                        ") outside tile coverage");
  }
  // Outside the hit region several columns can tie, so scan a window wide
  // enough to include every tile whose footprint contains p.
  const int reach = static_cast<int>(std::ceil(grid.tile_size / grid.stride)) + 1;
  const int c0 = static_cast<int>(std::lround((p.x - grid.origin.x) / grid.stride));
  const int r0 = static_cast<int>(std::lround((p.y - grid.origin.y) / grid.stride));
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_id = 0;
  for (int r = std::max(0, r0 - reach); r <= std::min(grid.rows - 1, r0 + reach); ++r)
    for (int c = std::max(0, c0 - reach); c <= std::min(grid.cols - 1, c0 + reach); ++c) {
      const double d = chebyshev(p, grid.center(r, c));
      const auto id = static_cast<std::uint32_t>(r * grid.cols + c);
      if (d < best || (d == best && id < best_id)) {
        best = d;
        best_id = id;
      }
    }
  return grid.tile(best_id);
}

enum class Subset : std::uint8_t { S1 = 1, S2 = 2, S3 = 3, S4 = 4 };

inline int subset_index(Subset s) { return static_cast<int>(s) - 1; }
inline std::string subset_name(Subset s) { return "S" + std::to_string(static_cast<int>(s)); }

/// Band k covers d_norm in ((k-1)/4, k/4]; d_norm = 0 is S1.
inline Subset subset_for(double d_norm) {
  const int k = std::clamp(static_cast<int>(std::ceil(4.0 * d_norm)), 1, 4);
  return static_cast<Subset>(k);
}

struct DecentralityRecord {
  std::uint32_t pano_id = 0;
  std::uint32_t tile_id = 0;
  double dx = 0.0;      // pano - tile centre, metres East
  double dy = 0.0;      // metres North
  double d_norm = 0.0;  // max(|dx|,|dy|) / (stride/2)
  Subset subset = Subset::S1;
};

inline DecentralityRecord decentrality(const Tile& tile, Point2 p, double stride, std::uint32_t pano_id = 0) {
  if (!(stride > 0)) throw ArgumentError("decentrality: stride must be > 0");
  DecentralityRecord rec;
  rec.pano_id = pano_id;
  rec.tile_id = tile.id;
  rec.dx = p.x - tile.center.x;
  rec.dy = p.y - tile.center.y;
  rec.d_norm = std::max(std::abs(rec.dx), std::abs(rec.dy)) / (stride / 2);
  if (rec.d_norm > 1.0 + 1e-9) {
    throw ArgumentError("decentrality: point lies outside the hit area of tile " + std::to_string(tile.id));
  }
  rec.d_norm = std::min(rec.d_norm, 1.0);
  rec.subset = subset_for(rec.d_norm);
  return rec;
}

/// Expected subset fraction under uniform sampling: nested square rings,
/// (2k-1)/16.
inline std::array<double, 4> analytic_subset_fractions() { return {1.0 / 16, 3.0 / 16, 5.0 / 16, 7.0 / 16}; }

struct DbStatsRow {
  double overlap = 0.0;
  std::size_t tile_count = 0;
  double ratio = 0.0;           // tile_count / tile_count(first overlap)
  double analytic_ratio = 0.0;  // ((1 - o_first) / (1 - o))^2
};

inline std::vector<DbStatsRow> db_stats(const Rect& aoi, double tile_size, const std::vector<double>& overlaps) {
  if (overlaps.empty()) throw ArgumentError("db_stats: no overlap levels given");
  std::vector<DbStatsRow> rows;
  for (double o : overlaps) rows.push_back({o, build_grid(aoi, tile_size, o).size(), 0.0, 0.0});
  const double base = static_cast<double>(rows.front().tile_count);
  for (auto& r : rows) {
    r.ratio = static_cast<double>(r.tile_count) / base;
    const double k = (1.0 - overlaps.front()) / (1.0 - r.overlap);
    r.analytic_ratio = k * k;
  }
  return rows;
}

enum class Split : std::uint8_t { Train = 0, Test = 1 };

inline std::string split_name(Split s) { return s == Split::Train ? "train" : "test"; }

/// Pair counts per split (row) and subset (column).
struct SubsetCensus {
  std::array<std::array<std::size_t, 4>, 2> counts{};

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts)
      for (auto c : row) n += c;
    return n;
  }
  std::size_t split_total(Split s) const {
    std::size_t n = 0;
    for (auto c : counts[static_cast<int>(s)]) n += c;
    return n;
  }
  double fraction(Split s, Subset k) const {
    const auto n = split_total(s);
    return n == 0 ? 0.0 : static_cast<double>(counts[static_cast<int>(s)][subset_index(k)]) / n;
  }
  void add(Split s, Subset k) { ++counts[static_cast<int>(s)][subset_index(k)]; }
};

}  // namespace cvgeo
