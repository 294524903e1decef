#pragma once

// One JSON document configures a whole run. Every key is optional and falls
// back to the default below; unknown keys are rejected so typos surface.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "cvgeo/gridlab.hpp"
#include "cvgeo/model.hpp"
#include "cvgeo/worldgen.hpp"

namespace cvgeo {

struct GridConfig {
  double aoi = 2000.0;       // square area of interest, side in metres, anchored at the origin
  double tile_size = 100.0;  // metres
  double overlap = 0.125;    // fraction of the tile shared with each neighbour
};

struct DataConfig {
  int n_panos = 3400;
  std::uint64_t seed = 7;
  double split_ratio = 0.62;  // fraction of panoramas used for training
};

struct EvalConfig {
  int embed_batch = 32;
  std::string query_split = "test";  // "train", "test" or "all"
};

struct RunConfig {
  std::uint64_t world_seed = 42;
  WorldParams world;
  GridConfig grid;
  DataConfig data;
  RenderParams render;
  TrainConfig train;
  EvalConfig eval;

  std::optional<Split> query_split() const {
    if (eval.query_split == "all") return std::nullopt;
    return eval.query_split == "train" ? Split::Train : Split::Test;
  }
};

namespace detail {

// Reads the keys of one JSON object into fields and rejects the rest.
class SectionReader {
 public:
  SectionReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw FormatError("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  SectionReader& field(const std::string& key, T& out) {
    known_.emplace(key, true);
    if (const auto it = j_.find(key); it != j_.end()) {
      try {
        it->get_to(out);
      } catch (const nlohmann::json::exception&) {
        throw FormatError("config: '" + path_ + "." + key + "' has the wrong type");
      }
    }
    return *this;
  }

  /// Nested object handled by `read`.
  SectionReader& section(const std::string& key, const std::function<void(SectionReader&)>& read) {
    known_.emplace(key, true);
    if (const auto it = j_.find(key); it != j_.end()) {
      SectionReader sub(*it, path_ + "." + key);
      read(sub);
      sub.finish();
    }
    return *this;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!known_.contains(item.key())) throw FormatError("config: unknown key '" + path_ + "." + item.key() + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::map<std::string, bool> known_;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw FormatError("config: " + what);
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& c) {
  return {{"world", {{"seed", c.world_seed}, {"params", c.world}}},
          {"grid", {{"aoi", c.grid.aoi}, {"tile_size", c.grid.tile_size}, {"overlap", c.grid.overlap}}},
          {"data", {{"n_panos", c.data.n_panos}, {"seed", c.data.seed}, {"split_ratio", c.data.split_ratio}}},
          {"render", c.render},
          {"train", to_json_value(c.train)},
          {"eval", {{"embed_batch", c.eval.embed_batch}, {"query_split", c.eval.query_split}}}};
}

inline void validate(const RunConfig& c) {
  using detail::require;
  require(c.world.extent > 0 && c.world.texel_res > 0, "world extent and texel_res must be > 0");
  require(c.grid.aoi > 0 && c.grid.tile_size > 0 && c.grid.tile_size <= c.grid.aoi,
          "grid tile_size must lie in (0, aoi]");
  require(c.grid.overlap >= 0 && c.grid.overlap < 1, "grid overlap must lie in [0, 1)");
  require(c.grid.aoi <= c.world.extent, "grid aoi must fit inside the world extent");
  require(c.data.n_panos > 0, "data n_panos must be > 0");
  require(c.data.split_ratio >= 0 && c.data.split_ratio <= 1, "data split_ratio must lie in [0, 1]");
  require(c.render.pano_width > 0 && c.render.pano_height > 0 && c.render.aerial_px > 0 && c.render.supersample > 0,
          "render sizes must be > 0");
  require(c.train.batch_size >= 2, "train batch_size must be >= 2");
  require(c.train.epochs >= 0 && c.train.max_steps >= 0, "train epochs and max_steps must be >= 0");
  require(c.train.lr >= 0, "train lr must be >= 0");
  require(c.train.weights.tau > 0, "train loss tau must be > 0");
  require(c.train.weights.lambda_bev_street >= 0 && c.train.weights.lambda_bev_aerial >= 0 &&
              c.train.weights.lambda_pcm >= 0,
          "train loss weights must be >= 0");
  require(c.train.channels > 0 && c.train.bev_size > 0 && c.train.bev_res > 0, "train encoder/BEV sizes must be > 0");
  require(c.eval.embed_batch > 0, "eval embed_batch must be > 0");
  require(c.eval.query_split == "train" || c.eval.query_split == "test" || c.eval.query_split == "all",
          "eval query_split must be train, test or all");
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  detail::SectionReader root(j, "config");
  root.section("world", [&](auto& s) {
    s.field("seed", c.world_seed).section("params", [&](auto& p) {
      auto& w = c.world;
      p.field("extent", w.extent)
          .field("texel_res", w.texel_res)
          .field("district_wavelength", w.district_wavelength)
          .field("fine_wavelength", w.fine_wavelength)
          .field("coarse_wavelength", w.coarse_wavelength)
          .field("detail_octaves", w.detail_octaves)
          .field("road_density", w.road_density)
          .field("road_width_min", w.road_width_min)
          .field("road_width_max", w.road_width_max)
          .field("road_length_min", w.road_length_min)
          .field("road_length_max", w.road_length_max)
          .field("lot_density", w.lot_density)
          .field("lot_size_min", w.lot_size_min)
          .field("lot_size_max", w.lot_size_max);
    });
  });
  root.section("grid", [&](auto& s) {
    s.field("aoi", c.grid.aoi).field("tile_size", c.grid.tile_size).field("overlap", c.grid.overlap);
  });
  root.section("data", [&](auto& s) {
    s.field("n_panos", c.data.n_panos).field("seed", c.data.seed).field("split_ratio", c.data.split_ratio);
  });
  root.section("render", [&](auto& s) {
    s.field("pano_width", c.render.pano_width)
        .field("pano_height", c.render.pano_height)
        .field("cam_height", c.render.cam_height)
        .field("aerial_px", c.render.aerial_px)
        .field("supersample", c.render.supersample);
  });
  root.section("train", [&](auto& s) {
    auto& t = c.train;
    s.field("epochs", t.epochs)
        .field("batch_size", t.batch_size)
        .field("lr", t.lr)
        .field("seed", t.seed)
        .field("match_temp", t.match_temp)
        .field("bev_size", t.bev_size)
        .field("bev_res", t.bev_res)
        .field("channels", t.channels)
        .field("max_steps", t.max_steps)
        .section("loss", [&](auto& l) {
          l.field("lambda_bev_street", t.weights.lambda_bev_street)
              .field("lambda_bev_aerial", t.weights.lambda_bev_aerial)
              .field("lambda_pcm", t.weights.lambda_pcm)
              .field("tau", t.weights.tau)
              .field("learnable_tau", t.weights.learnable_tau);
        });
  });
  root.section("eval", [&](auto& s) {
    s.field("embed_batch", c.eval.embed_batch).field("query_split", c.eval.query_split);
  });
  root.finish();
  validate(c);
  return c;
}

/// Applies "section.key=value" to a config document. The value is parsed
/// as JSON when possible and kept as a string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ArgumentError("override '" + assignment + "' is not of the form key.path=value");
  }
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ArgumentError("override '" + assignment + "' has an empty key");
    if (!node->is_object()) *node = nlohmann::json::object();
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

/// Writes the effective configuration as pretty-printed JSON, creating the
/// parent directory.
inline void echo_config(const std::filesystem::path& file, const RunConfig& c) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw IoError("cannot write '" + file.string() + "'");
  out << config_to_json(c).dump(2) << '\n';
}

}  // namespace cvgeo
