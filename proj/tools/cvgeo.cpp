// Command-line front end: dataset generation, training, embedding, evaluation
// and the small analysis reports.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cvgeo/cvgeo.hpp"

namespace fs = std::filesystem;
using namespace cvgeo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitArgs = 2;
constexpr int kExitInput = 3;
constexpr int kExitDiverged = 4;

int exit_code_for(const Error& e) {
  const auto& k = e.kind();
  if (k == "ArgumentError") return kExitArgs;
  if (k == "DivergenceError" || k == "NumericError") return kExitDiverged;
  return kExitInput;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

// Defaults, then the --config file, then each --set override.
RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!path.empty()) doc = config_to_json(load_config(path));
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_json(doc);
}

struct ConfigFlags {
  std::string path;
  std::vector<std::string> overrides;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", path, "JSON run configuration; omitted keys take their defaults (see `cvgeo config`)");
    cmd->add_option("--set", overrides, "override one key, e.g. --set train.epochs=3 (repeatable)");
  }
  RunConfig resolve() const { return resolve_config(path, overrides); }
};

// ---- gen-data ---------------------------------------------------------------

struct GenDataCmd {
  ConfigFlags config;
  std::string out;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("gen-data", "render a synthetic world into aerial tiles and panoramas");
    config.add(c);
    c->add_option("--out", out, "output dataset directory")->required();
    c->callback([this] { run(); });
  }

  void run() const {
    const RunConfig cfg = config.resolve();
    const World world = make_world(cfg.world_seed, cfg.world);
    const TileGrid grid = build_grid(Rect::square(cfg.grid.aoi), cfg.grid.tile_size, cfg.grid.overlap);
    const DatasetManifest m =
        build_dataset(world, grid, cfg.data.n_panos, cfg.data.seed, cfg.data.split_ratio, cfg.render, cfg.world);
    write_dataset(out, m, render_dataset(world, m));
    echo_config(fs::path(out) / "config.json", cfg);
    std::cout << "wrote " << m.tiles.size() << " tiles and " << m.panos.size() << " panoramas ("
              << m.panos_in(Split::Train).size() << " train, " << m.panos_in(Split::Test).size() << " test) to "
              << out << '\n';
  }
};

// ---- bev --------------------------------------------------------------------

struct BevCmd {
  std::string pano, out;
  double height = 2.0, res = 0.5;
  int size = 64;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("bev", "project an equirectangular panorama onto the ground plane");
    c->add_option("--pano", pano, "input panorama PNG, 2:1")->required();
    c->add_option("--height", height, "camera height above ground, metres")->capture_default_str();
    c->add_option("--size", size, "output side, pixels")->capture_default_str();
    c->add_option("--res", res, "ground resolution, metres per pixel")->capture_default_str();
    c->add_option("--out", out, "output PNG; the valid mask goes to <out>_mask.png")->required();
    c->callback([this] { run(); });
  }

  void run() const {
    const auto bev = geometry::pano_to_bev(geometry::EquirectImage(read_png(pano)), height, size, res);
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_png(out, bev.image);
    Image mask(size, size);
    for (std::size_t i = 0; i < bev.valid.size(); ++i) mask.data[i] = bev.valid[i] ? 1.0f : 0.0f;
    const auto mask_path = p.parent_path() / (p.stem().string() + "_mask.png");
    write_png(mask_path.string(), mask);
    std::cout << "valid pixels " << bev.valid_count() << " of " << bev.valid.size() << "; mask " << mask_path.string()
              << '\n';
  }
};

// ---- grid-stats -------------------------------------------------------------

struct GridStatsCmd {
  double aoi = 2000, tile = 100;
  std::vector<double> overlaps{0.0, 0.125, 0.25, 0.375, 0.5};
  std::string out;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("grid-stats", "tile counts and database-size ratios per overlap level");
    c->add_option("--aoi", aoi, "square AOI side, metres")->capture_default_str();
    c->add_option("--tile", tile, "tile side, metres")->capture_default_str();
    c->add_option("--overlaps", overlaps, "comma-separated overlap fractions; ratios are relative to the first")
        ->delimiter(',')
        ->capture_default_str();
    c->add_option("--out", out, "write the CSV here instead of stdout");
    c->callback([this] { run(); });
  }

  void run() const {
    std::ostringstream os;
    os << "overlap,stride_m,tiles_per_axis,tile_count,ratio,analytic_ratio\n";
    for (const auto& r : db_stats(Rect::square(aoi), tile, overlaps)) {
      const auto grid = build_grid(Rect::square(aoi), tile, r.overlap);
      os << r.overlap << ',' << grid.stride << ',' << grid.cols << ',' << r.tile_count << ',' << std::fixed
         << std::setprecision(4) << r.ratio << ',' << r.analytic_ratio << std::defaultfloat << '\n';
    }
    if (out.empty()) {
      std::cout << os.str();
    } else {
      write_text(out, os.str());
    }
  }
};

// ---- decentrality-report ----------------------------------------------------

struct DecentralityCmd {
  std::string manifest, out, records;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("decentrality-report", "subset counts per split, plus optional per-pano offsets");
    c->add_option("--manifest", manifest, "dataset manifest.json")->required();
    c->add_option("--out", out, "write the summary CSV here instead of stdout");
    c->add_option("--records", records, "per-panorama CSV of offsets and subsets");
    c->callback([this] { run(); });
  }

  void run() const {
    const auto m = load_manifest(manifest);
    const auto census = subset_census(m);
    const auto analytic = analytic_subset_fractions();
    std::ostringstream os;
    os << "split,measure,S1,S2,S3,S4,total\n";
    for (Split s : {Split::Train, Split::Test}) {
      os << split_name(s) << ",count";
      for (auto n : census.counts[static_cast<int>(s)]) os << ',' << n;
      os << ',' << census.split_total(s) << '\n';
    }
    os << std::fixed << std::setprecision(4);
    for (Split s : {Split::Train, Split::Test}) {
      os << split_name(s) << ",fraction";
      for (Subset k : {Subset::S1, Subset::S2, Subset::S3, Subset::S4}) os << ',' << census.fraction(s, k);
      os << ",1.0000\n";
    }
    os << "all,analytic";
    for (double f : analytic) os << ',' << f;
    os << ",1.0000\n";
    if (out.empty()) {
      std::cout << os.str();
    } else {
      write_text(out, os.str());
    }
    if (!records.empty()) {
      std::ostringstream rs;
      rs << "pano_id,tile_id,dx_m,dy_m,d_norm,subset,split\n" << std::setprecision(6);
      for (const auto& p : m.panos) {
        rs << p.id << ',' << p.tile_id << ',' << p.dx << ',' << p.dy << ',' << p.d_norm << ',' << subset_name(p.subset)
           << ',' << split_name(p.split) << '\n';
      }
      write_text(records, rs.str());
    }
  }
};

// ---- train ------------------------------------------------------------------

struct TrainCmd {
  ConfigFlags config;
  std::string data, out, trace;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("train", "train the shared encoder on a generated dataset");
    config.add(c);
    c->add_option("--data", data, "dataset directory written by gen-data")->required();
    c->add_option("--out", out, "checkpoint path (CVCK)")->required();
    c->add_option("--loss-trace", trace, "loss-trace CSV (default <out>.loss.csv)");
    c->callback([this] { run(); });
  }

  void run() const {
    const RunConfig cfg = config.resolve();
    const auto m = load_manifest(fs::path(data) / "manifest.json");
    const auto images = load_dataset_images(data, m);
    const auto ck = train(m, images, cfg.train, [&](const TrainProgress& p) {
      if (p.mean_epoch_loss != 0.0) {
        std::cerr << "epoch " << p.epoch + 1 << '/' << cfg.train.epochs << "  step " << p.step << "  mean loss "
                  << p.mean_epoch_loss << '\n';
      }
    });
    const fs::path ck_path(out);
    if (ck_path.has_parent_path()) fs::create_directories(ck_path.parent_path());
    save_checkpoint(ck_path, ck);
    std::ostringstream ts;
    ts << "step,loss\n" << std::setprecision(9);
    for (std::size_t i = 0; i < ck.loss_trace.size(); ++i) ts << i + 1 << ',' << ck.loss_trace[i] << '\n';
    write_text(trace.empty() ? out + ".loss.csv" : trace, ts.str());
    echo_config(ck_path.parent_path() / (ck_path.stem().string() + ".config.json"), cfg);
    std::cout << "trained " << ck.loss_trace.size() << " steps over " << ck.epoch << " epochs; final loss "
              << (ck.loss_trace.empty() ? 0.0 : ck.loss_trace.back()) << "; wrote " << out << '\n';
  }
};

// ---- embed ------------------------------------------------------------------

struct EmbedCmd {
  std::string ckpt, data, which, split = "test", out;
  int batch = 32;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("embed", "encode queries or references into a CVGE file");
    c->add_option("--ckpt", ckpt, "checkpoint (CVCK)")->required();
    c->add_option("--data", data, "dataset directory")->required();
    c->add_option("--which", which, "queries or references")
        ->required()
        ->check(CLI::IsMember({"queries", "references"}));
    c->add_option("--split", split, "query split: train, test or all")
        ->check(CLI::IsMember({"train", "test", "all"}))
        ->capture_default_str();
    c->add_option("--batch", batch, "images per forward pass")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--out", out, "output CVGE path")->required();
    c->callback([this] { run(); });
  }

  void run() const {
    const auto ck = load_checkpoint(ckpt);
    const auto m = load_manifest(fs::path(data) / "manifest.json");
    const auto images = load_dataset_images(data, m);
    std::optional<Split> s;
    if (split != "all") s = split == "train" ? Split::Train : Split::Test;
    const DbKind kind = which == "queries" ? DbKind::Queries : DbKind::References;
    const auto db = embed_all(ck, m, images, kind, s, static_cast<std::size_t>(batch));
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    save_db(p, db);
    std::cout << "wrote " << db.size() << ' ' << kind_name(kind) << " x " << db.dim << " to " << out << '\n';
  }
};

// ---- eval -------------------------------------------------------------------

struct EvalCmd {
  std::string queries, refs, manifest, out;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "recall, hit rate and per-band R@1");
    c->add_option("--queries", queries, "query embeddings (CVGE)")->required();
    c->add_option("--refs", refs, "reference embeddings (CVGE)")->required();
    c->add_option("--manifest", manifest, "optional manifest to cross-check ids and tile size");
    c->add_option("--out", out, "write the report CSV here");
    c->callback([this] { run(); });
  }

  void run() const {
    const auto q = load_db(queries);
    const auto r = load_db(refs);
    if (r.kind != DbKind::References) throw FormatError("'" + refs + "' holds queries, not references");
    if (!manifest.empty()) {
      const auto m = load_manifest(manifest);
      if (r.tile_size != m.tile_size) throw FormatError("reference tile size differs from the manifest");
      for (auto id : r.ids) {
        if (id >= m.tiles.size()) throw FormatError("reference id " + std::to_string(id) + " is not in the manifest");
      }
    }
    const auto report = stratified_eval(r, q);
    std::cout << report.to_table();
    if (!out.empty()) write_text(out, report.to_csv());
  }
};

// ---- heatmap ----------------------------------------------------------------

struct HeatmapCmd {
  std::string ckpt, pano, tile, out;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("heatmap", "similarity of a panorama to each cell of an aerial tile");
    c->add_option("--ckpt", ckpt, "checkpoint (CVCK)")->required();
    c->add_option("--pano", pano, "panorama PNG")->required();
    c->add_option("--tile", tile, "aerial tile PNG")->required();
    c->add_option("--out", out, "output RGB PNG: the tile with the similarity map in red")->required();
    c->callback([this] { run(); });
  }

  void run() const {
    const auto ck = load_checkpoint(ckpt);
    const Image t = read_png(tile);
    const Tensor heat = similarity_heatmap(ck, read_png(pano), t);
    const int mh = static_cast<int>(heat.extent(0)), mw = static_cast<int>(heat.extent(1));
    const auto [lo_it, hi_it] = std::minmax_element(heat.data().begin(), heat.data().end());
    const float lo = *lo_it, span = std::max(*hi_it - lo, 1e-6f);
    Image vis(t.width, t.height, 3);
    for (int r = 0; r < t.height; ++r)
      for (int c = 0; c < t.width; ++c) {
        const int hr = std::min(mh - 1, r * mh / t.height), hc = std::min(mw - 1, c * mw / t.width);
        const float h = (heat[static_cast<std::size_t>(hr) * mw + hc] - lo) / span;
        const float g = t.at(r, c);
        vis.at(r, c, 0) = 0.5f * g + 0.5f * h;
        vis.at(r, c, 1) = 0.5f * g;
        vis.at(r, c, 2) = 0.5f * g * (1.0f - h);
      }
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_png(out, vis);
    const auto best = static_cast<int>(std::max_element(heat.data().begin(), heat.data().end()) - heat.data().begin());
    std::cout << "map " << mh << 'x' << mw << ", peak at row " << best / mw << " col " << best % mw << " ("
              << *hi_it << ")\n";
  }
};

// ---- config -----------------------------------------------------------------

struct ConfigCmd {
  ConfigFlags config;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("config", "print the effective configuration (defaults when no file is given)");
    config.add(c);
    c->callback([this] { std::cout << config_to_json(config.resolve()).dump(2) << '\n'; });
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-view geo-localization on procedurally generated worlds"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads; overrides CVGEO_THREADS (default 1)")
      ->check(CLI::NonNegativeNumber);
  app.parse_complete_callback([&] { set_num_threads(threads); });

  GenDataCmd gen;
  BevCmd bev;
  GridStatsCmd grid;
  DecentralityCmd dec;
  TrainCmd tr;
  EmbedCmd emb;
  EvalCmd ev;
  HeatmapCmd hm;
  ConfigCmd cf;
  gen.setup(app);
  bev.setup(app);
  grid.setup(app);
  dec.setup(app);
  tr.setup(app);
  emb.setup(app);
  ev.setup(app);
  hm.setup(app);
  cf.setup(app);
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "cvgeo: ArgumentError: " << e.what() << '\n';
    return kExitArgs;
  } catch (const Error& e) {
    std::cerr << "cvgeo: " << e.kind() << ": " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "cvgeo: InternalError: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
