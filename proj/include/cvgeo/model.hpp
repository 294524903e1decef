#pragma once

// Weight-shared convolutional encoder for the street, BEV and aerial views,
// the training loop, checkpoints, and inference-time embedding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cvgeo/binary_io.hpp"
#include "cvgeo/geometry.hpp"
#include "cvgeo/losses.hpp"
#include "cvgeo/noise.hpp"
#include "cvgeo/ops.hpp"
#include "cvgeo/retrieval.hpp"
#include "cvgeo/worldgen.hpp"

namespace cvgeo {

/// Three 3x3 stride-2 convolutions with 8, 16 and C output channels.
struct EncoderParams {
  int channels = 32;
  Tensor k1, b1, k2, b2, k3, b3;

  static EncoderParams init(std::uint64_t seed, int channels = 32) {
    if (channels <= 0) throw ArgumentError("encoder: channel count must be > 0");
    EncoderParams p;
    p.channels = channels;
    Rng rng(splitmix64(seed ^ 0xe4c0de5ULL));
    auto kernel = [&](std::size_t cin, std::size_t cout, double gain) {
      Tensor k({3, 3, cin, cout});
      const double sd = std::sqrt(gain / (9.0 * static_cast<double>(cin)));
      for (auto& v : k.data()) v = static_cast<float>(sd * rng.normal());
      return k;
    };
    const auto c = static_cast<std::size_t>(channels);
    p.k1 = kernel(1, 8, 2.0);
    p.b1 = Tensor({8});
    p.k2 = kernel(8, 16, 2.0);
    p.b2 = Tensor({16});
    p.k3 = kernel(16, c, 1.0);
    p.b3 = Tensor({c});
    return p;
  }

  std::vector<std::pair<std::string, Tensor*>> named() {
    return {{"conv1.weight", &k1}, {"conv1.bias", &b1}, {"conv2.weight", &k2},
            {"conv2.bias", &b2},   {"conv3.weight", &k3}, {"conv3.bias", &b3}};
  }
  std::vector<std::pair<std::string, const Tensor*>> named() const {
    return {{"conv1.weight", &k1}, {"conv1.bias", &b1}, {"conv2.weight", &k2},
            {"conv2.bias", &b2},   {"conv3.weight", &k3}, {"conv3.bias", &b3}};
  }

  EncoderParams clone() const {
    EncoderParams out = *this;
    for (auto& [name, t] : out.named()) *t = t->clone();
    return out;
  }
};

/// Stacks equally sized grayscale images into [B,H,W,1], mapped to [-1,1].
inline Tensor image_batch(const std::vector<const Image*>& images) {
  if (images.empty()) throw ArgumentError("image_batch: no images");
  const int h = images.front()->height, w = images.front()->width;
  Tensor x({images.size(), static_cast<std::size_t>(h), static_cast<std::size_t>(w), 1});
  auto out = x.data();
  std::size_t o = 0;
  for (const Image* img : images) {
    if (img->height != h || img->width != w || img->channels != 1) {
      throw ShapeError("image_batch: images must share size and be grayscale");
    }
    for (float v : img->data) out[o++] = (v - 0.5f) * 2.0f;
  }
  return x;
}

struct Encoded {
  Tensor fmap;  // F: [B,H/8,W/8,C], last convolution output
  Tensor f;     // [B,C], L2-normalized global average of F
};

inline Encoded encode(const EncoderParams& p, const Tensor& x, Tape<float>* tape = nullptr) {
  if (x.dim() != 4) throw ShapeError("encode: expected [B,H,W,1], got " + shape_str(x.shape()));
  if (x.extent(1) % 8 != 0 || x.extent(2) % 8 != 0) {
    throw ShapeError("encode: image size " + std::to_string(x.extent(2)) + "x" + std::to_string(x.extent(1)) +
                     " is not divisible by 8");
  }
  auto h = ops::relu(ops::conv2d(x, p.k1, p.b1, 2, tape), tape);
  h = ops::relu(ops::conv2d(h, p.k2, p.b2, 2, tape), tape);
  Encoded e;
  e.fmap = ops::conv2d(h, p.k3, p.b3, 2, tape);
  e.f = ops::l2_normalize(ops::global_avg_pool(e.fmap, tape), 1e-12, tape);
  return e;
}

inline Encoded encode(const EncoderParams& p, const Image& image) { return encode(p, image_batch({&image})); }

class Adam {
 public:
  Adam(std::vector<Tensor*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.emplace_back(p->numel(), 0.0);
      v_.emplace_back(p->numel(), 0.0);
    }
  }

  /// Applies one update from the accumulated gradients, then clears them.
  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = *params_[i];
      if (!p.has_grad()) continue;
      auto g = p.grad();
      auto d = p.data();
      for (std::size_t k = 0; k < p.numel(); ++k) {
        m_[i][k] = b1_ * m_[i][k] + (1 - b1_) * g[k];
        v_[i][k] = b2_ * v_[i][k] + (1 - b2_) * double(g[k]) * g[k];
        d[k] = static_cast<float>(d[k] - lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_));
      }
      p.zero_grad();
    }
  }

 private:
  std::vector<Tensor*> params_;
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainConfig {
  int epochs = 6;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  LossWeights weights;
  double match_temp = 0.05;
  int bev_size = 64;
  double bev_res = 1.0;  // metres per BEV pixel
  int channels = 32;
  int max_steps = 0;  // stop after this many steps; 0 runs every epoch
};

inline nlohmann::json to_json_value(const LossWeights& w) {
  return {{"lambda_bev_street", w.lambda_bev_street},
          {"lambda_bev_aerial", w.lambda_bev_aerial},
          {"lambda_pcm", w.lambda_pcm},
          {"tau", w.tau},
          {"learnable_tau", w.learnable_tau}};
}

inline nlohmann::json to_json_value(const TrainConfig& c) {
  return {{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"lr", c.lr},
          {"seed", c.seed},             {"loss", to_json_value(c.weights)}, {"match_temp", c.match_temp},
          {"bev_size", c.bev_size},     {"bev_res", c.bev_res},       {"channels", c.channels},
          {"max_steps", c.max_steps}};
}

struct Checkpoint {
  EncoderParams params;
  double tau = 0.05;  // learned value when τ is learnable
  nlohmann::json config;
  int epoch = 0;
  std::vector<double> loss_trace;  // total loss per step
};

/// Query location on the level-1 aerial feature map of its tile, in the
/// pixel-centre coordinates used by soft matching.
inline PositionPrior position_prior(Point2 location, Point2 tile_center, double tile_size, std::size_t map_w,
                                    std::size_t map_h) {
  const double west = tile_center.x - tile_size / 2, north = tile_center.y + tile_size / 2;
  const double x = (location.x - west) / tile_size * static_cast<double>(map_w) - 0.5;
  const double y = (north - location.y) / tile_size * static_cast<double>(map_h) - 0.5;
  return {std::clamp(x, 0.0, static_cast<double>(map_w - 1)), std::clamp(y, 0.0, static_cast<double>(map_h - 1))};
}

struct TrainProgress {
  int epoch = 0;
  int step = 0;
  double loss = 0.0;
  double mean_epoch_loss = 0.0;  // set at the end of an epoch, else 0
};

namespace detail {

inline bool needs_bev(const LossWeights& w) {
  return w.lambda_bev_street > 0 || w.lambda_bev_aerial > 0 || w.lambda_pcm > 0;
}

/// Shuffled batches in which every tile appears at most once. Pairs that
/// would repeat a tile are deferred to a later batch of the same epoch.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                          const std::vector<std::uint32_t>& tile_of,
                                                          std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> pending(order);
  while (pending.size() >= batch_size) {
    std::vector<std::size_t> batch, rest;
    std::set<std::uint32_t> used;
    for (std::size_t idx : pending) {
      if (batch.size() < batch_size && used.insert(tile_of[idx]).second) {
        batch.push_back(idx);
      } else {
        rest.push_back(idx);
      }
    }
    if (batch.size() < batch_size) break;
    batches.push_back(std::move(batch));
    pending = std::move(rest);
  }
  return batches;
}

}  // namespace detail

/// Trains the shared encoder on the training split of a rendered dataset.
inline Checkpoint train(const DatasetManifest& manifest, const DatasetImages& images, const TrainConfig& cfg,
                        const std::function<void(const TrainProgress&)>& progress = {}) {
  if (cfg.batch_size < 2) throw ArgumentError("train: batch size must be >= 2 for in-batch negatives");
  if (cfg.epochs < 0 || cfg.max_steps < 0) throw ArgumentError("train: epochs and max_steps must be >= 0");
  if (!(cfg.lr >= 0)) throw ArgumentError("train: learning rate must be >= 0");
  if (!(cfg.weights.tau > 0)) throw ArgumentError("train: tau must be > 0");
  if (images.panos.size() != manifest.panos.size() || images.tiles.size() != manifest.tiles.size()) {
    throw ArgumentError("train: images do not match the manifest");
  }
  const auto b = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> train_idx;
  std::vector<std::uint32_t> tile_of(manifest.panos.size());
  std::set<std::uint32_t> train_tiles;
  for (std::size_t i = 0; i < manifest.panos.size(); ++i) {
    tile_of[i] = manifest.panos[i].tile_id;
    if (manifest.panos[i].split == Split::Train) {
      train_idx.push_back(i);
      train_tiles.insert(tile_of[i]);
    }
  }
  if (train_idx.size() < b || train_tiles.size() < b) {
    throw ArgumentError("train: insufficient data, " + std::to_string(train_idx.size()) + " training pairs over " +
                        std::to_string(train_tiles.size()) + " tiles for batch size " + std::to_string(b));
  }

  // BEV images are a training-time input only; render each once.
  const bool use_bev = detail::needs_bev(cfg.weights);
  std::vector<Image> bev(manifest.panos.size());
  if (use_bev) {
    parallel_for(train_idx.size(), [&](std::size_t k) {
      const std::size_t i = train_idx[k];
      bev[i] = geometry::pano_to_bev(geometry::EquirectImage(images.panos[i]), manifest.panos[i].cam_height,
                                     cfg.bev_size, cfg.bev_res)
                   .image;
    });
  }

  Checkpoint ck;
  ck.params = EncoderParams::init(cfg.seed, cfg.channels);
  ck.config = to_json_value(cfg);
  Tensor log_tau = Tensor::scalar(static_cast<float>(std::log(cfg.weights.tau)));
  std::vector<Tensor*> trainable;
  for (auto& [name, t] : ck.params.named()) {
    t->set_requires_grad();
    trainable.push_back(t);
  }
  if (cfg.weights.learnable_tau) {
    log_tau.set_requires_grad();
    trainable.push_back(&log_tau);
  }
  Adam opt(trainable, cfg.lr);

  Rng rng(splitmix64(cfg.seed ^ 0xba7c4e5ULL));
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_idx);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto batches = detail::make_batches(order, tile_of, b);
    double epoch_sum = 0;
    int epoch_steps = 0;
    for (const auto& batch : batches) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
      std::vector<const Image*> street, aerial, bev_imgs;
      for (std::size_t i : batch) {
        street.push_back(&images.panos[i]);
        aerial.push_back(&images.tiles[tile_of[i]]);
        if (use_bev) bev_imgs.push_back(&bev[i]);
      }
      Tape<float> tape;
      double loss = 0;
      try {
        const Tensor tau = cfg.weights.learnable_tau ? ops::exp(log_tau, &tape) : Tensor::scalar(static_cast<float>(cfg.weights.tau));
        const Encoded es = encode(ck.params, image_batch(street), &tape);
        const Encoded ea = encode(ck.params, image_batch(aerial), &tape);
        BatchFeatures<float> feats{es.f, Tensor(), ea.f, ea.fmap};
        if (use_bev) feats.bev = encode(ck.params, image_batch(bev_imgs), &tape).f;
        std::vector<PositionPrior> priors;
        const std::size_t mh = ea.fmap.extent(1), mw = ea.fmap.extent(2);
        for (std::size_t i : batch) {
          const auto& p = manifest.panos[i];
          priors.push_back(position_prior(p.location, manifest.tiles[p.tile_id].center, manifest.tile_size, mw, mh));
        }
        auto terms = total_loss(feats, priors, cfg.weights, tau, cfg.match_temp, &tape);
        loss = terms.total.item();
        if (!std::isfinite(loss)) throw NumericError("loss is not finite");
        tape.backward(terms.total);
      } catch (const NumericError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step) + ": " + e.what());
      }
      opt.step();
      for (auto* t : trainable) {
        for (float v : t->data()) {
          if (!std::isfinite(v)) {
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(step) + ": non-finite parameter");
          }
        }
      }
      ck.loss_trace.push_back(loss);
      epoch_sum += loss;
      ++epoch_steps;
      ++step;
      if (progress) progress({epoch, step, loss, 0.0});
    }
    ck.epoch = epoch + 1;
    if (progress && epoch_steps > 0) progress({epoch, step, ck.loss_trace.back(), epoch_sum / epoch_steps});
    if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
  }
  for (auto& [name, t] : ck.params.named()) {
    t->set_requires_grad(false);
    t->drop_grad();
  }
  ck.tau = cfg.weights.learnable_tau ? std::exp(double(log_tau[0])) : cfg.weights.tau;
  return ck;
}

/// Street-branch (queries) or aerial-branch (references) embeddings. Queries
/// may be restricted to one split. Only the encoder runs: no BEV and no
/// position loss.
inline EmbeddingDatabase embed_all(const Checkpoint& ck, const DatasetManifest& manifest, const DatasetImages& images,
                                   DbKind which, std::optional<Split> split = std::nullopt, std::size_t batch = 32) {
  EmbeddingDatabase db;
  db.kind = which;
  db.dim = static_cast<std::size_t>(ck.params.channels);
  db.tile_size = manifest.tile_size;
  std::vector<const Image*> inputs;
  if (which == DbKind::References) {
    if (images.tiles.size() != manifest.tiles.size()) throw ArgumentError("embed_all: tile images missing");
    for (std::size_t i = 0; i < manifest.tiles.size(); ++i) {
      const auto& t = manifest.tiles[i];
      db.ids.push_back(t.id);
      db.meta.push_back({t.center, t.id, Subset::S1, 0.0});
      inputs.push_back(&images.tiles[i]);
    }
  } else {
    if (images.panos.size() != manifest.panos.size()) throw ArgumentError("embed_all: panorama images missing");
    for (std::size_t i = 0; i < manifest.panos.size(); ++i) {
      const auto& p = manifest.panos[i];
      if (split && p.split != *split) continue;
      db.ids.push_back(p.id);
      db.meta.push_back({p.location, p.tile_id, p.subset, p.d_norm});
      inputs.push_back(&images.panos[i]);
    }
  }
  db.matrix.resize(inputs.size() * db.dim);
  for (std::size_t start = 0; start < inputs.size(); start += batch) {
    const std::size_t end = std::min(inputs.size(), start + batch);
    const Encoded e = encode(ck.params, image_batch({inputs.begin() + static_cast<std::ptrdiff_t>(start),
                                                     inputs.begin() + static_cast<std::ptrdiff_t>(end)}));
    std::copy(e.f.data().begin(), e.f.data().end(), db.matrix.begin() + static_cast<std::ptrdiff_t>(start * db.dim));
  }
  return db;
}

/// Cosine similarity of a panorama's embedding with every cell of a tile's
/// fine-grained feature map, [H/8, W/8].
inline Tensor similarity_heatmap(const Checkpoint& ck, const Image& pano, const Image& tile) {
  const Encoded q = encode(ck.params, pano);
  const Encoded r = encode(ck.params, tile);
  return similarity_map(ops::select(q.f, 0), ops::select(r.fmap, 0));
}

// ---- CVCK files ---------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  ByteWriter w;
  w.bytes("CVCK");
  w.u32(kCheckpointVersion);
  const nlohmann::json header = {{"config", ck.config},
                                 {"epoch", ck.epoch},
                                 {"tau", ck.tau},
                                 {"channels", ck.params.channels},
                                 {"loss_trace", ck.loss_trace}};
  w.str(header.dump());
  const auto named = ck.params.named();
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t->dim()));
    for (auto d : t->shape()) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(t->data());
  }
  return w.buffer();
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline Checkpoint decode_checkpoint(ByteReader in) {
  expect_magic(in, "CVCK");
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("'" + in.source() + "' has checkpoint format version " + std::to_string(version) +
                       ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  const std::string header_text = in.str();
  try {
    const auto header = nlohmann::json::parse(header_text);
    ck.config = header.at("config");
    header.at("epoch").get_to(ck.epoch);
    header.at("tau").get_to(ck.tau);
    header.at("loss_trace").get_to(ck.loss_trace);
    ck.params.channels = header.at("channels").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + in.source() + "' has a malformed header: " + e.what());
  }
  const auto expected = EncoderParams::init(0, ck.params.channels);
  const auto want = expected.named();
  const auto count = in.u32();
  if (count != want.size()) throw FormatError("'" + in.source() + "' holds " + std::to_string(count) + " tensors");
  for (auto& [name, t] : ck.params.named()) {
    const std::string found = in.str();
    if (found != name) throw FormatError("'" + in.source() + "' has tensor '" + found + "' where '" + name + "' belongs");
    Shape shape(in.u32());
    for (auto& d : shape) d = in.u32();
    const Tensor* ref = nullptr;
    for (const auto& [n, r] : want)
      if (n == name) ref = r;
    if (shape != ref->shape()) {
      throw FormatError("'" + in.source() + "' tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                        shape_str(ref->shape()));
    }
    *t = Tensor(shape);
    in.f32s(t->data());
  }
  if (in.remaining() != 0) throw FormatError("'" + in.source() + "' has trailing bytes");
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(ByteReader::open(path));
}

}  // namespace cvgeo
