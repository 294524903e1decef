#pragma once

// Exact cosine retrieval over an embedding database, recall and hit-rate
// metrics, and per-decentrality-band evaluation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cvgeo/binary_io.hpp"
#include "cvgeo/common.hpp"
#include "cvgeo/gridlab.hpp"
#include "cvgeo/parallel.hpp"

namespace cvgeo {

enum class DbKind : std::uint8_t { Queries = 0, References = 1 };

inline std::string kind_name(DbKind k) { return k == DbKind::Queries ? "queries" : "references"; }

/// Per-row geometry. References carry their tile centre; queries carry the
/// pano location, the ground-truth tile and the decentrality band.
struct RowMeta {
  Point2 location;
  std::uint32_t gt_id = 0;
  Subset subset = Subset::S1;
  double d_norm = 0.0;
};

/// N x C row-major matrix of unit rows with ids and geometry.
struct EmbeddingDatabase {
  DbKind kind = DbKind::References;
  std::size_t dim = 0;
  std::vector<float> matrix;
  std::vector<std::uint32_t> ids;
  std::vector<RowMeta> meta;
  double tile_size = 0.0;  // footprint side of reference rows

  std::size_t size() const { return ids.size(); }
  std::span<const float> row(std::size_t i) const { return {matrix.data() + i * dim, dim}; }

  /// Checks shape consistency, unique ids and unit row norms.
  void validate() const {
    if (matrix.size() != ids.size() * dim || meta.size() != ids.size()) {
      throw FormatError("embedding database: inconsistent matrix, id and metadata sizes");
    }
    std::unordered_set<std::uint32_t> seen;
    for (std::size_t i = 0; i < size(); ++i) {
      if (!seen.insert(ids[i]).second) throw FormatError("embedding database: duplicate id " + std::to_string(ids[i]));
      double n = 0;
      for (float v : row(i)) n += double(v) * v;
      if (std::abs(std::sqrt(n) - 1.0) > 1e-4) {
        throw FormatError("embedding database: row " + std::to_string(i) + " is not unit length");
      }
    }
  }
};

inline double cosine(std::span<const float> a, std::span<const float> b) {
  double acc = 0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += double(a[k]) * b[k];
  return acc;
}

struct ScoredId {
  std::uint32_t id = 0;
  double score = 0.0;
};

/// Higher score first; equal scores go to the smaller id.
inline bool ranks_before(const ScoredId& a, const ScoredId& b) {
  return a.score > b.score || (a.score == b.score && a.id < b.id);
}

/// Exact top-K by cosine against every row.
inline std::vector<ScoredId> top_k(const EmbeddingDatabase& db, std::span<const float> q, std::size_t k) {
  if (db.size() == 0) throw ArgumentError("top_k: empty database");
  if (k < 1 || k > db.size()) {
    throw ArgumentError("top_k: K must lie in [1, " + std::to_string(db.size()) + "], got " + std::to_string(k));
  }
  if (q.size() != db.dim) throw ShapeError("top_k: query dimension does not match the database");
  std::vector<ScoredId> all(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) all[i] = {db.ids[i], cosine(db.row(i), q)};
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), ranks_before);
  all.resize(k);
  return all;
}

/// K used for "R@1%".
inline std::size_t one_percent_k(std::size_t n) { return std::max<std::size_t>(1, (n + 99) / 100); }

namespace detail {

inline std::unordered_map<std::uint32_t, std::size_t> index_of(const EmbeddingDatabase& db) {
  std::unordered_map<std::uint32_t, std::size_t> m;
  for (std::size_t i = 0; i < db.size(); ++i) m.emplace(db.ids[i], i);
  return m;
}

inline void check_pair(const EmbeddingDatabase& refs, const EmbeddingDatabase& queries) {
  if (refs.size() == 0) throw ArgumentError("retrieval: empty reference database");
  if (refs.dim != queries.dim) throw ShapeError("retrieval: query and reference dimensions differ");
}

}  // namespace detail

/// 0-based rank of each query's ground-truth reference under the top_k
/// ordering.
inline std::vector<std::size_t> gt_ranks(const EmbeddingDatabase& refs, const EmbeddingDatabase& queries) {
  detail::check_pair(refs, queries);
  const auto index = detail::index_of(refs);
  std::vector<std::size_t> ranks(queries.size());
  parallel_for(queries.size(), [&](std::size_t qi) {
    const auto it = index.find(queries.meta[qi].gt_id);
    if (it == index.end()) {
      throw ArgumentError("retrieval: query " + std::to_string(queries.ids[qi]) + " has no ground-truth reference " +
                          std::to_string(queries.meta[qi].gt_id));
    }
    const auto q = queries.row(qi);
    const ScoredId gt{refs.ids[it->second], cosine(refs.row(it->second), q)};
    std::size_t rank = 0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (ranks_before({refs.ids[i], cosine(refs.row(i), q)}, gt)) ++rank;
    }
    ranks[qi] = rank;
  });
  return ranks;
}

inline double percent(std::size_t hits, std::size_t n) { return n == 0 ? 0.0 : 100.0 * hits / n; }

/// Percentage of queries whose ground truth is among the top K.
inline double recall_at(const EmbeddingDatabase& refs, const EmbeddingDatabase& queries, std::size_t k) {
  const auto ranks = gt_ranks(refs, queries);
  return percent(static_cast<std::size_t>(std::count_if(ranks.begin(), ranks.end(), [k](auto r) { return r < k; })),
                 ranks.size());
}

/// Percentage of queries whose top-1 reference footprint contains the query
/// location.
inline double hit_rate(const EmbeddingDatabase& refs, const EmbeddingDatabase& queries) {
  detail::check_pair(refs, queries);
  if (!(refs.tile_size > 0)) throw ArgumentError("hit_rate: reference database has no tile footprint size");
  const auto index = detail::index_of(refs);
  std::vector<std::uint8_t> hit(queries.size(), 0);
  parallel_for(queries.size(), [&](std::size_t qi) {
    const auto top = top_k(refs, queries.row(qi), 1).front();
    const Point2 c = refs.meta[index.at(top.id)].location;
    const Point2 p = queries.meta[qi].location;
    const double half = refs.tile_size / 2;
    hit[qi] = std::abs(p.x - c.x) <= half && std::abs(p.y - c.y) <= half;
  });
  return percent(static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1)), hit.size());
}

struct EvalReport {
  double r1 = 0, r5 = 0, r10 = 0, r1p = 0, hit = 0;
  std::size_t k1p = 1;
  std::array<std::optional<double>, 4> subset_r1;  // absent when a band has no queries
  std::array<std::size_t, 4> subset_n{};
  std::size_t n_queries = 0;
  std::size_t n_references = 0;

  std::string to_csv() const {
    std::ostringstream os;
    os << "metric,value,n\n" << std::fixed << std::setprecision(4);
    os << "R@1," << r1 << ',' << n_queries << '\n';
    os << "R@5," << r5 << ',' << n_queries << '\n';
    os << "R@10," << r10 << ',' << n_queries << '\n';
    os << "R@1%," << r1p << ',' << n_queries << '\n';
    os << "hit_rate," << hit << ',' << n_queries << '\n';
    for (int k = 0; k < 4; ++k) {
      os << "R@1_S" << k + 1 << ',';
      if (subset_r1[k]) os << *subset_r1[k];
      os << ',' << subset_n[k] << '\n';
    }
    os << "references,," << n_references << '\n';
    return os.str();
  }

  std::string to_table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "queries " << n_queries << ", references " << n_references << ", R@1% uses K=" << k1p << '\n';
    os << "  R@1     R@5     R@10    R@1%    Hit\n";
    os << std::setw(7) << r1 << ' ' << std::setw(7) << r5 << ' ' << std::setw(7) << r10 << ' ' << std::setw(7) << r1p
       << ' ' << std::setw(7) << hit << '\n';
    os << "  R@1 by decentrality band:";
    for (int k = 0; k < 4; ++k) {
      os << "  S" << k + 1 << ' ';
      if (subset_r1[k]) {
        os << *subset_r1[k];
      } else {
        os << '-';
      }
      os << " (n=" << subset_n[k] << ')';
    }
    os << '\n';
    return os.str();
  }
};

/// Overall metrics plus R@1 restricted to each decentrality band.
inline EvalReport stratified_eval(const EmbeddingDatabase& refs, const EmbeddingDatabase& queries) {
  if (queries.size() == 0) throw ArgumentError("stratified_eval: no queries");
  const auto ranks = gt_ranks(refs, queries);
  EvalReport rep;
  rep.n_queries = queries.size();
  rep.n_references = refs.size();
  rep.k1p = one_percent_k(refs.size());
  auto within = [&](std::size_t k) {
    return percent(static_cast<std::size_t>(std::count_if(ranks.begin(), ranks.end(), [k](auto r) { return r < k; })),
                   ranks.size());
  };
  rep.r1 = within(1);
  rep.r5 = within(5);
  rep.r10 = within(10);
  rep.r1p = within(rep.k1p);
  rep.hit = hit_rate(refs, queries);
  std::array<std::size_t, 4> hits{};
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const int s = subset_index(queries.meta[i].subset);
    ++rep.subset_n[s];
    if (ranks[i] == 0) ++hits[s];
  }
  for (int s = 0; s < 4; ++s) {
    if (rep.subset_n[s] > 0) rep.subset_r1[s] = percent(hits[s], rep.subset_n[s]);
  }
  return rep;
}

// ---- CVGE files ---------------------------------------------------------------

inline constexpr std::uint32_t kEmbeddingVersion = 1;

inline nlohmann::json db_metadata(const EmbeddingDatabase& db) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < db.size(); ++i) {
    const auto& m = db.meta[i];
    nlohmann::json r = {{"id", db.ids[i]}, {"x", m.location.x}, {"y", m.location.y}};
    if (db.kind == DbKind::Queries) {
      r["gt"] = m.gt_id;
      r["subset"] = static_cast<int>(m.subset);
      r["d_norm"] = m.d_norm;
    }
    rows.push_back(std::move(r));
  }
  return {{"kind", kind_name(db.kind)}, {"tile_size", db.tile_size}, {"rows", std::move(rows)}};
}

inline std::vector<std::uint8_t> encode_db(const EmbeddingDatabase& db) {
  db.validate();
  ByteWriter w;
  w.bytes("CVGE");
  w.u32(kEmbeddingVersion);
  w.u32(static_cast<std::uint32_t>(db.size()));
  w.u32(static_cast<std::uint32_t>(db.dim));
  w.u8(static_cast<std::uint8_t>(db.kind));
  w.f32s(db.matrix);
  w.str(db_metadata(db).dump());
  return w.buffer();
}

inline void save_db(const std::filesystem::path& path, const EmbeddingDatabase& db) {
  const auto bytes = encode_db(db);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline EmbeddingDatabase decode_db(ByteReader in) {
  expect_magic(in, "CVGE");
  const auto version = in.u32();
  if (version != kEmbeddingVersion) {
    throw VersionError("'" + in.source() + "' has embedding format version " + std::to_string(version) +
                       ", this build reads version " + std::to_string(kEmbeddingVersion));
  }
  EmbeddingDatabase db;
  const std::size_t n = in.u32();
  db.dim = in.u32();
  const auto kind = in.u8();
  if (kind > 1) throw FormatError("'" + in.source() + "' has unknown database kind " + std::to_string(kind));
  db.kind = static_cast<DbKind>(kind);
  if (in.remaining() < n * db.dim * 4) {
    throw TruncationError("'" + in.source() + "' is truncated inside the embedding matrix");
  }
  db.matrix.resize(n * db.dim);
  in.f32s(db.matrix);
  const std::string meta_text = in.str();
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    meta.at("tile_size").get_to(db.tile_size);
    const auto& rows = meta.at("rows");
    if (rows.size() != n) throw FormatError("'" + in.source() + "' metadata row count differs from N");
    for (const auto& r : rows) {
      db.ids.push_back(r.at("id").get<std::uint32_t>());
      RowMeta m;
      m.location = {r.at("x").get<double>(), r.at("y").get<double>()};
      if (db.kind == DbKind::Queries) {
        m.gt_id = r.at("gt").get<std::uint32_t>();
        const int s = r.at("subset").get<int>();
        if (s < 1 || s > 4) throw FormatError("'" + in.source() + "' has subset out of range");
        m.subset = static_cast<Subset>(s);
        m.d_norm = r.at("d_norm").get<double>();
      } else {
        m.gt_id = db.ids.back();
      }
      db.meta.push_back(m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + in.source() + "' has malformed metadata: " + e.what());
  }
  if (in.remaining() != 0) throw FormatError("'" + in.source() + "' has trailing bytes");
  db.validate();
  return db;
}

inline EmbeddingDatabase load_db(const std::filesystem::path& path) { return decode_db(ByteReader::open(path)); }

}  // namespace cvgeo
