#include "pcs/media.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "pcs/errors.hpp"
#include "pcs/rng.hpp"

namespace pcs {

namespace {

std::string slot_name(int tile, int chunk, int level) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "tile %d chunk %d level %d", tile, chunk,
                level);
  return buf;
}

}  // namespace

std::array<int, 3> TileGrid::tile_coords(int id) const {
  return {id % nx, (id / nx) % ny, id / (nx * ny)};
}

void TileGrid::tile_bounds(int id, std::array<double, 3>& lo,
                           std::array<double, 3>& hi) const {
  auto c = tile_coords(id);
  for (int k = 0; k < 3; ++k) {
    lo[k] = origin[k] + tile_extent[k] * c[k];
    hi[k] = lo[k] + tile_extent[k];
  }
}

std::array<double, 3> TileGrid::center() const {
  std::array<int, 3> dims = {nx, ny, nz};
  std::array<double, 3> c;
  for (int k = 0; k < 3; ++k)
    c[k] = origin[k] + 0.5 * tile_extent[k] * dims[k];
  return c;
}

const TileVariant& TileManifest::variant(int tile, int chunk,
                                         int level) const {
  if (tile < 0 || tile >= grid.tile_count() || chunk < 0 ||
      chunk >= chunk_count || level < 1 || level > level_count)
    throw ValidationError("variant lookup out of range: " +
                          slot_name(tile, chunk, level));
  std::size_t idx =
      (static_cast<std::size_t>(tile) * chunk_count + chunk) * level_count +
      (level - 1);
  return variants[idx];
}

void validate_manifest(const TileManifest& m) {
  if (m.grid.nx < 1 || m.grid.ny < 1 || m.grid.nz < 1)
    throw ValidationError("grid dimensions must be >= 1");
  for (int k = 0; k < 3; ++k)
    if (!(m.grid.tile_extent[k] > 0.0))
      throw ValidationError("tile extent must be positive on every axis");
  if (m.chunk_count < 1) throw ValidationError("chunk_count must be >= 1");
  if (m.level_count < 1) throw ValidationError("level_count must be >= 1");
  if (!(m.chunk_duration_ms > 0.0))
    throw ValidationError("chunk_duration_ms must be positive");
  std::size_t expect = static_cast<std::size_t>(m.grid.tile_count()) *
                       m.chunk_count * m.level_count;
  if (m.variants.size() != expect)
    throw ValidationError("variant table holds " +
                          std::to_string(m.variants.size()) + " entries, " +
                          std::to_string(expect) + " expected");

  for (int t = 0; t < m.grid.tile_count(); ++t) {
    for (int c = 0; c < m.chunk_count; ++c) {
      for (int l = 1; l <= m.level_count; ++l) {
        const TileVariant& v = m.variant(t, c, l);
        if (v.level != l)
          throw ValidationError("level field mismatch at " +
                                slot_name(t, c, l));
        if (v.comp_bytes <= 0)
          throw ValidationError("compressed size must be positive at " +
                                slot_name(t, c, l));
        if (v.uncomp_bytes <= v.comp_bytes)
          throw ValidationError(
              "uncompressed size must exceed compressed size at " +
              slot_name(t, c, l));
        if (v.decode_cost < 0.0)
          throw ValidationError("decode cost must be non-negative at " +
                                slot_name(t, c, l));
        if (!(v.sample_ratio > 0.0 && v.sample_ratio <= 1.0))
          throw ValidationError("sample ratio must lie in (0, 1] at " +
                                slot_name(t, c, l));
        if (l > 1) {
          const TileVariant& prev = m.variant(t, c, l - 1);
          if (v.comp_bytes < prev.comp_bytes ||
              v.uncomp_bytes < prev.uncomp_bytes)
            throw ValidationError("sizes must be non-decreasing in level at " +
                                  slot_name(t, c, l));
          if (v.psnr_db <= prev.psnr_db)
            throw ValidationError(
                "psnr must be strictly increasing in level at " +
                slot_name(t, c, l));
          if (v.decode_cost < prev.decode_cost)
            throw ValidationError(
                "decode cost must be non-decreasing in level at " +
                slot_name(t, c, l));
          if (v.sample_ratio < prev.sample_ratio)
            throw ValidationError(
                "sample ratio must be non-decreasing in level at " +
                slot_name(t, c, l));
        }
      }
    }
  }
}

TileManifest parse_manifest(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  TileManifest m;
  try {
    if (doc.at("version").get<int>() != 1)
      throw ParseError("manifest: unsupported version " +
                       doc.at("version").dump());
    m.video_id = doc.at("video_id").get<std::string>();
    const auto& g = doc.at("grid");
    m.grid.nx = g.at("nx").get<int>();
    m.grid.ny = g.at("ny").get<int>();
    m.grid.nz = g.at("nz").get<int>();
    for (int k = 0; k < 3; ++k) {
      m.grid.tile_extent[k] = g.at("extent").at(k).get<double>();
      m.grid.origin[k] = g.at("origin").at(k).get<double>();
    }
    m.chunk_duration_ms = doc.at("chunk_duration_ms").get<double>();
    m.chunk_count = doc.at("chunks").get<int>();
    const auto& tiles = doc.at("tiles");
    if (!tiles.is_array() ||
        tiles.size() != static_cast<std::size_t>(m.grid.tile_count()))
      throw ParseError("manifest: tiles array must hold " +
                       std::to_string(m.grid.tile_count()) + " entries");
    m.level_count = 0;
    for (std::size_t t = 0; t < tiles.size(); ++t) {
      const auto& per_chunk = tiles[t].at("levels");
      if (!per_chunk.is_array() ||
          per_chunk.size() != static_cast<std::size_t>(m.chunk_count))
        throw ParseError("manifest: tile " + std::to_string(t) +
                         " must carry one levels row per chunk");
      for (std::size_t c = 0; c < per_chunk.size(); ++c) {
        const auto& row = per_chunk[c];
        if (m.level_count == 0) m.level_count = static_cast<int>(row.size());
        if (!row.is_array() ||
            row.size() != static_cast<std::size_t>(m.level_count) ||
            m.level_count == 0)
          throw ParseError("manifest: tile " + std::to_string(t) + " chunk " +
                           std::to_string(c) + ": ragged levels row");
        for (const auto& e : row) {
          TileVariant v;
          v.level = e.at("level").get<int>();
          v.comp_bytes = e.at("comp_bytes").get<std::int64_t>();
          v.uncomp_bytes = e.at("uncomp_bytes").get<std::int64_t>();
          v.psnr_db = e.at("psnr_db").get<double>();
          v.decode_cost = e.at("decode_cost").get<double>();
          v.sample_ratio = e.at("sample_ratio").get<double>();
          m.variants.push_back(v);
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  validate_manifest(m);
  return m;
}

std::string serialize_manifest(const TileManifest& m) {
  validate_manifest(m);
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["video_id"] = m.video_id;
  doc["grid"] = {{"nx", m.grid.nx},
                 {"ny", m.grid.ny},
                 {"nz", m.grid.nz},
                 {"extent", m.grid.tile_extent},
                 {"origin", m.grid.origin}};
  doc["chunk_duration_ms"] = m.chunk_duration_ms;
  doc["chunks"] = m.chunk_count;
  doc["tiles"] = nlohmann::ordered_json::array();
  for (int t = 0; t < m.grid.tile_count(); ++t) {
    nlohmann::ordered_json per_chunk = nlohmann::ordered_json::array();
    for (int c = 0; c < m.chunk_count; ++c) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (int l = 1; l <= m.level_count; ++l) {
        const TileVariant& v = m.variant(t, c, l);
        row.push_back({{"level", v.level},
                       {"comp_bytes", v.comp_bytes},
                       {"uncomp_bytes", v.uncomp_bytes},
                       {"psnr_db", v.psnr_db},
                       {"decode_cost", v.decode_cost},
                       {"sample_ratio", v.sample_ratio}});
      }
      per_chunk.push_back(std::move(row));
    }
    doc["tiles"].push_back({{"levels", std::move(per_chunk)}});
  }
  return doc.dump(2) + "\n";
}

TileManifest generate_synthetic_manifest(std::uint64_t seed,
                                         const TileGrid& grid, int chunks,
                                         int levels,
                                         const SyntheticMediaProfile& p,
                                         const std::string& video_id) {
  if (p.base_tile_bytes < 16 || !(p.level_growth >= 1.0) ||
      !(p.compression_ratio > 0.0 && p.compression_ratio < 1.0) ||
      !(p.psnr_step_db > 0.0) || p.decode_cost_base < 0.0 ||
      !(p.size_jitter >= 0.0 && p.size_jitter < 0.5))
    throw ConfigError("degenerate synthetic media profile");
  if (chunks < 1 || levels < 1)
    throw ConfigError("synthetic manifest needs >= 1 chunk and level");

  TileManifest m;
  m.video_id = video_id;
  m.grid = grid;
  m.chunk_count = chunks;
  m.level_count = levels;
  m.variants.reserve(static_cast<std::size_t>(grid.tile_count()) * chunks *
                     levels);

  Rng rng(seed);
  for (int t = 0; t < grid.tile_count(); ++t) {
    double tile_factor = rng.uniform(1.0 - p.size_jitter, 1.0 + p.size_jitter);
    double psnr_offset = rng.uniform(-0.5, 0.5);
    for (int c = 0; c < chunks; ++c) {
      double chunk_factor = rng.uniform(0.95, 1.05);
      for (int l = 1; l <= levels; ++l) {
        TileVariant v;
        v.level = l;
        v.sample_ratio = static_cast<double>(l) / levels;
        double uncomp = static_cast<double>(p.base_tile_bytes) *
                        std::pow(p.level_growth, l - 1) * tile_factor *
                        chunk_factor;
        v.uncomp_bytes = std::llround(uncomp);
        v.comp_bytes = std::llround(p.compression_ratio *
                                    static_cast<double>(v.uncomp_bytes));
        if (v.comp_bytes < 1) v.comp_bytes = 1;
        if (v.uncomp_bytes <= v.comp_bytes) v.uncomp_bytes = v.comp_bytes + 1;
        v.psnr_db = p.psnr_base_db + p.psnr_step_db * (l - 1) + psnr_offset;
        v.decode_cost = p.decode_cost_base * v.sample_ratio * tile_factor;
        m.variants.push_back(v);
      }
    }
  }
  validate_manifest(m);
  return m;
}

std::vector<std::int64_t> chunk_size_vector(const TileManifest& m, int chunk,
                                            const std::vector<int>& visible) {
  if (chunk < 0 || chunk >= m.chunk_count)
    throw ValidationError("chunk_size_vector: chunk " + std::to_string(chunk) +
                          " out of range");
  int tile_count = m.grid.tile_count();
  std::vector<char> is_visible(tile_count, 0);
  for (int t : visible) {
    if (t < 0 || t >= tile_count)
      throw ValidationError("chunk_size_vector: tile id " + std::to_string(t) +
                            " out of range");
    is_visible[t] = 1;
  }
  std::int64_t baseline = 0;
  for (int t = 0; t < tile_count; ++t)
    if (!is_visible[t]) baseline += m.variant(t, chunk, 1).uncomp_bytes;

  int L = m.level_count;
  std::vector<std::int64_t> sizes(2 * L, baseline);
  for (int a = 0; a < 2 * L; ++a) {
    bool compressed = a < L;
    int level = compressed ? a + 1 : a - L + 1;
    for (int t = 0; t < tile_count; ++t) {
      if (!is_visible[t]) continue;
      const TileVariant& v = m.variant(t, chunk, level);
      sizes[a] += compressed ? v.comp_bytes : v.uncomp_bytes;
    }
  }
  return sizes;
}

}  // namespace pcs
