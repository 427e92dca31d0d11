#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace pcs {

// Axis-aligned tiling of the capture volume. Tiles are indexed x-major:
// id = x + nx*(y + ny*z).
struct TileGrid {
  int nx = 1, ny = 1, nz = 1;
  std::array<double, 3> tile_extent = {1.0, 1.0, 1.0};  // meters per axis
  std::array<double, 3> origin = {0.0, 0.0, 0.0};       // min corner

  int tile_count() const { return nx * ny * nz; }
  std::array<int, 3> tile_coords(int id) const;
  // World-space AABB of one tile.
  void tile_bounds(int id, std::array<double, 3>& lo,
                   std::array<double, 3>& hi) const;
  std::array<double, 3> center() const;
};

// One encoded representation of one tile in one chunk.
struct TileVariant {
  int level = 1;  // 1-based quality level
  std::int64_t comp_bytes = 0;
  std::int64_t uncomp_bytes = 0;
  double psnr_db = 0.0;
  double decode_cost = 0.0;   // cost units to decode the compressed form
  double sample_ratio = 1.0;  // fraction of points kept at this level
};

struct TileManifest {
  std::string video_id;
  TileGrid grid;
  double chunk_duration_ms = 330.0;
  int chunk_count = 0;
  int level_count = 0;
  // variants[tile][chunk][level-1], flattened tile-major.
  std::vector<TileVariant> variants;

  const TileVariant& variant(int tile, int chunk, int level) const;
  double chunk_duration_s() const { return chunk_duration_ms / 1000.0; }
  double video_duration_s() const { return chunk_count * chunk_duration_s(); }
};

// Throws ValidationError naming the offending tile/chunk/level on bad sizes,
// non-monotone PSNR, negative decode cost, or count mismatches.
void validate_manifest(const TileManifest& manifest);

// Strict JSON in, canonical JSON out. serialize(parse(s)) is the identity on
// canonical documents.
TileManifest parse_manifest(const std::string& json_text);
std::string serialize_manifest(const TileManifest& manifest);

// Knobs for the synthetic generator. Sizes grow per level by level_growth;
// compressed sizes are round(compression_ratio * uncompressed). Jitter is a
// per-(tile, chunk) multiplicative spread shared across levels so the
// per-level monotonicity invariants survive.
struct SyntheticMediaProfile {
  std::int64_t base_tile_bytes = 200000;  // level-1 uncompressed tile size
  double level_growth = 1.5;
  double compression_ratio = 0.45;
  double psnr_base_db = 31.0;
  double psnr_step_db = 3.5;
  double decode_cost_base = 20.0;  // cost of a full-resolution tile
  double size_jitter = 0.15;
};

TileManifest generate_synthetic_manifest(std::uint64_t seed,
                                         const TileGrid& grid, int chunks,
                                         int levels,
                                         const SyntheticMediaProfile& profile,
                                         const std::string& video_id = "synthetic");

// Total payload per action for one chunk: entry a < L is "level a+1,
// compressed", entry a >= L is "level a-L+1, uncompressed". Visible tiles are
// charged at the action's variant; all other tiles at their level-1
// uncompressed size. `visible` holds tile ids, need not be sorted.
std::vector<std::int64_t> chunk_size_vector(const TileManifest& manifest,
                                            int chunk,
                                            const std::vector<int>& visible);

}  // namespace pcs
