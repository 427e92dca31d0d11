#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pcs/media.hpp"
#include "pcs/traces.hpp"

namespace pcs {

// One point in the 2L action space. Index a < L maps to (level a+1,
// compressed); a >= L maps to (level a-L+1, uncompressed).
struct Action {
  int level = 1;
  bool compressed = true;
};

int action_index(const Action& a, int level_count);
Action action_from_index(int index, int level_count);

struct FrustumParams {
  double hfov_deg = 90.0;
  double vfov_deg = 90.0;
  double near_m = 0.1;
  double far_m = 10.0;
};

// Inward-facing bounding plane: a point p is inside when
// dot(normal, p) >= offset. Exposed so tests can re-derive visibility from
// first principles.
struct FrustumPlane {
  std::array<double, 3> normal = {0.0, 0.0, 0.0};
  double offset = 0.0;
};

std::vector<FrustumPlane> frustum_planes(const FovSample& pose,
                                         const FrustumParams& frustum);

// Tiles whose AABB intersects the view frustum of `pose` (conservative
// plane test: a tile is culled only when all eight corners fall outside one
// plane). Fields of view >= 180 degrees disable the lateral planes on that
// axis, so a 360-degree viewport sees everything between near and far.
// Returned ids are sorted ascending.
std::vector<int> visible_tiles(const TileGrid& grid, const FovSample& pose,
                               const FrustumParams& frustum);

// Per-chunk resource budget: payload bytes allowed by the predicted network
// and decode-cost units allowed by the client.
struct Budget {
  double bytes = 0.0;
  double compute = 0.0;
};

struct TileChoice {
  int level = 1;
  bool compressed = true;
};

struct SelectionPlan {
  std::vector<TileChoice> choices;  // one per tile, grid order
  std::int64_t total_bytes = 0;
  double total_decode_cost = 0.0;
  bool feasible_bytes = true;    // total_bytes <= budget.bytes
  bool feasible_compute = true;  // always true after the compute flip pass

  bool feasible() const { return feasible_bytes && feasible_compute; }
};

// Assign the action's variant to every visible tile and level-1 compressed to
// the rest, then flip compressed tiles to uncompressed (greedy by decode cost
// saved per extra byte) until the decode budget holds. Byte overruns are not
// repaired here: the plan is returned with feasible_bytes = false and the
// simulator pays for it in download time.
SelectionPlan realize_plan(const TileManifest& manifest, int chunk,
                           const std::vector<int>& visible, const Action& a,
                           const Budget& budget);

using TileUtilityFn = std::function<double(int tile, const TileVariant&)>;

double plan_utility(const TileManifest& manifest, int chunk,
                    const SelectionPlan& plan, const TileUtilityFn& utility);

struct BestPlanResult {
  bool found = false;  // false when no assignment satisfies both budgets
  SelectionPlan plan;
  double utility = 0.0;
};

// Exhaustive maximizer of summed per-tile utility subject to both budgets.
// Visible tiles range over all (level, compressed) pairs; non-visible tiles
// are pinned to level 1 with a free compression flag. Enumeration is
// lexicographic over (tile asc, level asc, compressed first), and ties keep
// the earliest assignment, so results are deterministic. Instances beyond
// 2e6 assignments throw ConfigError.
BestPlanResult brute_force_best_plan(const TileManifest& manifest, int chunk,
                                     const std::vector<int>& visible,
                                     const Budget& budget,
                                     const TileUtilityFn& utility);

}  // namespace pcs
