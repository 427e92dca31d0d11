#include "pcs/tile_select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcs/errors.hpp"

namespace pcs {

int action_index(const Action& a, int level_count) {
  if (a.level < 1 || a.level > level_count)
    throw ValidationError("action level " + std::to_string(a.level) +
                          " outside [1, " + std::to_string(level_count) + "]");
  return a.compressed ? a.level - 1 : level_count + a.level - 1;
}

Action action_from_index(int index, int level_count) {
  if (index < 0 || index >= 2 * level_count)
    throw ValidationError("action index " + std::to_string(index) +
                          " outside [0, " + std::to_string(2 * level_count) +
                          ")");
  Action a;
  a.compressed = index < level_count;
  a.level = a.compressed ? index + 1 : index - level_count + 1;
  return a;
}

namespace {

constexpr double kDegToRad = 3.141592653589793238462643383279502884 / 180.0;

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
          a.x * b.y - a.y * b.x};
}

double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

Vec3 scale(const Vec3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }

Vec3 add(const Vec3& a, const Vec3& b) {
  return {a.x + b.x, a.y + b.y, a.z + b.z};
}

// Inward-facing plane: x is inside when dot(normal, x) >= offset.
struct Plane {
  Vec3 normal;
  double offset = 0.0;
};

// Camera basis: +Z is world up, yaw spins about +Z starting from +X, pitch
// tilts toward +Z, roll turns about the view direction.
void camera_basis(const FovSample& pose, Vec3& fwd, Vec3& right, Vec3& up) {
  double y = pose.ypr[0] * kDegToRad;
  double p = pose.ypr[1] * kDegToRad;
  double r = pose.ypr[2] * kDegToRad;
  fwd = {std::cos(p) * std::cos(y), std::cos(p) * std::sin(y), std::sin(p)};
  Vec3 right0 = {std::sin(y), -std::cos(y), 0.0};
  Vec3 up0 = cross(right0, fwd);
  right = add(scale(right0, std::cos(r)), scale(up0, -std::sin(r)));
  up = add(scale(up0, std::cos(r)), scale(right0, std::sin(r)));
}

std::vector<Plane> build_planes(const FovSample& pose,
                                const FrustumParams& f) {
  if (!(f.hfov_deg > 0.0) || !(f.vfov_deg > 0.0) || !(f.near_m >= 0.0) ||
      !(f.far_m > f.near_m))
    throw ConfigError("degenerate frustum parameters");
  Vec3 fwd, right, up;
  camera_basis(pose, fwd, right, up);
  Vec3 eye = {pose.pos[0], pose.pos[1], pose.pos[2]};

  std::vector<Plane> planes;
  // A full panorama (both axes >= 180 degrees) has no planar bound at all;
  // visible_tiles falls back to a range test around the eye instead.
  if (f.hfov_deg >= 180.0 && f.vfov_deg >= 180.0) return planes;

  planes.push_back({fwd, dot(fwd, eye) + f.near_m});
  planes.push_back({scale(fwd, -1.0), -dot(fwd, eye) - f.far_m});

  // Lateral planes fold past 180 degrees; a hemisphere or wider on an axis
  // simply has no lateral bound there.
  if (f.hfov_deg < 180.0) {
    double t = std::tan(0.5 * f.hfov_deg * kDegToRad);
    Vec3 nl = add(scale(fwd, t), right);       // left plane
    Vec3 nr = add(scale(fwd, t), scale(right, -1.0));  // right plane
    planes.push_back({nl, dot(nl, eye)});
    planes.push_back({nr, dot(nr, eye)});
  }
  if (f.vfov_deg < 180.0) {
    double t = std::tan(0.5 * f.vfov_deg * kDegToRad);
    Vec3 nb = add(scale(fwd, t), up);                 // bottom plane
    Vec3 nt = add(scale(fwd, t), scale(up, -1.0));    // top plane
    planes.push_back({nb, dot(nb, eye)});
    planes.push_back({nt, dot(nt, eye)});
  }
  return planes;
}

// max over box corners of dot(normal, corner), axis by axis.
double max_corner_dot(const Plane& plane, const std::array<double, 3>& lo,
                      const std::array<double, 3>& hi) {
  double nx[3] = {plane.normal.x, plane.normal.y, plane.normal.z};
  double m = 0.0;
  for (int k = 0; k < 3; ++k)
    m += std::max(nx[k] * lo[k], nx[k] * hi[k]);
  return m;
}

}  // namespace

std::vector<FrustumPlane> frustum_planes(const FovSample& pose,
                                         const FrustumParams& frustum) {
  std::vector<FrustumPlane> out;
  for (const Plane& p : build_planes(pose, frustum))
    out.push_back({{p.normal.x, p.normal.y, p.normal.z}, p.offset});
  return out;
}

std::vector<int> visible_tiles(const TileGrid& grid, const FovSample& pose,
                               const FrustumParams& frustum) {
  auto planes = build_planes(pose, frustum);
  // Panoramic view: planes vanish and only the far range bounds visibility.
  const bool omni = planes.empty();
  const double far2 = frustum.far_m * frustum.far_m;
  std::vector<int> out;
  for (int t = 0; t < grid.tile_count(); ++t) {
    std::array<double, 3> lo, hi;
    grid.tile_bounds(t, lo, hi);
    bool culled = false;
    if (omni) {
      double d2 = 0.0;  // squared distance from eye to the box
      for (int k = 0; k < 3; ++k) {
        double d = std::max({lo[k] - pose.pos[k], pose.pos[k] - hi[k], 0.0});
        d2 += d * d;
      }
      culled = d2 > far2;
    }
    for (const auto& plane : planes) {
      if (max_corner_dot(plane, lo, hi) < plane.offset) {
        culled = true;
        break;
      }
    }
    if (!culled) out.push_back(t);
  }
  return out;
}

SelectionPlan realize_plan(const TileManifest& manifest, int chunk,
                           const std::vector<int>& visible, const Action& a,
                           const Budget& budget) {
  if (chunk < 0 || chunk >= manifest.chunk_count)
    throw ValidationError("realize_plan: chunk " + std::to_string(chunk) +
                          " out of range");
  if (budget.bytes < 0.0 || budget.compute < 0.0)
    throw ValidationError("realize_plan: negative budget");
  int tile_count = manifest.grid.tile_count();
  int L = manifest.level_count;
  action_index(a, L);  // validates the level range

  std::vector<char> is_visible(tile_count, 0);
  for (int t : visible) {
    if (t < 0 || t >= tile_count)
      throw ValidationError("realize_plan: tile id " + std::to_string(t) +
                            " out of range");
    is_visible[t] = 1;
  }

  SelectionPlan plan;
  plan.choices.resize(tile_count);
  for (int t = 0; t < tile_count; ++t) {
    TileChoice& c = plan.choices[t];
    if (is_visible[t]) {
      c.level = a.level;
      c.compressed = a.compressed;
    } else {
      c.level = 1;
      c.compressed = true;
    }
    const TileVariant& v = manifest.variant(t, chunk, c.level);
    plan.total_bytes += c.compressed ? v.comp_bytes : v.uncomp_bytes;
    if (c.compressed) plan.total_decode_cost += v.decode_cost;
  }

  if (plan.total_decode_cost > budget.compute) {
    // Flip candidates: compressed tiles, best decode relief per extra byte
    // first. Sorting is stable with an explicit id tie-break so plans are
    // reproducible.
    struct Candidate {
      int tile;
      double saved;
      std::int64_t extra;
    };
    std::vector<Candidate> candidates;
    for (int t = 0; t < tile_count; ++t) {
      const TileChoice& c = plan.choices[t];
      if (!c.compressed) continue;
      const TileVariant& v = manifest.variant(t, chunk, c.level);
      candidates.push_back({t, v.decode_cost, v.uncomp_bytes - v.comp_bytes});
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& x, const Candidate& y) {
                double rx = x.saved / static_cast<double>(x.extra);
                double ry = y.saved / static_cast<double>(y.extra);
                if (rx != ry) return rx > ry;
                return x.tile < y.tile;
              });
    for (const auto& cand : candidates) {
      if (plan.total_decode_cost <= budget.compute) break;
      if (cand.saved <= 0.0) break;  // the rest cannot relieve anything
      plan.choices[cand.tile].compressed = false;
      plan.total_decode_cost -= cand.saved;
      plan.total_bytes += cand.extra;
    }
    // Running subtraction leaves float dust (nonzero totals after flipping
    // every tile); re-sum from the final choices so feasibility is exact.
    plan.total_decode_cost = 0.0;
    for (int t = 0; t < tile_count; ++t) {
      const TileChoice& c = plan.choices[t];
      if (c.compressed)
        plan.total_decode_cost +=
            manifest.variant(t, chunk, c.level).decode_cost;
    }
  }

  plan.feasible_compute = plan.total_decode_cost <= budget.compute;
  plan.feasible_bytes =
      static_cast<double>(plan.total_bytes) <= budget.bytes;
  return plan;
}

double plan_utility(const TileManifest& manifest, int chunk,
                    const SelectionPlan& plan, const TileUtilityFn& utility) {
  double total = 0.0;
  for (int t = 0; t < manifest.grid.tile_count(); ++t) {
    const TileChoice& c = plan.choices.at(t);
    total += utility(t, manifest.variant(t, chunk, c.level));
  }
  return total;
}

BestPlanResult brute_force_best_plan(const TileManifest& manifest, int chunk,
                                     const std::vector<int>& visible,
                                     const Budget& budget,
                                     const TileUtilityFn& utility) {
  if (chunk < 0 || chunk >= manifest.chunk_count)
    throw ValidationError("brute_force_best_plan: chunk out of range");
  int tile_count = manifest.grid.tile_count();
  int L = manifest.level_count;

  std::vector<char> is_visible(tile_count, 0);
  for (int t : visible) {
    if (t < 0 || t >= tile_count)
      throw ValidationError("brute_force_best_plan: tile id out of range");
    is_visible[t] = 1;
  }

  double states = 1.0;
  std::vector<int> option_count(tile_count);
  for (int t = 0; t < tile_count; ++t) {
    option_count[t] = is_visible[t] ? 2 * L : 2;
    states *= option_count[t];
    if (states > 2e6)
      throw ConfigError("brute_force_best_plan: instance exceeds 2e6 states");
  }

  // Option order per tile: (level 1, comp), (level 1, uncomp), (level 2, comp)
  // ... so lexicographic enumeration realizes the documented tie-break.
  auto choice_of = [&](int tile, int opt) {
    TileChoice c;
    if (is_visible[tile]) {
      c.level = opt / 2 + 1;
      c.compressed = (opt % 2) == 0;
    } else {
      c.level = 1;
      c.compressed = opt == 0;
    }
    return c;
  };

  std::vector<int> opt(tile_count, 0);
  BestPlanResult best;
  while (true) {
    std::int64_t bytes = 0;
    double decode = 0.0;
    double score = 0.0;
    for (int t = 0; t < tile_count; ++t) {
      TileChoice c = choice_of(t, opt[t]);
      const TileVariant& v = manifest.variant(t, chunk, c.level);
      bytes += c.compressed ? v.comp_bytes : v.uncomp_bytes;
      if (c.compressed) decode += v.decode_cost;
      score += utility(t, v);
    }
    bool feasible = static_cast<double>(bytes) <= budget.bytes &&
                    decode <= budget.compute;
    if (feasible && (!best.found || score > best.utility)) {
      best.found = true;
      best.utility = score;
      best.plan.choices.resize(tile_count);
      for (int t = 0; t < tile_count; ++t)
        best.plan.choices[t] = choice_of(t, opt[t]);
      best.plan.total_bytes = bytes;
      best.plan.total_decode_cost = decode;
      best.plan.feasible_bytes = true;
      best.plan.feasible_compute = true;
    }
    // Odometer with the last tile fastest: ascending lexicographic order.
    int k = tile_count - 1;
    while (k >= 0 && opt[k] + 1 == option_count[k]) {
      opt[k] = 0;
      --k;
    }
    if (k < 0) break;
    ++opt[k];
  }
  return best;
}

}  // namespace pcs
