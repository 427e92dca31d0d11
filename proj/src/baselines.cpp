#include "pcs/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "pcs/errors.hpp"

namespace pcs {

namespace {

int level_count_from_state(const StreamState& state) {
  const std::size_t n = state.next_sizes.size();
  if (n == 0 || n % 2 != 0) {
    throw ValidationError("selector state needs a non-empty even-sized action space");
  }
  return static_cast<int>(n / 2);
}

}  // namespace

double harmonic_mean(const std::vector<double>& values) {
  if (values.empty()) throw ValidationError("harmonic mean of empty set");
  double inv_sum = 0.0;
  for (double v : values) {
    if (!(v > 0.0)) throw ValidationError("harmonic mean needs positive samples");
    inv_sum += 1.0 / v;
  }
  return static_cast<double>(values.size()) / inv_sum;
}

int bb_select(const StreamState& state, const BaselineConfig& config) {
  const int levels = level_count_from_state(state);
  if (!(config.reservoir_s >= 0.0) || !(config.cushion_s > config.reservoir_s)) {
    throw ConfigError("buffer-occupancy selector needs 0 <= reservoir < cushion");
  }
  const double buffer_s = state.buffer_ms / 1000.0;
  if (buffer_s <= config.reservoir_s) return 0;
  if (buffer_s >= config.cushion_s || levels == 1) {
    return levels - 1;  // highest level, compressed
  }
  const double frac =
      (buffer_s - config.reservoir_s) / (config.cushion_s - config.reservoir_s);
  int level = static_cast<int>(std::floor(frac * (levels - 1))) + 1;
  level = std::clamp(level, 1, levels);
  return level - 1;
}

int quetra_select(const StreamState& state, const BaselineConfig& config) {
  const int levels = level_count_from_state(state);
  if (!(config.chunk_duration_ms > 0.0) || !(config.buffer_capacity_ms > 0.0)) {
    throw ConfigError("queue selector needs positive chunk duration and capacity");
  }
  if (!(state.predicted_bw_mbps > 0.0)) return 0;

  const double chunk_s = config.chunk_duration_ms / 1000.0;
  const double slots = config.buffer_capacity_ms / config.chunk_duration_ms;
  const double target = slots / 2.0;

  // Expected queue occupancy per level, from its utilisation ratio.
  int best = 0;
  double best_gap = 0.0;
  bool have_best = false;
  int best_filling = -1;  // highest level whose occupancy clears the target
  for (int a = 0; a < levels; ++a) {  // compressed variants only
    const double bitrate_mbps =
        static_cast<double>(state.next_sizes[static_cast<std::size_t>(a)]) * 8.0 /
        1e6 / chunk_s;
    const double rho = bitrate_mbps / state.predicted_bw_mbps;
    double occupancy = 0.0;
    if (rho < 1.0) {
      occupancy = std::clamp(slots - rho / (2.0 * (1.0 - rho)), 0.0, slots);
    }
    if (occupancy >= target) best_filling = a;
    const double gap = std::abs(occupancy - target);
    if (!have_best || gap < best_gap) {  // tie keeps the lower level
      have_best = true;
      best_gap = gap;
      best = a;
    }
  }
  return best_filling >= 0 ? best_filling : best;
}

int rmpc_select(const StreamState& state, const BaselineConfig& config,
                const std::vector<BwErrorSample>& bw_history) {
  const int levels = level_count_from_state(state);
  const int actions = 2 * levels;
  if (config.mpc_horizon < 1) throw ConfigError("lookahead horizon must be >= 1");
  if (config.error_window < 1) throw ConfigError("error window must be >= 1");
  if (!(config.chunk_duration_ms > 0.0) || !(config.buffer_capacity_ms > 0.0)) {
    throw ConfigError("lookahead selector needs positive chunk duration and capacity");
  }
  if (static_cast<int>(config.psnr_per_level.size()) < levels) {
    throw ConfigError("lookahead selector needs a quality estimate per level");
  }

  // Discount the throughput estimate by the worst recent relative error.
  const std::size_t window = static_cast<std::size_t>(config.error_window);
  const std::size_t start =
      bw_history.size() > window ? bw_history.size() - window : 0;
  std::vector<double> actuals;
  double max_err = 0.0;
  for (std::size_t i = start; i < bw_history.size(); ++i) {
    const BwErrorSample& s = bw_history[i];
    if (!(s.actual_mbps > 0.0)) continue;
    actuals.push_back(s.actual_mbps);
    max_err = std::max(max_err, std::abs(s.predicted_mbps - s.actual_mbps) /
                                    s.actual_mbps);
  }
  double base = actuals.empty() ? state.predicted_bw_mbps : harmonic_mean(actuals);
  if (!(base > 0.0)) return 0;
  const double robust_mbps = std::max(base / (1.0 + max_err), 1e-9);

  int horizon = config.mpc_horizon;
  if (state.chunks_remaining > 0) horizon = std::min(horizon, state.chunks_remaining);
  if (std::pow(static_cast<double>(actions), horizon) > 2e6) {
    throw ConfigError("lookahead search space too large");
  }

  std::vector<int> seq(static_cast<std::size_t>(horizon), 0);
  std::vector<int> best_seq = seq;
  double best_total = 0.0;
  bool have_best = false;

  while (true) {
    // Deterministic rollout of this action sequence.
    double buffer_ms = state.buffer_ms;
    int prev = state.last_action;
    double total = 0.0;
    for (int k = 0; k < horizon; ++k) {
      const int a = seq[static_cast<std::size_t>(k)];
      // The compressed/uncompressed split only matters through the size
      // vector, which already reflects it.
      const int level = action_from_index(a, levels).level;
      // Future chunk sizes are unknown; assume they match the upcoming chunk.
      const double bytes =
          static_cast<double>(state.next_sizes[static_cast<std::size_t>(a)]);
      const double dl_s = bytes * 8.0 / 1e6 / robust_mbps;
      const double rebuffer = std::max(0.0, dl_s - buffer_ms / 1000.0);
      buffer_ms = std::max(0.0, buffer_ms - dl_s * 1000.0) + config.chunk_duration_ms;
      buffer_ms = std::min(buffer_ms, config.buffer_capacity_ms);
      ChunkOutcome outcome;
      outcome.fov_psnr_sum_db =
          config.psnr_per_level[static_cast<std::size_t>(level - 1)];
      outcome.level = level;
      outcome.rebuffer_s = rebuffer;
      outcome.level_change = std::abs(a - prev);
      outcome.decode_penalty_s = 0.0;
      outcome.viewer_distance_m = config.weights.distance_m;
      total += qoe_score(outcome, config.weights);
      prev = a;
    }
    if (!have_best || total > best_total) {  // strict: ties keep the first
      have_best = true;
      best_total = total;
      best_seq = seq;
    }
    // Odometer, last position fastest: ascending lexicographic order.
    int pos = horizon - 1;
    while (pos >= 0) {
      if (++seq[static_cast<std::size_t>(pos)] < actions) break;
      seq[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return best_seq[0];
}

}  // namespace pcs
