#pragma once

#include <vector>

#include "pcs/qoe.hpp"
#include "pcs/stream_sim.hpp"

namespace pcs {

// Shared knobs for the non-learning selectors.  next-chunk sizes arrive via
// StreamState::next_sizes (bytes, indexed by action), so the selectors need
// no manifest access of their own.
struct BaselineConfig {
  // Buffer-occupancy selector.
  double reservoir_s = 0.1;
  double cushion_s = 1.0;
  // Model-predictive selector.
  int mpc_horizon = 5;
  int error_window = 5;
  // QoE weights used inside the MPC lookahead (callers normally pick the
  // row matching the viewer distance they care about).
  QoeWeights weights{1.0, 0.11, 0.61, 12.58, -0.13, 12.58};
  // Mean FoV PSNR sum the MPC lookahead assumes for a chunk fetched at each
  // level (index 0 = level 1).  Filled in by the driver from the manifest.
  std::vector<double> psnr_per_level;
  double chunk_duration_ms = 330.0;
  double buffer_capacity_ms = 5000.0;
};

// Buffer-occupancy rule: map buffer level linearly from reservoir..cushion
// onto quality levels, always fetching compressed variants.  Returns an
// action index into the 2L action space.
int bb_select(const StreamState& state, const BaselineConfig& config);

// Queueing-theoretic rule: model the buffer as a K-slot queue, compute the
// expected occupancy for each candidate level from its bitrate/bandwidth
// ratio, and pick the level whose expected occupancy best clears the
// half-buffer target.  Compressed variants only.
int quetra_select(const StreamState& state, const BaselineConfig& config);

// Robust model-predictive rule: discount predicted bandwidth by the worst
// recent relative prediction error, then exhaustively score every action
// sequence over the horizon with a deterministic buffer/QoE rollout and
// return the first action of the best sequence.
//
// bw_history: recent (predicted, actual) throughput pairs, oldest first.
struct BwErrorSample {
  double predicted_mbps = 0.0;
  double actual_mbps = 0.0;
};
int rmpc_select(const StreamState& state, const BaselineConfig& config,
                const std::vector<BwErrorSample>& bw_history);

// Exposed for tests: harmonic mean of positive samples (zeros/negatives are
// ValidationError); empty input is a ValidationError too.
double harmonic_mean(const std::vector<double>& values);

}  // namespace pcs
