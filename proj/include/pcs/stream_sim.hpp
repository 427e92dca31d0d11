#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pcs/media.hpp"
#include "pcs/prediction.hpp"
#include "pcs/qoe.hpp"
#include "pcs/tile_select.hpp"
#include "pcs/traces.hpp"

namespace pcs {

struct PlayerConfig {
  double buffer_capacity_ms = 5000.0;
  double startup_threshold_ms = 330.0;  // playback begins at this fill level
  std::uint64_t seed = 0;               // reserved; the player is deterministic
  double initial_bw_mbps = 50.0;        // estimate used before any download
  double ewma_smoothing = 0.3;
  double ewma_window_s = 30.0;
  int bw_history_len = 12;
  int fov_window_len = 8;
  int min_level = 1;  // optional floor on the requested quality level
};

// Agent-facing observation after each step.
struct StreamState {
  int last_action = 0;  // 2L action index of the previous request
  double buffer_ms = 0.0;
  double predicted_bw_mbps = 0.0;
  double last_download_s = 0.0;
  std::vector<std::int64_t> next_sizes;  // per-action payload of next chunk
  int chunks_remaining = 0;
  std::vector<double> bw_history_mbps;  // <= bw_history_len, oldest first
};

struct StepOutcome {
  ChunkOutcome chunk;   // inputs to the QoE model for this chunk
  double qoe = 0.0;     // reward; exactly qoe_score(chunk, weights used)
  QoeWeights weights;   // the distance row the score was taken from
  int chunk_index = 0;
  int action = 0;
  std::int64_t bytes = 0;
  double download_s = 0.0;
  double decode_s = 0.0;
  double sleep_s = 0.0;       // idle wait when the buffer tops out
  double wall_clock_advance_s = 0.0;
  double throughput_mbps = 0.0;  // measured over this download
  bool during_startup = false;
  bool infeasible = false;  // plan byte budget was overrun
};

// Pure buffer arithmetic shared by the simulator: drain `busy_s` of playback
// (when started), append one chunk, cap at capacity. Sleep is the overflow
// the player waits out before requesting more; waiting still plays content,
// so capping loses nothing. Before startup nothing drains and the buffer is
// left uncapped — the constructor guarantees threshold + chunk <= capacity,
// so it cannot actually overflow.
struct BufferAdvance {
  double new_buffer_ms = 0.0;
  double rebuffer_s = 0.0;
  double sleep_s = 0.0;
};

BufferAdvance advance_buffer(double buffer_ms, double busy_s,
                             double chunk_duration_ms, double capacity_ms,
                             bool started);

// Normalized feature vector: bw history (units of 100 Mbps, zero-padded on
// the left to bw_len), per-action next sizes in MB, one-hot last action,
// buffer / capacity, last download / 10 s, chunks remaining / total.
std::vector<double> state_vector(const StreamState& state, double capacity_ms,
                                 int total_chunks, int action_count,
                                 int bw_len = 12);

class Environment {
 public:
  Environment(TileManifest manifest, BandwidthTrace bandwidth, FovTrace fov,
              ComputeBudgetTrace compute, PlayerConfig player,
              FrustumParams frustum = {},
              std::vector<QoeWeights> qoe_table = {});

  const StreamState& reset();
  StepOutcome step(int action_idx);
  StepOutcome step(const Action& action);

  const StreamState& state() const { return state_; }
  bool done() const { return state_.chunks_remaining == 0; }
  int action_count() const { return 2 * manifest_.level_count; }
  const TileManifest& manifest() const { return manifest_; }
  const PlayerConfig& player() const { return player_; }

  double wall_clock_s() const { return wall_clock_s_; }
  double startup_delay_s() const { return startup_delay_s_; }
  double total_rebuffer_s() const { return total_rebuffer_s_; }
  double total_sleep_s() const { return total_sleep_s_; }
  // Play out whatever the buffer still holds; returns the seconds consumed
  // and advances the wall clock accordingly.
  double drain_remaining();

  std::vector<double> features() const;

 private:
  void predict_next(int next_chunk);

  TileManifest manifest_;
  BandwidthTrace bandwidth_;
  FovTrace fov_;
  ComputeBudgetTrace compute_;
  PlayerConfig player_;
  FrustumParams frustum_;
  std::vector<QoeWeights> qoe_table_;

  StreamState state_;
  bool started_ = false;
  bool live_ = false;
  double wall_clock_s_ = 0.0;
  double startup_delay_s_ = 0.0;
  double total_rebuffer_s_ = 0.0;
  double total_sleep_s_ = 0.0;
  EwmaState ewma_;
  std::vector<BwSample> throughput_obs_;
  FovWindow fov_window_{8};
  std::vector<int> predicted_visible_;
};

// Per-chunk log row in the canonical column order.
std::string episode_csv_header();
void append_episode_row(std::ostream& out, const StepOutcome& outcome,
                        int level_count);

}  // namespace pcs
