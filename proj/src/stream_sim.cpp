#include "pcs/stream_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pcs/errors.hpp"

namespace pcs {

BufferAdvance advance_buffer(double buffer_ms, double busy_s,
                             double chunk_duration_ms, double capacity_ms,
                             bool started) {
  BufferAdvance out;
  if (!started) {
    // Nothing plays before startup: the buffer only fills.
    out.new_buffer_ms = buffer_ms + chunk_duration_ms;
    return out;
  }
  double drained = busy_s * 1000.0;
  out.rebuffer_s = std::max(0.0, busy_s - buffer_ms / 1000.0);
  double with_chunk = std::max(0.0, buffer_ms - drained) + chunk_duration_ms;
  out.sleep_s = std::max(0.0, (with_chunk - capacity_ms) / 1000.0);
  out.new_buffer_ms = std::min(capacity_ms, with_chunk);
  return out;
}

std::vector<double> state_vector(const StreamState& state, double capacity_ms,
                                 int total_chunks, int action_count,
                                 int bw_len) {
  if (static_cast<int>(state.next_sizes.size()) != action_count)
    throw SimError("state_vector: next_sizes does not match action count");
  if (static_cast<int>(state.bw_history_mbps.size()) > bw_len)
    throw SimError("state_vector: bandwidth history exceeds bw_len");
  if (state.last_action < 0 || state.last_action >= action_count)
    throw SimError("state_vector: last action out of range");

  std::vector<double> v;
  v.reserve(bw_len + 2 * action_count + 3);
  int pad = bw_len - static_cast<int>(state.bw_history_mbps.size());
  for (int i = 0; i < pad; ++i) v.push_back(0.0);
  for (double bw : state.bw_history_mbps) v.push_back(bw / 100.0);
  for (std::int64_t s : state.next_sizes)
    v.push_back(static_cast<double>(s) / 1e6);
  for (int a = 0; a < action_count; ++a)
    v.push_back(a == state.last_action ? 1.0 : 0.0);
  v.push_back(state.buffer_ms / capacity_ms);
  v.push_back(state.last_download_s / 10.0);
  v.push_back(static_cast<double>(state.chunks_remaining) / total_chunks);
  return v;
}

Environment::Environment(TileManifest manifest, BandwidthTrace bandwidth,
                         FovTrace fov, ComputeBudgetTrace compute,
                         PlayerConfig player, FrustumParams frustum,
                         std::vector<QoeWeights> qoe_table)
    : manifest_(std::move(manifest)),
      bandwidth_(std::move(bandwidth)),
      fov_(std::move(fov)),
      compute_(std::move(compute)),
      player_(player),
      frustum_(frustum),
      qoe_table_(std::move(qoe_table)) {
  validate_manifest(manifest_);
  validate_compute_budget(compute_);
  if (qoe_table_.empty())
    qoe_table_.assign(builtin_qoe_table().begin(), builtin_qoe_table().end());
  if (!(player_.buffer_capacity_ms >= manifest_.chunk_duration_ms))
    throw ConfigError("buffer capacity must hold at least one chunk");
  if (player_.startup_threshold_ms < 0.0 ||
      player_.startup_threshold_ms + manifest_.chunk_duration_ms >
          player_.buffer_capacity_ms)
    throw ConfigError(
        "startup threshold must leave room for one chunk below capacity");
  if (player_.bw_history_len < 1 || player_.fov_window_len < 1)
    throw ConfigError("history lengths must be >= 1");
  if (player_.min_level < 1 || player_.min_level > manifest_.level_count)
    throw ConfigError("min_level outside the manifest's level range");
  if (!(player_.initial_bw_mbps > 0.0))
    throw ConfigError("initial bandwidth estimate must be positive");
  double video_s = manifest_.video_duration_s();
  if (bandwidth_.span_s() < video_s)
    throw ConfigError("bandwidth trace shorter than the video");
  if (fov_.span_s() < video_s)
    throw ConfigError("fov trace shorter than the video");
}

const StreamState& Environment::reset() {
  state_ = StreamState{};
  started_ = false;
  live_ = true;
  wall_clock_s_ = 0.0;
  startup_delay_s_ = 0.0;
  total_rebuffer_s_ = 0.0;
  total_sleep_s_ = 0.0;
  ewma_ = EwmaState{player_.ewma_smoothing, player_.ewma_window_s, 0.0};
  throughput_obs_.clear();
  fov_window_ = FovWindow(static_cast<std::size_t>(player_.fov_window_len));

  state_.chunks_remaining = manifest_.chunk_count;
  state_.last_action = action_index({player_.min_level, true},
                                    manifest_.level_count);
  state_.predicted_bw_mbps = player_.initial_bw_mbps;
  fov_window_.push(fov_.sample_at(0.0));
  predict_next(0);
  return state_;
}

void Environment::predict_next(int next_chunk) {
  FovSample pose =
      fov_predict_lr(fov_window_, manifest_.chunk_duration_s(), true);
  predicted_visible_ = visible_tiles(manifest_.grid, pose, frustum_);
  state_.next_sizes = chunk_size_vector(manifest_, next_chunk,
                                        predicted_visible_);
}

StepOutcome Environment::step(int action_idx) {
  return step(action_from_index(action_idx, manifest_.level_count));
}

StepOutcome Environment::step(const Action& action) {
  if (!live_) throw SimError("step before reset");
  if (state_.chunks_remaining == 0)
    throw SimError("step on an exhausted episode");

  Action a = action;
  if (a.level < player_.min_level) a.level = player_.min_level;
  int a_idx = action_index(a, manifest_.level_count);

  int chunk = manifest_.chunk_count - state_.chunks_remaining;
  double chunk_s = manifest_.chunk_duration_s();

  Budget budget;
  budget.bytes = state_.predicted_bw_mbps * 1e6 / 8.0 * chunk_s;
  budget.compute = compute_.at(wall_clock_s_);

  SelectionPlan plan =
      realize_plan(manifest_, chunk, predicted_visible_, a, budget);

  double download_s = bandwidth_.time_to_download(
      wall_clock_s_, static_cast<double>(plan.total_bytes));
  double throughput =
      download_s > 0.0
          ? static_cast<double>(plan.total_bytes) * 8.0 / 1e6 / download_s
          : state_.predicted_bw_mbps;
  // Decode runs serially after download and scales with how much of the
  // per-chunk compute budget the plan consumes.
  double decode_s = 0.0;
  if (plan.total_decode_cost > 0.0)
    decode_s = plan.total_decode_cost / budget.compute * chunk_s;
  double busy_s = download_s + decode_s;

  BufferAdvance adv =
      advance_buffer(state_.buffer_ms, busy_s, manifest_.chunk_duration_ms,
                     player_.buffer_capacity_ms, started_);

  bool was_startup = !started_;
  if (was_startup) startup_delay_s_ += busy_s;
  double ready_at = wall_clock_s_ + busy_s;
  wall_clock_s_ = ready_at + adv.sleep_s;
  total_rebuffer_s_ += adv.rebuffer_s;
  total_sleep_s_ += adv.sleep_s;
  state_.buffer_ms = adv.new_buffer_ms;
  if (!started_ && state_.buffer_ms >= player_.startup_threshold_ms)
    started_ = true;

  // Score against where the viewer actually ended up looking.
  FovSample true_pose = fov_.sample_at(ready_at);
  std::vector<int> true_visible =
      visible_tiles(manifest_.grid, true_pose, frustum_);
  double psnr_sum = 0.0;
  for (int t : true_visible)
    psnr_sum +=
        manifest_.variant(t, chunk, plan.choices[t].level).psnr_db;
  auto center = manifest_.grid.center();
  double dist = 0.0;
  for (int k = 0; k < 3; ++k) {
    double d = true_pose.pos[k] - center[k];
    dist += d * d;
  }
  dist = std::sqrt(dist);
  if (dist <= 0.0) dist = 1e-9;  // the score table needs a positive distance

  StepOutcome out;
  out.chunk.fov_psnr_sum_db = psnr_sum;
  out.chunk.level = a.level;
  out.chunk.rebuffer_s = adv.rebuffer_s;
  out.chunk.level_change = std::abs(a_idx - state_.last_action);
  out.chunk.decode_penalty_s = decode_penalty(decode_s, chunk_s);
  out.chunk.viewer_distance_m = dist;
  out.weights = weights_for_distance(dist, qoe_table_);
  out.qoe = qoe_score(out.chunk, out.weights);
  out.chunk_index = chunk;
  out.action = a_idx;
  out.bytes = plan.total_bytes;
  out.download_s = download_s;
  out.decode_s = decode_s;
  out.sleep_s = adv.sleep_s;
  out.wall_clock_advance_s = busy_s + adv.sleep_s;
  out.throughput_mbps = throughput;
  out.during_startup = was_startup;
  out.infeasible = !plan.feasible();

  // Post-download measurements feed the next prediction round.
  // Keep enough history to cover the EWMA window even at one chunk per
  // ~0.3 s; anything older can never re-enter the window.
  throughput_obs_.push_back({ready_at, throughput});
  if (throughput_obs_.size() > 512)
    throughput_obs_.erase(throughput_obs_.begin());
  state_.predicted_bw_mbps = ewma_predict(ewma_, throughput_obs_);
  ewma_.current_estimate = state_.predicted_bw_mbps;
  state_.bw_history_mbps.push_back(throughput);
  while (static_cast<int>(state_.bw_history_mbps.size()) >
         player_.bw_history_len)
    state_.bw_history_mbps.erase(state_.bw_history_mbps.begin());
  fov_window_.push(true_pose);

  state_.last_action = a_idx;
  state_.last_download_s = download_s;
  state_.chunks_remaining -= 1;
  if (state_.chunks_remaining > 0) {
    predict_next(chunk + 1);
  } else {
    std::fill(state_.next_sizes.begin(), state_.next_sizes.end(), 0);
  }
  return out;
}

double Environment::drain_remaining() {
  if (!live_) throw SimError("drain before reset");
  double s = state_.buffer_ms / 1000.0;
  wall_clock_s_ += s;
  state_.buffer_ms = 0.0;
  return s;
}

std::vector<double> Environment::features() const {
  return state_vector(state_, player_.buffer_capacity_ms,
                      manifest_.chunk_count, action_count(),
                      player_.bw_history_len);
}

std::string episode_csv_header() {
  return "chunk,level,compressed,bytes,download_s,decode_s,rebuffer_s,"
         "psnr_sum,delta_l,qoe\n";
}

void append_episode_row(std::ostream& out, const StepOutcome& outcome,
                        int level_count) {
  Action a = action_from_index(outcome.action, level_count);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%d,%d,%d,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                outcome.chunk_index, a.level, a.compressed ? 1 : 0,
                static_cast<long long>(outcome.bytes), outcome.download_s,
                outcome.decode_s, outcome.chunk.rebuffer_s,
                outcome.chunk.fov_psnr_sum_db, outcome.chunk.level_change,
                outcome.qoe);
  out << buf;
}

}  // namespace pcs
