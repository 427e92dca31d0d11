#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pcs/baselines.hpp"
#include "pcs/fed.hpp"
#include "pcs/media.hpp"
#include "pcs/rl_agent.hpp"
#include "pcs/stream_sim.hpp"
#include "pcs/tile_select.hpp"
#include "pcs/traces.hpp"

namespace pcs {

enum class Algo { frl, rl, bb, quetra, rmpc, random_policy };

Algo algo_from_string(const std::string& name);            // ConfigError on unknown
const char* algo_to_string(Algo algo);
bool algo_needs_checkpoint(Algo algo);                     // frl / rl only

struct SyntheticManifestSpec {
  TileGrid grid{3, 3, 4, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}};
  int chunks = 60;
  int levels = 5;
  double chunk_duration_ms = 330.0;
  SyntheticMediaProfile profile;
};

struct ManifestSource {
  std::string path;  // when empty, the synthetic spec is used
  SyntheticManifestSpec synthetic;
};

struct BandwidthSource {
  std::string path;                  // file trace shared by every env
  bool use_groups = false;           // per-client-group synthetic models
  std::vector<BwSynthModel> groups;  // client c draws from groups[c % size]
  BwSynthModel synthetic;            // default when no path and no groups
  double duration_s = 0.0;           // 0 = video length plus slack
};

struct FovSource {
  std::string path;
  FovSynthModel synthetic;
  double duration_s = 0.0;
};

struct ComputeSpec {
  double capacity = 500.0;
  std::vector<std::pair<double, double>> schedule;  // (from_ts_s, capacity)
};

// Declarative description of one run, parsed from a JSON document.  The
// `seed` field is mandatory; everything else has defaults documented in the
// README.  Flags may override algo/seed/out/round counts after parsing.
struct ExperimentSpec {
  Algo algo = Algo::frl;
  std::uint64_t seed = 0;
  std::string out_dir;
  int episodes = 4;          // evaluation episodes
  std::string checkpoint;    // eval input for frl / rl
  ManifestSource manifest;
  BandwidthSource bandwidth;
  FovSource fov;
  ComputeSpec compute;
  PlayerConfig player;
  FrustumParams frustum;
  std::vector<QoeWeights> qoe_table;  // empty = built-in distance table
  FedConfig fed;                      // fed.seed is ignored; spec.seed rules
  Hyperparams hyper;
  BaselineConfig baseline;  // weights / psnr_per_level are filled per run
  int conv_filters = 128;   // network width knobs (lengths come from the env)
  int conv_width = 4;
  int hidden = 128;
};

ExperimentSpec parse_experiment_spec(const std::string& json_text,
                                     const std::string& origin = "<spec>");
ExperimentSpec load_experiment_spec(const std::string& path);

// Canonical JSON of the full spec (key-sorted, stable numerals).
std::string serialize_experiment_spec(const ExperimentSpec& spec);
// FNV-1a 64 over the canonical form, as 16 hex digits. Stamped into every
// output file.
std::string spec_hash(const ExperimentSpec& spec);
// Hash of only the replay-defining subset (media, traces, player, frustum,
// QoE table, seed, episodes). Two specs with equal replay hashes see
// identical evaluation environments, whatever their algorithms.
std::string replay_hash(const ExperimentSpec& spec);

std::uint64_t fnv1a64(const std::string& text);

// Media and environment construction. Synthetic traces get per-(client,
// episode) seeds derived from the spec seed; file traces are shared as-is.
TileManifest build_manifest(const ExperimentSpec& spec);
std::unique_ptr<Environment> make_train_env(const ExperimentSpec& spec,
                                            const TileManifest& manifest,
                                            int client, int episode);
std::unique_ptr<Environment> make_eval_env(const ExperimentSpec& spec,
                                           const TileManifest& manifest,
                                           int episode);

ArchConfig arch_for(const ExperimentSpec& spec, const TileManifest& manifest);

// Per-chunk action source used by evaluation. Learned policies act greedily
// (argmax, ties to the lower index); baselines are their selector rules.
class EvalPolicy {
 public:
  virtual ~EvalPolicy() = default;
  virtual int choose(const Environment& env) = 0;
  virtual void observe(const StepOutcome& outcome) { (void)outcome; }
  virtual void begin_episode(const Environment& env) { (void)env; }
};

std::unique_ptr<EvalPolicy> make_eval_policy(const ExperimentSpec& spec,
                                             const TileManifest& manifest);

int greedy_action(const PolicyParams& params, std::span<const double> features);

struct TrainResult {
  int rounds = 0;
  std::vector<RoundMetrics> metrics;
  PolicyParams params;
  std::string checkpoint_path;  // empty when out_dir is empty
  std::string curve_path;
};

// Full training run: builds the manifest, clients, and global model, runs
// fed.max_rounds rounds, writes training_curve.csv and checkpoint.json under
// out_dir (when set) and returns the trajectory.
TrainResult train_experiment(const ExperimentSpec& spec);

struct EvalEpisodeMetrics {
  int episode = 0;
  int chunks = 0;
  double qoe_sum = 0.0;
  double level_sum = 0.0;
  double psnr_sum = 0.0;
  double rebuffer_s = 0.0;
  double bytes = 0.0;
  double wall_clock_s = 0.0;  // includes startup and final drain

  double mean_qoe() const { return chunks ? qoe_sum / chunks : 0.0; }
};

struct EvalSummary {
  std::string algo;
  int episodes = 0;
  int chunks = 0;              // total over all episodes
  double mean_qoe = 0.0;       // per-chunk mean
  double mean_level = 0.0;     // per-chunk mean, 1..L
  double mean_psnr = 0.0;      // per-chunk mean FoV PSNR sum, dB
  double total_rebuffer_s = 0.0;
  double mean_bandwidth_mbps = 0.0;  // delivered bits / total wall-clock
};

struct EvalResult {
  std::vector<EvalEpisodeMetrics> episodes;
  EvalSummary summary;
  std::vector<std::string> episode_csv_paths;
  std::string summary_path;  // empty when out_dir is empty
};

EvalResult eval_experiment(const ExperimentSpec& spec);

// Evaluates every spec (all must share a replay hash) and writes one summary
// row per spec, input order, to `out_csv`. Returns the CSV text.
std::string compare_experiments(const std::vector<ExperimentSpec>& specs,
                                const std::string& out_csv);

}  // namespace pcs
