#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pcs/rl_agent.hpp"
#include "pcs/stream_sim.hpp"

namespace pcs {

struct FedConfig {
  int clients = 1;          // K
  double mu = 1.0;          // participation fraction, (0, 1]
  int local_epochs = 16;    // E, env steps per client per round
  int max_rounds = 100;
  std::vector<double> client_weights;  // empty means all ones
  std::uint64_t seed = 0;
  // Eq-style literal denominator mu*K instead of the sum of participating
  // weights. Only meaningful when weights are uniform; off by default.
  bool strict_denominator = false;

  int participants() const;
  void validate() const;
};

// m = max(ceil(mu*K), 1) distinct client ids, uniform without replacement,
// deterministic in (seed, round). Returned sorted ascending.
std::vector<int> select_clients(const FedConfig& config, int round);

// Seed for a client's private sampling stream, derived from the federation
// seed. Exposed so that a single-client run can be replayed outside the
// federation loop.
std::uint64_t client_rng_seed(const FedConfig& config, int client_id);

// Weighted mean of updates: sum(w_i * u_i) / denominator, where the
// denominator is sum(w_i) unless `denominator` is positive. Shape or
// non-finite faults name the offending client.
GradientUpdate fedavg(std::span<const GradientUpdate> updates,
                      std::span<const double> weights,
                      double denominator = 0.0);

// One client's persistent training state. The environment is rebuilt through
// make_env whenever an episode finishes, so traces can vary per episode.
struct ClientContext {
  int id = 0;
  std::function<std::unique_ptr<Environment>(int episode)> make_env;
  std::unique_ptr<Environment> env;
  Rng rng{0};
  std::uint64_t iteration = 0;
  int episode = 0;

  void ensure_env();
};

std::vector<ClientContext> make_clients(
    const FedConfig& config,
    const std::function<std::unique_ptr<Environment>(int client_id,
                                                     int episode)>& factory);

struct LocalResult {
  GradientUpdate update;
  double mean_reward = 0.0;  // unscaled per-chunk QoE
  double critic_loss = 0.0;  // mean squared value error, scaled units
  double entropy = 0.0;      // mean policy entropy over the rollout
  int steps = 0;
};

// Copy the global parameters, run up to E environment steps (stopping at an
// episode boundary), and return the accumulated gradients. Does not modify
// the global model.
LocalResult local_update(ClientContext& ctx, const PolicyParams& global,
                         const Hyperparams& hyper, int round);

struct RoundMetrics {
  int round = 0;
  int participants = 0;
  int failures = 0;
  int total_steps = 0;
  double mean_reward = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double beta = 0.0;
};

// One synchronous round: select clients, run their local updates in parallel
// threads, aggregate with fedavg, apply to the global model. Client failures
// are tolerated while at least one update survives; otherwise the round
// throws.
RoundMetrics run_round(PolicyParams& global, const FedConfig& config,
                       const Hyperparams& hyper,
                       std::span<ClientContext> clients, int round);

// ---- framed wire protocol ----
//
// frame := u32 BE payload length | payload
// payload := u8 version (1) | u8 type | u32 BE round | u32 BE client
//          | u32 BE n | n f64 LE   (actor array)
//          | u32 BE m | m f64 LE   (critic array)

enum class MsgType : std::uint8_t {
  update = 1,
  global_model = 2,
  round_begin = 3,
};

struct WireMessage {
  MsgType type = MsgType::update;
  std::uint32_t round = 0;
  std::uint32_t client = 0;
  std::vector<double> actor;
  std::vector<double> critic;
};

std::vector<std::uint8_t> encode_message(const WireMessage& msg);
WireMessage decode_message(std::span<const std::uint8_t> frame);

std::vector<std::uint8_t> encode_update(const GradientUpdate& update);
GradientUpdate decode_update(std::span<const std::uint8_t> frame);

// Incremental reassembly over any reliable byte stream.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  // Next complete frame (length prefix included, ready for decode_message),
  // or nullopt until enough bytes arrive.
  std::optional<std::vector<std::uint8_t>> next_frame();

 private:
  std::vector<std::uint8_t> buffer_;
};

}  // namespace pcs
