#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcs/rng.hpp"

namespace pcs {

// Shape of the actor/critic networks. Both share the structure: a 1D
// convolution over the bandwidth history, a 1D convolution over the
// per-action size vector, an affine map over the remaining scalar features
// (one-hot last action, buffer fill, download time, chunks left), a merge
// hidden layer, and a head (action_count logits for the actor, one value for
// the critic).
struct ArchConfig {
  int bw_len = 12;
  int action_count = 10;  // 2L
  int conv_filters = 128;
  int conv_width = 4;
  int hidden = 128;

  int scalar_inputs() const { return action_count + 3; }
  int feature_count() const { return bw_len + 2 * action_count + 3; }
  int conv_bw_out() const { return bw_len - conv_width + 1; }
  int conv_sz_out() const { return action_count - conv_width + 1; }
  int merge_inputs() const {
    return (conv_bw_out() + conv_sz_out() + 1) * conv_filters;
  }
  void validate() const;
};

std::size_t param_count(const ArchConfig& arch, int head_dim);

struct PolicyParams {
  ArchConfig arch;
  std::vector<double> actor;
  std::vector<double> critic;
  std::uint64_t iteration = 0;  // environment steps folded into these params
};

// Hidden layers start at gaussian / sqrt(fan_in); both heads start at zero,
// so the initial policy is exactly uniform and the initial value exactly 0.
PolicyParams init_params(const ArchConfig& arch, std::uint64_t seed);

struct Hyperparams {
  double discount = 0.99;
  double lr_actor = 1e-4;
  double lr_critic = 1e-3;
  double entropy_start = 5.0;
  double entropy_end = 0.1;
  double entropy_decay_iters = 3e5;
  int local_epochs = 16;     // env steps per update window
  // Rewards are scaled by this factor before entering a rollout. The
  // simulator's emitted QoE stays untouched; this only conditions gradient
  // magnitudes against the fixed learning rates.
  double reward_scale = 0.02;

  // Linear from entropy_start at iteration 0 to entropy_end at
  // entropy_decay_iters, exactly entropy_end afterwards.
  double beta_at(double iteration) const;
};

struct RolloutStep {
  std::vector<double> features;
  int action = 0;
  double reward = 0.0;  // already reward-scaled
  double value = 0.0;   // critic estimate at collection time
};

struct Rollout {
  std::vector<RolloutStep> steps;
  double bootstrap_value = 0.0;  // 0 at terminal, V(s_end) otherwise
  std::uint64_t start_iteration = 0;
};

// Softmax action distribution; throws SimError on non-finite features.
std::vector<double> forward_policy(const PolicyParams& params,
                                   std::span<const double> features);
double forward_value(const PolicyParams& params,
                     std::span<const double> features);

// Inverse-CDF sample; validates the distribution (finite, sums to ~1).
int sample_action(std::span<const double> probs, Rng& rng);

double policy_entropy(std::span<const double> probs);

// R_t = r_t + discount * R_{t+1}, seeded with the bootstrap value.
std::vector<double> compute_returns(const Rollout& rollout, double discount);

struct GradientUpdate {
  std::vector<double> actor;   // ascent direction of the policy objective
  std::vector<double> critic;  // gradient of the squared value error
  std::uint32_t client_id = 0;
  std::uint32_t round = 0;
  std::uint32_t sample_count = 0;
};

// Sums, over the rollout, grad log pi(a_t|s_t) * (R_t - V(s_t)) plus the
// entropy bonus beta * grad H(pi(s_t)) into `actor`, and
// grad (R_t - V(s_t))^2 into `critic`. Returns are treated as constants
// (semi-gradient); the advantage never backpropagates into the actor input.
GradientUpdate accumulate_gradients(const PolicyParams& params,
                                    const Rollout& rollout,
                                    const Hyperparams& hyper);

// Plain SGD: actor += lr_actor * g.actor (ascent); critic -= lr_critic *
// g.critic (descent). Also advances the iteration counter by sample_count.
void apply_update(PolicyParams& params, const GradientUpdate& update,
                  const Hyperparams& hyper);

// Versioned JSON checkpoint; reload is bit-exact.
std::string save_checkpoint(const PolicyParams& params,
                            const std::string& spec_hash = "");
PolicyParams load_checkpoint(const std::string& json_text);

}  // namespace pcs
