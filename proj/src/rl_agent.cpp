#include "pcs/rl_agent.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "pcs/errors.hpp"

namespace pcs {

void ArchConfig::validate() const {
  if (bw_len < 1 || action_count < 2 || conv_filters < 1 || conv_width < 1 ||
      hidden < 1)
    throw ConfigError("network dimensions must be positive");
  if (conv_width > bw_len || conv_width > action_count)
    throw ConfigError("conv width exceeds an input channel length");
}

namespace {

// Offsets into the flat parameter vector, in declaration order.
struct Layout {
  int F, W, M, A, S, H, O;
  int Pb, Ps, D;
  std::size_t kbw, bbw, ksz, bsz, wsc, bsc, wm, bm, wh, bh, total;

  Layout(const ArchConfig& a, int head_dim) {
    a.validate();
    F = a.conv_filters;
    W = a.conv_width;
    M = a.bw_len;
    A = a.action_count;
    S = a.scalar_inputs();
    H = a.hidden;
    O = head_dim;
    Pb = a.conv_bw_out();
    Ps = a.conv_sz_out();
    D = a.merge_inputs();
    kbw = 0;
    bbw = kbw + static_cast<std::size_t>(F) * W;
    ksz = bbw + F;
    bsz = ksz + static_cast<std::size_t>(F) * W;
    wsc = bsz + F;
    bsc = wsc + static_cast<std::size_t>(F) * S;
    wm = bsc + F;
    bm = wm + static_cast<std::size_t>(H) * D;
    wh = bm + H;
    bh = wh + static_cast<std::size_t>(O) * H;
    total = bh + O;
  }
};

struct Activations {
  std::vector<double> bw_pre, sz_pre, sc_pre;  // pre-ReLU
  std::vector<double> z;                       // merged post-ReLU inputs
  std::vector<double> h_pre, h;
  std::vector<double> out;
};

void forward_net(const Layout& lay, std::span<const double> p,
                 std::span<const double> x, Activations& act) {
  const double* bw = x.data();
  const double* sz = x.data() + lay.M;
  const double* sc = x.data() + lay.M + lay.A;

  act.bw_pre.assign(static_cast<std::size_t>(lay.Pb) * lay.F, 0.0);
  act.sz_pre.assign(static_cast<std::size_t>(lay.Ps) * lay.F, 0.0);
  act.sc_pre.assign(lay.F, 0.0);
  act.z.assign(lay.D, 0.0);

  for (int f = 0; f < lay.F; ++f) {
    const double* k = &p[lay.kbw + static_cast<std::size_t>(f) * lay.W];
    double bias = p[lay.bbw + f];
    for (int pos = 0; pos < lay.Pb; ++pos) {
      double acc = bias;
      for (int w = 0; w < lay.W; ++w) acc += k[w] * bw[pos + w];
      act.bw_pre[static_cast<std::size_t>(pos) * lay.F + f] = acc;
    }
    k = &p[lay.ksz + static_cast<std::size_t>(f) * lay.W];
    bias = p[lay.bsz + f];
    for (int pos = 0; pos < lay.Ps; ++pos) {
      double acc = bias;
      for (int w = 0; w < lay.W; ++w) acc += k[w] * sz[pos + w];
      act.sz_pre[static_cast<std::size_t>(pos) * lay.F + f] = acc;
    }
    const double* ws = &p[lay.wsc + static_cast<std::size_t>(f) * lay.S];
    double acc = p[lay.bsc + f];
    for (int s = 0; s < lay.S; ++s) acc += ws[s] * sc[s];
    act.sc_pre[f] = acc;
  }

  std::size_t zi = 0;
  for (double v : act.bw_pre) act.z[zi++] = std::max(0.0, v);
  for (double v : act.sz_pre) act.z[zi++] = std::max(0.0, v);
  for (double v : act.sc_pre) act.z[zi++] = std::max(0.0, v);

  act.h_pre.assign(lay.H, 0.0);
  act.h.assign(lay.H, 0.0);
  for (int j = 0; j < lay.H; ++j) {
    const double* wrow = &p[lay.wm + static_cast<std::size_t>(j) * lay.D];
    double acc = p[lay.bm + j];
    for (int d = 0; d < lay.D; ++d) acc += wrow[d] * act.z[d];
    act.h_pre[j] = acc;
    act.h[j] = std::max(0.0, acc);
  }

  act.out.assign(lay.O, 0.0);
  for (int o = 0; o < lay.O; ++o) {
    const double* wrow = &p[lay.wh + static_cast<std::size_t>(o) * lay.H];
    double acc = p[lay.bh + o];
    for (int j = 0; j < lay.H; ++j) acc += wrow[j] * act.h[j];
    act.out[o] = acc;
  }
}

// Accumulates parameter gradients for a given dL/d(out) seed. Inputs are
// never differentiated.
void backward_net(const Layout& lay, std::span<const double> p,
                  std::span<const double> x, const Activations& act,
                  std::span<const double> dout, std::span<double> grad) {
  const double* bw = x.data();
  const double* sz = x.data() + lay.M;
  const double* sc = x.data() + lay.M + lay.A;

  std::vector<double> dh(lay.H, 0.0);
  for (int o = 0; o < lay.O; ++o) {
    double g = dout[o];
    if (g == 0.0) continue;
    double* wrow = &grad[lay.wh + static_cast<std::size_t>(o) * lay.H];
    const double* prow = &p[lay.wh + static_cast<std::size_t>(o) * lay.H];
    for (int j = 0; j < lay.H; ++j) {
      wrow[j] += g * act.h[j];
      dh[j] += g * prow[j];
    }
    grad[lay.bh + o] += g;
  }

  std::vector<double> dz(lay.D, 0.0);
  for (int j = 0; j < lay.H; ++j) {
    if (act.h_pre[j] <= 0.0) continue;  // ReLU gate
    double g = dh[j];
    if (g == 0.0) continue;
    double* wrow = &grad[lay.wm + static_cast<std::size_t>(j) * lay.D];
    const double* prow = &p[lay.wm + static_cast<std::size_t>(j) * lay.D];
    for (int d = 0; d < lay.D; ++d) {
      wrow[d] += g * act.z[d];
      dz[d] += g * prow[d];
    }
    grad[lay.bm + j] += g;
  }

  std::size_t zoff = 0;
  for (int pos = 0; pos < lay.Pb; ++pos) {
    for (int f = 0; f < lay.F; ++f) {
      std::size_t zi = zoff + static_cast<std::size_t>(pos) * lay.F + f;
      if (act.bw_pre[static_cast<std::size_t>(pos) * lay.F + f] <= 0.0)
        continue;
      double g = dz[zi];
      if (g == 0.0) continue;
      double* k = &grad[lay.kbw + static_cast<std::size_t>(f) * lay.W];
      for (int w = 0; w < lay.W; ++w) k[w] += g * bw[pos + w];
      grad[lay.bbw + f] += g;
    }
  }
  zoff += static_cast<std::size_t>(lay.Pb) * lay.F;
  for (int pos = 0; pos < lay.Ps; ++pos) {
    for (int f = 0; f < lay.F; ++f) {
      std::size_t zi = zoff + static_cast<std::size_t>(pos) * lay.F + f;
      if (act.sz_pre[static_cast<std::size_t>(pos) * lay.F + f] <= 0.0)
        continue;
      double g = dz[zi];
      if (g == 0.0) continue;
      double* k = &grad[lay.ksz + static_cast<std::size_t>(f) * lay.W];
      for (int w = 0; w < lay.W; ++w) k[w] += g * sz[pos + w];
      grad[lay.bsz + f] += g;
    }
  }
  zoff += static_cast<std::size_t>(lay.Ps) * lay.F;
  for (int f = 0; f < lay.F; ++f) {
    if (act.sc_pre[f] <= 0.0) continue;
    double g = dz[zoff + f];
    if (g == 0.0) continue;
    double* ws = &grad[lay.wsc + static_cast<std::size_t>(f) * lay.S];
    for (int s = 0; s < lay.S; ++s) ws[s] += g * sc[s];
    grad[lay.bsc + f] += g;
  }
}

void check_features(const ArchConfig& arch, std::span<const double> x) {
  if (static_cast<int>(x.size()) != arch.feature_count())
    throw SimError("feature vector length " + std::to_string(x.size()) +
                   ", expected " + std::to_string(arch.feature_count()));
  for (double v : x)
    if (!std::isfinite(v)) throw SimError("non-finite feature value");
}

std::vector<double> softmax(std::span<const double> logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - m);
    sum += probs[i];
  }
  for (double& v : probs) v /= sum;
  return probs;
}

}  // namespace

std::size_t param_count(const ArchConfig& arch, int head_dim) {
  return Layout(arch, head_dim).total;
}

PolicyParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  PolicyParams params;
  params.arch = arch;
  Rng rng(seed);
  auto init_one = [&](int head_dim) {
    Layout lay(arch, head_dim);
    std::vector<double> p(lay.total, 0.0);
    auto fill = [&](std::size_t from, std::size_t count, int fan_in) {
      double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < count; ++i)
        p[from + i] = rng.gaussian() * scale;
    };
    fill(lay.kbw, static_cast<std::size_t>(lay.F) * lay.W, lay.W);
    fill(lay.ksz, static_cast<std::size_t>(lay.F) * lay.W, lay.W);
    fill(lay.wsc, static_cast<std::size_t>(lay.F) * lay.S, lay.S);
    fill(lay.wm, static_cast<std::size_t>(lay.H) * lay.D, lay.D);
    // Heads stay zero: uniform policy, zero value.
    return p;
  };
  params.actor = init_one(arch.action_count);
  params.critic = init_one(1);
  return params;
}

double Hyperparams::beta_at(double iteration) const {
  if (!(entropy_decay_iters > 0.0)) return entropy_end;
  if (iteration >= entropy_decay_iters) return entropy_end;
  if (iteration <= 0.0) return entropy_start;
  double f = iteration / entropy_decay_iters;
  return entropy_start + f * (entropy_end - entropy_start);
}

std::vector<double> forward_policy(const PolicyParams& params,
                                   std::span<const double> features) {
  check_features(params.arch, features);
  Layout lay(params.arch, params.arch.action_count);
  if (params.actor.size() != lay.total)
    throw ConfigError("actor parameter count does not match architecture");
  Activations act;
  forward_net(lay, params.actor, features, act);
  return softmax(act.out);
}

double forward_value(const PolicyParams& params,
                     std::span<const double> features) {
  check_features(params.arch, features);
  Layout lay(params.arch, 1);
  if (params.critic.size() != lay.total)
    throw ConfigError("critic parameter count does not match architecture");
  Activations act;
  forward_net(lay, params.critic, features, act);
  return act.out[0];
}

int sample_action(std::span<const double> probs, Rng& rng) {
  if (probs.empty()) throw SimError("empty action distribution");
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0)
      throw SimError("degenerate action distribution");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw SimError("action distribution does not sum to 1");
  double u = rng.uniform01() * sum;
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

double policy_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

std::vector<double> compute_returns(const Rollout& rollout, double discount) {
  std::vector<double> returns(rollout.steps.size(), 0.0);
  double acc = rollout.bootstrap_value;
  for (std::size_t i = rollout.steps.size(); i-- > 0;) {
    acc = rollout.steps[i].reward + discount * acc;
    returns[i] = acc;
  }
  return returns;
}

GradientUpdate accumulate_gradients(const PolicyParams& params,
                                    const Rollout& rollout,
                                    const Hyperparams& hyper) {
  Layout actor_lay(params.arch, params.arch.action_count);
  Layout critic_lay(params.arch, 1);
  if (params.actor.size() != actor_lay.total ||
      params.critic.size() != critic_lay.total)
    throw ConfigError("parameter count does not match architecture");

  GradientUpdate g;
  g.actor.assign(actor_lay.total, 0.0);
  g.critic.assign(critic_lay.total, 0.0);
  g.sample_count = static_cast<std::uint32_t>(rollout.steps.size());

  std::vector<double> returns = compute_returns(rollout, hyper.discount);

  Activations actor_act, critic_act;
  for (std::size_t t = 0; t < rollout.steps.size(); ++t) {
    const RolloutStep& step = rollout.steps[t];
    check_features(params.arch, step.features);
    if (step.action < 0 || step.action >= params.arch.action_count)
      throw ValidationError("rollout action out of range");

    forward_net(actor_lay, params.actor, step.features, actor_act);
    std::vector<double> probs = softmax(actor_act.out);
    forward_net(critic_lay, params.critic, step.features, critic_act);
    double value = critic_act.out[0];
    double advantage = returns[t] - value;
    double beta = hyper.beta_at(
        static_cast<double>(rollout.start_iteration) + static_cast<double>(t));

    // d/dlogit_j of [log pi(a) * A + beta * H(pi)]:
    //   (1{j==a} - p_j) * A - beta * p_j * (log p_j + H)
    double entropy = policy_entropy(probs);
    std::vector<double> dlogits(probs.size());
    for (std::size_t j = 0; j < probs.size(); ++j) {
      double logp = std::log(std::max(probs[j], 1e-300));
      double indicator = (static_cast<int>(j) == step.action) ? 1.0 : 0.0;
      dlogits[j] = (indicator - probs[j]) * advantage -
                   beta * probs[j] * (logp + entropy);
    }
    backward_net(actor_lay, params.actor, step.features, actor_act, dlogits,
                 g.actor);

    // d/dv of (R - v)^2 = 2 (v - R)
    double dv[1] = {2.0 * (value - returns[t])};
    backward_net(critic_lay, params.critic, step.features, critic_act, dv,
                 g.critic);
  }
  return g;
}

void apply_update(PolicyParams& params, const GradientUpdate& update,
                  const Hyperparams& hyper) {
  if (update.actor.size() != params.actor.size() ||
      update.critic.size() != params.critic.size())
    throw ValidationError("update size does not match parameters");
  for (std::size_t i = 0; i < params.actor.size(); ++i)
    params.actor[i] += hyper.lr_actor * update.actor[i];
  for (std::size_t i = 0; i < params.critic.size(); ++i)
    params.critic[i] -= hyper.lr_critic * update.critic[i];
  params.iteration += update.sample_count;
}

std::string save_checkpoint(const PolicyParams& params,
                            const std::string& spec_hash) {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  if (!spec_hash.empty()) doc["spec_hash"] = spec_hash;
  doc["arch"] = {{"bw_len", params.arch.bw_len},
                 {"action_count", params.arch.action_count},
                 {"conv_filters", params.arch.conv_filters},
                 {"conv_width", params.arch.conv_width},
                 {"hidden", params.arch.hidden}};
  doc["iteration"] = params.iteration;
  doc["actor"] = params.actor;
  doc["critic"] = params.critic;
  return doc.dump(2) + "\n";
}

PolicyParams load_checkpoint(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  PolicyParams params;
  try {
    if (doc.at("version").get<int>() != 1)
      throw ParseError("checkpoint: unsupported version");
    const auto& a = doc.at("arch");
    params.arch.bw_len = a.at("bw_len").get<int>();
    params.arch.action_count = a.at("action_count").get<int>();
    params.arch.conv_filters = a.at("conv_filters").get<int>();
    params.arch.conv_width = a.at("conv_width").get<int>();
    params.arch.hidden = a.at("hidden").get<int>();
    params.iteration = doc.at("iteration").get<std::uint64_t>();
    params.actor = doc.at("actor").get<std::vector<double>>();
    params.critic = doc.at("critic").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  params.arch.validate();
  if (params.actor.size() != param_count(params.arch, params.arch.action_count) ||
      params.critic.size() != param_count(params.arch, 1))
    throw ConfigError("checkpoint parameter counts do not match architecture");
  for (double v : params.actor)
    if (!std::isfinite(v)) throw ValidationError("non-finite actor parameter");
  for (double v : params.critic)
    if (!std::isfinite(v))
      throw ValidationError("non-finite critic parameter");
  return params;
}

}  // namespace pcs
