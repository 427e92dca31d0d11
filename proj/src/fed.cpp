#include "pcs/fed.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <thread>

#include "pcs/errors.hpp"

namespace pcs {

int FedConfig::participants() const {
  int m = static_cast<int>(std::ceil(mu * clients));
  return std::max(m, 1);
}

void FedConfig::validate() const {
  if (clients < 1) throw ConfigError("federation needs >= 1 client");
  if (!(mu > 0.0 && mu <= 1.0))
    throw ConfigError("participation fraction must lie in (0, 1]");
  if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
  if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  if (!client_weights.empty()) {
    if (static_cast<int>(client_weights.size()) != clients)
      throw ConfigError("client_weights must have one entry per client");
    for (double w : client_weights)
      if (!(w > 0.0)) throw ConfigError("client weights must be positive");
  }
}

std::vector<int> select_clients(const FedConfig& config, int round) {
  config.validate();
  int m = config.participants();
  Rng rng(derive_seed(config.seed, 0x5e1ec7u, static_cast<std::uint64_t>(round)));
  // Partial Fisher-Yates over the id range.
  std::vector<int> ids(config.clients);
  for (int i = 0; i < config.clients; ++i) ids[i] = i;
  for (int i = 0; i < m; ++i) {
    int j = i + static_cast<int>(rng.uniform_int(config.clients - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::uint64_t client_rng_seed(const FedConfig& config, int client_id) {
  return derive_seed(config.seed, 0xc11e47u,
                     static_cast<std::uint64_t>(client_id));
}

GradientUpdate fedavg(std::span<const GradientUpdate> updates,
                      std::span<const double> weights, double denominator) {
  if (updates.empty()) throw ValidationError("fedavg: no updates");
  if (weights.size() != updates.size())
    throw ValidationError("fedavg: one weight per update required");
  const std::size_t actor_n = updates[0].actor.size();
  const std::size_t critic_n = updates[0].critic.size();
  double wsum = 0.0;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (updates[i].actor.size() != actor_n ||
        updates[i].critic.size() != critic_n)
      throw ValidationError("fedavg: shape mismatch from client " +
                            std::to_string(updates[i].client_id));
    if (!(weights[i] > 0.0))
      throw ValidationError("fedavg: non-positive weight for client " +
                            std::to_string(updates[i].client_id));
    for (double v : updates[i].actor)
      if (!std::isfinite(v))
        throw ValidationError("fedavg: non-finite actor update from client " +
                              std::to_string(updates[i].client_id));
    for (double v : updates[i].critic)
      if (!std::isfinite(v))
        throw ValidationError("fedavg: non-finite critic update from client " +
                              std::to_string(updates[i].client_id));
    wsum += weights[i];
  }
  double denom = denominator > 0.0 ? denominator : wsum;

  GradientUpdate out;
  out.actor.assign(actor_n, 0.0);
  out.critic.assign(critic_n, 0.0);
  std::uint32_t samples = 0;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    double w = weights[i] / denom;
    for (std::size_t k = 0; k < actor_n; ++k)
      out.actor[k] += w * updates[i].actor[k];
    for (std::size_t k = 0; k < critic_n; ++k)
      out.critic[k] += w * updates[i].critic[k];
    samples += updates[i].sample_count;
    out.round = updates[i].round;
  }
  out.sample_count = samples;
  return out;
}

void ClientContext::ensure_env() {
  if (!env || env->done()) {
    env = make_env(episode);
    episode += 1;
    env->reset();
  }
}

std::vector<ClientContext> make_clients(
    const FedConfig& config,
    const std::function<std::unique_ptr<Environment>(int, int)>& factory) {
  config.validate();
  std::vector<ClientContext> clients(config.clients);
  for (int i = 0; i < config.clients; ++i) {
    ClientContext& ctx = clients[i];
    ctx.id = i;
    ctx.rng = Rng(client_rng_seed(config, i));
    ctx.make_env = [factory, i](int episode) { return factory(i, episode); };
  }
  return clients;
}

LocalResult local_update(ClientContext& ctx, const PolicyParams& global,
                         const Hyperparams& hyper, int round) {
  ctx.ensure_env();
  Environment& env = *ctx.env;

  Rollout rollout;
  rollout.start_iteration = ctx.iteration;
  double reward_sum = 0.0;
  double entropy_sum = 0.0;
  for (int t = 0; t < hyper.local_epochs && !env.done(); ++t) {
    RolloutStep step;
    step.features = env.features();
    std::vector<double> probs = forward_policy(global, step.features);
    step.action = sample_action(probs, ctx.rng);
    step.value = forward_value(global, step.features);
    StepOutcome outcome = env.step(step.action);
    step.reward = outcome.qoe * hyper.reward_scale;
    reward_sum += outcome.qoe;
    entropy_sum += policy_entropy(probs);
    rollout.steps.push_back(std::move(step));
  }
  rollout.bootstrap_value =
      env.done() ? 0.0 : forward_value(global, env.features());

  LocalResult result;
  result.update = accumulate_gradients(global, rollout, hyper);
  result.update.client_id = static_cast<std::uint32_t>(ctx.id);
  result.update.round = static_cast<std::uint32_t>(round);
  result.steps = static_cast<int>(rollout.steps.size());
  ctx.iteration += rollout.steps.size();

  if (!rollout.steps.empty()) {
    std::vector<double> returns = compute_returns(rollout, hyper.discount);
    double loss = 0.0;
    for (std::size_t t = 0; t < rollout.steps.size(); ++t) {
      double err = returns[t] - rollout.steps[t].value;
      loss += err * err;
    }
    result.critic_loss = loss / static_cast<double>(rollout.steps.size());
    result.mean_reward = reward_sum / static_cast<double>(rollout.steps.size());
    result.entropy = entropy_sum / static_cast<double>(rollout.steps.size());
  }
  return result;
}

RoundMetrics run_round(PolicyParams& global, const FedConfig& config,
                       const Hyperparams& hyper,
                       std::span<ClientContext> clients, int round) {
  config.validate();
  if (static_cast<int>(clients.size()) != config.clients)
    throw ConfigError("client context count does not match configuration");

  std::vector<int> selected = select_clients(config, round);
  std::vector<std::optional<LocalResult>> results(selected.size());
  std::vector<std::string> errors(selected.size());

  // Clients are independent: private env, private rng. Results land in
  // per-client slots, so the aggregation order below is deterministic.
  std::vector<std::thread> workers;
  workers.reserve(selected.size());
  for (std::size_t i = 0; i < selected.size(); ++i) {
    workers.emplace_back([&, i] {
      try {
        results[i] = local_update(clients[selected[i]], global, hyper, round);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
  }
  for (auto& w : workers) w.join();

  std::vector<GradientUpdate> updates;
  std::vector<double> weights;
  RoundMetrics metrics;
  metrics.round = round;
  double beta_sum = 0.0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (!results[i]) {
      metrics.failures += 1;
      continue;
    }
    LocalResult& r = *results[i];
    double w = config.client_weights.empty()
                   ? 1.0
                   : config.client_weights[selected[i]];
    updates.push_back(std::move(r.update));
    weights.push_back(w);
    metrics.participants += 1;
    metrics.total_steps += r.steps;
    metrics.mean_reward += r.mean_reward;
    metrics.critic_loss += r.critic_loss;
    metrics.entropy += r.entropy;
    beta_sum += hyper.beta_at(
        static_cast<double>(clients[selected[i]].iteration - r.steps));
  }
  if (updates.empty()) {
    std::string detail;
    for (const auto& e : errors)
      if (!e.empty()) detail = e;
    throw Error("round " + std::to_string(round) +
                ": every client failed (" + detail + ")");
  }

  double denom = config.strict_denominator ? config.mu * config.clients : 0.0;
  GradientUpdate agg = fedavg(updates, weights, denom);
  apply_update(global, agg, hyper);

  double n = static_cast<double>(metrics.participants);
  metrics.mean_reward /= n;
  metrics.critic_loss /= n;
  metrics.entropy /= n;
  metrics.beta = beta_sum / n;
  return metrics;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return (static_cast<std::uint32_t>(b[at]) << 24) |
         (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) |
         static_cast<std::uint32_t>(b[at + 3]);
}

void put_f64_le(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int k = 0; k < 8; ++k)
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
}

double get_f64_le(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k)
    bits |= static_cast<std::uint64_t>(b[at + k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

constexpr std::uint8_t kWireVersion = 1;
// Generous bound: the reference architecture's update is ~5 MB.
constexpr std::uint32_t kMaxFrameBytes = 64u * 1024u * 1024u;

}  // namespace

std::vector<std::uint8_t> encode_message(const WireMessage& msg) {
  std::vector<std::uint8_t> payload;
  payload.reserve(14 + 8 * (msg.actor.size() + msg.critic.size()));
  payload.push_back(kWireVersion);
  payload.push_back(static_cast<std::uint8_t>(msg.type));
  put_u32(payload, msg.round);
  put_u32(payload, msg.client);
  put_u32(payload, static_cast<std::uint32_t>(msg.actor.size()));
  for (double v : msg.actor) put_f64_le(payload, v);
  put_u32(payload, static_cast<std::uint32_t>(msg.critic.size()));
  for (double v : msg.critic) put_f64_le(payload, v);
  if (payload.size() > kMaxFrameBytes)
    throw ProtocolError("message exceeds the frame size bound");

  std::vector<std::uint8_t> frame;
  frame.reserve(4 + payload.size());
  put_u32(frame, static_cast<std::uint32_t>(payload.size()));
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

WireMessage decode_message(std::span<const std::uint8_t> frame) {
  if (frame.size() < 4) throw ProtocolError("truncated frame header");
  std::uint32_t len = get_u32(frame, 0);
  if (len > kMaxFrameBytes) throw ProtocolError("frame length overflow");
  if (frame.size() != 4 + static_cast<std::size_t>(len))
    throw ProtocolError("frame length mismatch: header says " +
                        std::to_string(len) + ", got " +
                        std::to_string(frame.size() - 4));
  std::span<const std::uint8_t> p = frame.subspan(4);
  if (p.size() < 14) throw ProtocolError("payload too short");
  if (p[0] != kWireVersion)
    throw ProtocolError("unsupported protocol version " +
                        std::to_string(p[0]));
  WireMessage msg;
  switch (p[1]) {
    case 1: msg.type = MsgType::update; break;
    case 2: msg.type = MsgType::global_model; break;
    case 3: msg.type = MsgType::round_begin; break;
    default:
      throw ProtocolError("unknown message type " + std::to_string(p[1]));
  }
  msg.round = get_u32(p, 2);
  msg.client = get_u32(p, 6);
  std::size_t at = 10;
  auto read_array = [&](std::vector<double>& out) {
    if (p.size() < at + 4) throw ProtocolError("truncated array length");
    std::uint32_t n = get_u32(p, at);
    at += 4;
    if (p.size() < at + 8ull * n) throw ProtocolError("truncated array body");
    out.resize(n);
    for (std::uint32_t i = 0; i < n; ++i, at += 8) out[i] = get_f64_le(p, at);
  };
  read_array(msg.actor);
  read_array(msg.critic);
  if (at != p.size())
    throw ProtocolError("trailing bytes after payload");
  return msg;
}

std::vector<std::uint8_t> encode_update(const GradientUpdate& update) {
  WireMessage msg;
  msg.type = MsgType::update;
  msg.round = update.round;
  msg.client = update.client_id;
  msg.actor = update.actor;
  msg.critic = update.critic;
  return encode_message(msg);
}

GradientUpdate decode_update(std::span<const std::uint8_t> frame) {
  WireMessage msg = decode_message(frame);
  if (msg.type != MsgType::update)
    throw ProtocolError("expected an update message");
  GradientUpdate update;
  update.round = msg.round;
  update.client_id = msg.client;
  update.actor = std::move(msg.actor);
  update.critic = std::move(msg.critic);
  return update;
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<std::vector<std::uint8_t>> FrameReader::next_frame() {
  if (buffer_.size() < 4) return std::nullopt;
  std::uint32_t len = get_u32(buffer_, 0);
  if (len > kMaxFrameBytes) throw ProtocolError("frame length overflow");
  if (buffer_.size() < 4 + static_cast<std::size_t>(len)) return std::nullopt;
  std::vector<std::uint8_t> frame(buffer_.begin(),
                                  buffer_.begin() + 4 + len);
  buffer_.erase(buffer_.begin(), buffer_.begin() + 4 + len);
  return frame;
}

}  // namespace pcs
