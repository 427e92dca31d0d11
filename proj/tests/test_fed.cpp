#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "pcs/errors.hpp"
#include "pcs/fed.hpp"

using namespace pcs;

namespace {

TileManifest fed_manifest(int chunks, int levels = 2) {
  TileGrid grid;
  grid.nx = 2;
  grid.ny = 2;
  grid.nz = 1;
  grid.tile_extent = {1.0, 1.0, 2.0};
  SyntheticMediaProfile profile;
  return generate_synthetic_manifest(5, grid, chunks, levels, profile);
}

std::unique_ptr<Environment> fed_env(int chunks, double mbps) {
  BandwidthTrace bw;
  bw.samples = {{0.0, mbps}, {1000.0, mbps}};
  FovTrace fov;
  fov.samples = {{0.0, {1.0, -3.0, 1.0}, {90.0, 0.0, 0.0}},
                 {1000.0, {1.0, -3.0, 1.0}, {90.0, 0.0, 0.0}}};
  return std::make_unique<Environment>(fed_manifest(chunks), bw, fov,
                                       ComputeBudgetTrace{}, PlayerConfig{});
}

ArchConfig fed_arch() {
  ArchConfig a;
  a.bw_len = 12;
  a.action_count = 4;  // two levels
  a.conv_filters = 2;
  a.conv_width = 2;
  a.hidden = 3;
  return a;
}

GradientUpdate make_update(std::uint32_t client, double fill,
                           std::uint32_t samples = 1) {
  GradientUpdate u;
  u.actor.assign(6, fill);
  u.critic.assign(4, -fill);
  u.client_id = client;
  u.round = 3;
  u.sample_count = samples;
  return u;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) !=
        std::bit_cast<std::uint64_t>(b[i]))
      return false;
  return true;
}

}  // namespace

TEST_SUITE("fed") {

TEST_CASE("participant count follows the ceiling rule with a floor of one") {
  FedConfig c;
  c.clients = 10;
  c.mu = 0.3;
  CHECK(c.participants() == 3);
  c.mu = 0.25;
  CHECK(c.participants() == 3);  // ceil(2.5)
  c.mu = 1.0;
  CHECK(c.participants() == 10);
  c.mu = 0.01;
  CHECK(c.participants() == 1);
  c.clients = 1;
  c.mu = 1.0;
  CHECK(c.participants() == 1);
}

TEST_CASE("configuration validation") {
  FedConfig c;
  CHECK_NOTHROW(c.validate());
  c.clients = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FedConfig{};
  c.mu = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.mu = 1.0001;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FedConfig{};
  c.local_epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FedConfig{};
  c.max_rounds = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FedConfig{};
  c.clients = 3;
  c.client_weights = {1.0, 2.0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.client_weights = {1.0, 0.0, 2.0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("client selection is sorted, distinct, and replayable") {
  FedConfig c;
  c.clients = 10;
  c.mu = 0.4;
  c.seed = 99;
  std::set<std::vector<int>> seen;
  for (int round = 0; round < 25; ++round) {
    const auto ids = select_clients(c, round);
    REQUIRE(ids.size() == 4u);
    CHECK(std::is_sorted(ids.begin(), ids.end()));
    CHECK(std::set<int>(ids.begin(), ids.end()).size() == ids.size());
    for (int id : ids) {
      CHECK(id >= 0);
      CHECK(id < 10);
    }
    CHECK(select_clients(c, round) == ids);  // replayable
    seen.insert(ids);
  }
  CHECK(seen.size() > 1);  // rounds draw different cohorts

  FedConfig other = c;
  other.seed = 100;
  bool any_diff = false;
  for (int round = 0; round < 25; ++round)
    any_diff = any_diff || select_clients(other, round) != select_clients(c, round);
  CHECK(any_diff);

  FedConfig solo;
  solo.clients = 1;
  CHECK(select_clients(solo, 7) == std::vector<int>{0});
}

TEST_CASE("client sampling seeds are stable and distinct per id") {
  FedConfig c;
  c.clients = 4;
  c.seed = 12;
  CHECK(client_rng_seed(c, 0) == client_rng_seed(c, 0));
  CHECK(client_rng_seed(c, 0) != client_rng_seed(c, 1));
  FedConfig d = c;
  d.seed = 13;
  CHECK(client_rng_seed(c, 2) != client_rng_seed(d, 2));
}

TEST_CASE("aggregation is a weighted mean") {
  const std::vector<GradientUpdate> updates = {make_update(0, 1.0, 5),
                                               make_update(1, 3.0, 7)};
  const std::vector<double> ones = {1.0, 1.0};

  GradientUpdate mean = fedavg(updates, ones);
  for (double v : mean.actor) CHECK(v == doctest::Approx(2.0));
  for (double v : mean.critic) CHECK(v == doctest::Approx(-2.0));
  CHECK(mean.sample_count == 12u);
  CHECK(mean.round == 3u);

  // Identical updates average to themselves under any weights.
  const std::vector<GradientUpdate> same = {make_update(0, 0.7),
                                            make_update(1, 0.7)};
  GradientUpdate s = fedavg(same, std::vector<double>{0.3, 1.9});
  for (double v : s.actor) CHECK(v == doctest::Approx(0.7));

  // Scaling every weight by a constant changes nothing.
  GradientUpdate w1 = fedavg(updates, std::vector<double>{1.0, 2.0});
  GradientUpdate w7 = fedavg(updates, std::vector<double>{7.0, 14.0});
  for (std::size_t i = 0; i < w1.actor.size(); ++i)
    CHECK(w1.actor[i] == doctest::Approx(w7.actor[i]).epsilon(1e-12));

  // Order of the updates does not matter.
  const std::vector<GradientUpdate> flipped = {updates[1], updates[0]};
  GradientUpdate rev = fedavg(flipped, std::vector<double>{2.0, 1.0});
  for (std::size_t i = 0; i < w1.actor.size(); ++i)
    CHECK(rev.actor[i] == doctest::Approx(w1.actor[i]).epsilon(1e-12));

  // An explicit denominator overrides the weight sum.
  GradientUpdate strict = fedavg(updates, ones, 4.0);
  for (double v : strict.actor) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("aggregation faults name the offending client") {
  std::vector<GradientUpdate> updates = {make_update(0, 1.0),
                                         make_update(7, 2.0)};
  updates[1].actor.pop_back();
  const std::vector<double> ones = {1.0, 1.0};
  CHECK_THROWS_WITH_AS(fedavg(updates, ones),
                       doctest::Contains("client 7"), ValidationError);

  updates[1] = make_update(7, 2.0);
  updates[1].critic[0] = std::nan("");
  CHECK_THROWS_WITH_AS(fedavg(updates, ones),
                       doctest::Contains("client 7"), ValidationError);

  CHECK_THROWS_AS(fedavg({}, {}), ValidationError);
  CHECK_THROWS_AS(fedavg(updates, std::vector<double>{1.0}), ValidationError);
  updates[1] = make_update(7, 2.0);
  CHECK_THROWS_AS(fedavg(updates, std::vector<double>{1.0, 0.0}),
                  ValidationError);
}

TEST_CASE("wire messages round-trip bit for bit") {
  WireMessage msg;
  msg.type = MsgType::global_model;
  msg.round = 0xDEADBEEF;
  msg.client = 41;
  msg.actor = {0.0, -0.0, 1.5, -2.25e300, 5e-324,
               std::numeric_limits<double>::infinity(), std::nan("")};
  msg.critic = {3.141592653589793};

  const auto frame = encode_message(msg);
  const WireMessage back = decode_message(frame);
  CHECK(back.type == MsgType::global_model);
  CHECK(back.round == msg.round);
  CHECK(back.client == msg.client);
  CHECK(bits_equal(back.actor, msg.actor));
  CHECK(bits_equal(back.critic, msg.critic));

  WireMessage empty;
  empty.type = MsgType::round_begin;
  const auto small = encode_message(empty);
  const WireMessage eb = decode_message(small);
  CHECK(eb.actor.empty());
  CHECK(eb.critic.empty());

  GradientUpdate u = make_update(6, 0.25, 9);
  const GradientUpdate ru = decode_update(encode_update(u));
  CHECK(ru.client_id == 6u);
  CHECK(ru.round == 3u);
  CHECK(bits_equal(ru.actor, u.actor));
  CHECK(bits_equal(ru.critic, u.critic));
  CHECK_THROWS_AS(decode_update(small), ProtocolError);  // wrong type
}

TEST_CASE("malformed frames are rejected") {
  WireMessage msg;
  msg.actor = {1.0, 2.0};
  auto frame = encode_message(msg);

  CHECK_THROWS_AS(decode_message(std::vector<std::uint8_t>{0, 0}),
                  ProtocolError);

  auto chopped = frame;
  chopped.pop_back();
  CHECK_THROWS_AS(decode_message(chopped), ProtocolError);

  auto padded = frame;
  padded.push_back(0);
  CHECK_THROWS_AS(decode_message(padded), ProtocolError);

  auto bad_version = frame;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_message(bad_version), ProtocolError);

  auto bad_type = frame;
  bad_type[5] = 77;
  CHECK_THROWS_AS(decode_message(bad_type), ProtocolError);

  // A header promising more than the 64 MB bound.
  std::vector<std::uint8_t> huge = {0xFF, 0xFF, 0xFF, 0xFF};
  CHECK_THROWS_AS(decode_message(huge), ProtocolError);

  // Array length says 100 doubles but the payload holds two.
  auto lying = frame;
  lying[14] = 0;
  lying[15] = 0;
  lying[16] = 0;
  lying[17] = 100;
  CHECK_THROWS_AS(decode_message(lying), ProtocolError);
}

TEST_CASE("frame reader survives arbitrary fragmentation") {
  WireMessage m1;
  m1.round = 1;
  m1.actor = {1.0, 2.0, 3.0};
  WireMessage m2;
  m2.round = 2;
  m2.type = MsgType::round_begin;
  const auto f1 = encode_message(m1);
  const auto f2 = encode_message(m2);

  std::vector<std::uint8_t> stream = f1;
  stream.insert(stream.end(), f2.begin(), f2.end());

  FrameReader reader;
  std::vector<std::vector<std::uint8_t>> frames;
  for (std::uint8_t b : stream) {
    reader.feed(std::vector<std::uint8_t>{b});
    while (auto f = reader.next_frame()) frames.push_back(*f);
  }
  REQUIRE(frames.size() == 2u);
  CHECK(frames[0] == f1);
  CHECK(frames[1] == f2);
  CHECK(decode_message(frames[0]).round == 1u);
  CHECK(decode_message(frames[1]).round == 2u);

  // Both frames in one feed drain in order.
  FrameReader bulk;
  bulk.feed(stream);
  CHECK(bulk.next_frame() == f1);
  CHECK(bulk.next_frame() == f2);
  CHECK(!bulk.next_frame().has_value());
}

TEST_CASE("local updates stop at episode boundaries and replay exactly") {
  FedConfig config;
  config.clients = 1;
  config.seed = 4;
  auto factory = [](int, int) { return fed_env(4, 150.0); };
  Hyperparams hy;
  hy.local_epochs = 16;
  const PolicyParams global = init_params(fed_arch(), 1);

  auto clients_a = make_clients(config, factory);
  auto clients_b = make_clients(config, factory);
  LocalResult a = local_update(clients_a[0], global, hy, 0);
  LocalResult b = local_update(clients_b[0], global, hy, 0);

  CHECK(a.steps == 4);  // the four-chunk episode ends before E=16
  CHECK(a.update.sample_count == 4u);
  CHECK(a.update.client_id == 0u);
  CHECK(a.update.round == 0u);
  CHECK(clients_a[0].iteration == 4u);
  CHECK(clients_a[0].env->done());
  CHECK(bits_equal(a.update.actor, b.update.actor));
  CHECK(bits_equal(a.update.critic, b.update.critic));
  CHECK(a.mean_reward == b.mean_reward);
  CHECK(a.critic_loss == b.critic_loss);
  CHECK(a.entropy == b.entropy);
  // Uniform fresh policy: entropy is ln(action_count).
  CHECK(a.entropy == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // The next call rebuilds an environment for episode 1 and trains again.
  LocalResult again = local_update(clients_a[0], global, hy, 1);
  CHECK(again.steps == 4);
  CHECK(clients_a[0].episode == 2);
  CHECK(clients_a[0].iteration == 8u);
}

TEST_CASE("a long episode is consumed E steps per call without resets") {
  FedConfig config;
  config.clients = 1;
  auto factory = [](int, int) { return fed_env(10, 150.0); };
  Hyperparams hy;
  hy.local_epochs = 3;
  const PolicyParams global = init_params(fed_arch(), 2);

  auto clients = make_clients(config, factory);
  LocalResult r1 = local_update(clients[0], global, hy, 0);
  CHECK(r1.steps == 3);
  CHECK(clients[0].env->state().chunks_remaining == 7);
  LocalResult r2 = local_update(clients[0], global, hy, 1);
  CHECK(r2.steps == 3);
  CHECK(clients[0].env->state().chunks_remaining == 4);
  CHECK(clients[0].episode == 1);  // still the first environment
}

TEST_CASE("rounds aggregate deterministically and advance the model") {
  FedConfig config;
  config.clients = 3;
  config.mu = 1.0;
  config.local_epochs = 4;
  config.seed = 21;
  // Eight chunks split evenly into E=4 windows, so every round runs full.
  auto factory = [](int client, int) {
    return fed_env(8, 100.0 + 40.0 * client);
  };
  Hyperparams hy;
  hy.local_epochs = 4;

  PolicyParams g1 = init_params(fed_arch(), 9);
  PolicyParams g2 = init_params(fed_arch(), 9);
  auto c1 = make_clients(config, factory);
  auto c2 = make_clients(config, factory);

  for (int round = 0; round < 3; ++round) {
    RoundMetrics m = run_round(g1, config, hy, c1, round);
    RoundMetrics n = run_round(g2, config, hy, c2, round);
    CHECK(m.round == round);
    CHECK(m.participants == 3);
    CHECK(m.failures == 0);
    CHECK(m.total_steps == 12);
    CHECK(m.beta == doctest::Approx(hy.beta_at(4.0 * round)));
    CHECK(m.mean_reward == n.mean_reward);
    CHECK(m.critic_loss == n.critic_loss);
  }
  CHECK(bits_equal(g1.actor, g2.actor));
  CHECK(bits_equal(g1.critic, g2.critic));
  CHECK(g1.iteration == 36u);  // 3 rounds x 3 clients x 4 steps
}

TEST_CASE("rounds tolerate partial failure but not a silent round") {
  FedConfig config;
  config.clients = 2;
  config.mu = 1.0;
  config.seed = 31;
  auto flaky = [](int client, int) {
    if (client == 1) throw SimError("client 1 offline");
    return fed_env(4, 120.0);
  };
  Hyperparams hy;
  hy.local_epochs = 4;
  PolicyParams global = init_params(fed_arch(), 3);
  const PolicyParams before = global;

  auto clients = make_clients(config, flaky);
  RoundMetrics m = run_round(global, config, hy, clients, 0);
  CHECK(m.participants == 1);
  CHECK(m.failures == 1);
  CHECK(!bits_equal(global.actor, before.actor));  // survivor still applied

  FedConfig dead = config;
  dead.clients = 1;
  auto always_down = [](int, int) -> std::unique_ptr<Environment> {
    throw SimError("offline");
  };
  auto dead_clients = make_clients(dead, always_down);
  PolicyParams g = init_params(fed_arch(), 3);
  CHECK_THROWS_AS(run_round(g, dead, hy, dead_clients, 0), Error);
}

TEST_CASE("round rejects a mismatched client roster") {
  FedConfig config;
  config.clients = 3;
  auto factory = [](int, int) { return fed_env(4, 100.0); };
  auto clients = make_clients(config, factory);
  config.clients = 2;  // roster no longer matches
  Hyperparams hy;
  PolicyParams global = init_params(fed_arch(), 1);
  CHECK_THROWS_AS(
      run_round(global, config, hy,
                std::span<ClientContext>(clients.data(), clients.size()), 0),
      ConfigError);
}

}  // TEST_SUITE
