#include "pcs/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pcs/errors.hpp"
#include "pcs/rng.hpp"

namespace pcs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream labels for seed derivation; every consumer of randomness gets its
// own branch of the spec seed.
constexpr std::uint64_t kSeedMedia = 0x6d656469;
constexpr std::uint64_t kSeedParams = 0x70726d73;
constexpr std::uint64_t kSeedTrainBw = 0x74726277;
constexpr std::uint64_t kSeedTrainFov = 0x74726676;
constexpr std::uint64_t kSeedEvalBw = 0x65766277;
constexpr std::uint64_t kSeedEvalFov = 0x65766676;
constexpr std::uint64_t kSeedEvalPolicy = 0x65767270;
constexpr std::uint64_t kSeedEpisode = 0x65706973;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create " + p.parent_path().string());
  }
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void bad_key(const std::string& context, const std::string& key) {
  throw ConfigError(context + ": unknown key \"" + key + "\"");
}

void check_keys(const json& obj, const std::string& context,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) bad_key(context, it.key());
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double get_num(const json& obj, const char* key, double dflt,
               const std::string& context) {
  const json* v = find(obj, key);
  if (!v) return dflt;
  if (!v->is_number()) {
    throw ConfigError(context + "." + key + " must be a number");
  }
  return v->get<double>();
}

int get_int(const json& obj, const char* key, int dflt,
            const std::string& context) {
  const json* v = find(obj, key);
  if (!v) return dflt;
  if (!v->is_number_integer()) {
    throw ConfigError(context + "." + key + " must be an integer");
  }
  return v->get<int>();
}

bool get_bool(const json& obj, const char* key, bool dflt,
              const std::string& context) {
  const json* v = find(obj, key);
  if (!v) return dflt;
  if (!v->is_boolean()) {
    throw ConfigError(context + "." + key + " must be a boolean");
  }
  return v->get<bool>();
}

std::string get_str(const json& obj, const char* key, const std::string& dflt,
                    const std::string& context) {
  const json* v = find(obj, key);
  if (!v) return dflt;
  if (!v->is_string()) {
    throw ConfigError(context + "." + key + " must be a string");
  }
  return v->get<std::string>();
}

std::array<double, 3> get_vec3(const json& obj, const char* key,
                               std::array<double, 3> dflt,
                               const std::string& context) {
  const json* v = find(obj, key);
  if (!v) return dflt;
  if (!v->is_array() || v->size() != 3) {
    throw ConfigError(context + "." + key + " must be a 3-element array");
  }
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) {
    if (!(*v)[static_cast<std::size_t>(i)].is_number()) {
      throw ConfigError(context + "." + key + " must hold numbers");
    }
    out[static_cast<std::size_t>(i)] =
        (*v)[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

BwSynthModel parse_bw_model(const json& obj, const std::string& context) {
  check_keys(obj, context,
             {"mean_mbps", "volatility", "regime_switch_prob",
              "low_regime_factor", "interval_s"});
  BwSynthModel m;
  m.mean_mbps = get_num(obj, "mean_mbps", m.mean_mbps, context);
  m.volatility = get_num(obj, "volatility", m.volatility, context);
  m.regime_switch_prob =
      get_num(obj, "regime_switch_prob", m.regime_switch_prob, context);
  m.low_regime_factor =
      get_num(obj, "low_regime_factor", m.low_regime_factor, context);
  m.sample_interval_s = get_num(obj, "interval_s", m.sample_interval_s, context);
  return m;
}

json bw_model_to_json(const BwSynthModel& m) {
  return json{{"mean_mbps", m.mean_mbps},
              {"volatility", m.volatility},
              {"regime_switch_prob", m.regime_switch_prob},
              {"low_regime_factor", m.low_regime_factor},
              {"interval_s", m.sample_interval_s}};
}

// How long a generated trace has to be so the simulator never outruns it:
// the whole video plus slack for startup, stalls, and buffer sleeps.
double trace_duration(const TileManifest& manifest, double requested_s) {
  if (requested_s > 0.0) return requested_s;
  return manifest.video_duration_s() * 1.25 + 30.0;
}

}  // namespace

Algo algo_from_string(const std::string& name) {
  if (name == "frl") return Algo::frl;
  if (name == "rl") return Algo::rl;
  if (name == "bb") return Algo::bb;
  if (name == "quetra") return Algo::quetra;
  if (name == "rmpc") return Algo::rmpc;
  if (name == "random") return Algo::random_policy;
  throw ConfigError("unknown algorithm \"" + name +
                    "\" (expected frl|rl|bb|quetra|rmpc|random)");
}

const char* algo_to_string(Algo algo) {
  switch (algo) {
    case Algo::frl: return "frl";
    case Algo::rl: return "rl";
    case Algo::bb: return "bb";
    case Algo::quetra: return "quetra";
    case Algo::rmpc: return "rmpc";
    case Algo::random_policy: return "random";
  }
  throw ConfigError("invalid algorithm id");
}

bool algo_needs_checkpoint(Algo algo) {
  return algo == Algo::frl || algo == Algo::rl;
}

ExperimentSpec parse_experiment_spec(const std::string& json_text,
                                     const std::string& origin) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (!root.is_object()) throw ParseError(origin + ": spec must be an object");
  check_keys(root, "spec",
             {"algo", "seed", "out", "episodes", "checkpoint", "manifest",
              "bandwidth", "fov", "compute", "player", "frustum", "qoe_table",
              "fed", "hyper", "arch", "baseline"});

  ExperimentSpec spec;
  spec.algo = algo_from_string(get_str(root, "algo", "frl", "spec"));

  const json* seed = find(root, "seed");
  if (!seed) throw ConfigError(origin + ": \"seed\" is required");
  if (!seed->is_number_integer() ||
      (!seed->is_number_unsigned() && seed->get<std::int64_t>() < 0)) {
    throw ConfigError(origin + ": \"seed\" must be a non-negative integer");
  }
  spec.seed = seed->get<std::uint64_t>();

  spec.out_dir = get_str(root, "out", "", "spec");
  spec.episodes = get_int(root, "episodes", spec.episodes, "spec");
  if (spec.episodes < 1) throw ConfigError("spec.episodes must be >= 1");
  spec.checkpoint = get_str(root, "checkpoint", "", "spec");

  if (const json* m = find(root, "manifest")) {
    check_keys(*m, "manifest", {"path", "synthetic"});
    spec.manifest.path = get_str(*m, "path", "", "manifest");
    const json* syn = find(*m, "synthetic");
    if (!spec.manifest.path.empty() && syn) {
      throw ConfigError("manifest: give either path or synthetic, not both");
    }
    if (syn) {
      check_keys(*syn, "manifest.synthetic",
                 {"nx", "ny", "nz", "extent", "origin", "chunks", "levels",
                  "chunk_ms", "profile"});
      SyntheticManifestSpec& s = spec.manifest.synthetic;
      s.grid.nx = get_int(*syn, "nx", s.grid.nx, "manifest.synthetic");
      s.grid.ny = get_int(*syn, "ny", s.grid.ny, "manifest.synthetic");
      s.grid.nz = get_int(*syn, "nz", s.grid.nz, "manifest.synthetic");
      s.grid.tile_extent =
          get_vec3(*syn, "extent", s.grid.tile_extent, "manifest.synthetic");
      s.grid.origin =
          get_vec3(*syn, "origin", s.grid.origin, "manifest.synthetic");
      s.chunks = get_int(*syn, "chunks", s.chunks, "manifest.synthetic");
      s.levels = get_int(*syn, "levels", s.levels, "manifest.synthetic");
      s.chunk_duration_ms =
          get_num(*syn, "chunk_ms", s.chunk_duration_ms, "manifest.synthetic");
      if (const json* p = find(*syn, "profile")) {
        const std::string ctx = "manifest.synthetic.profile";
        check_keys(*p, ctx,
                   {"base_tile_bytes", "level_growth", "compression_ratio",
                    "psnr_base_db", "psnr_step_db", "decode_cost_base",
                    "size_jitter"});
        SyntheticMediaProfile& pr = s.profile;
        pr.base_tile_bytes = static_cast<std::int64_t>(
            get_num(*p, "base_tile_bytes",
                    static_cast<double>(pr.base_tile_bytes), ctx));
        pr.level_growth = get_num(*p, "level_growth", pr.level_growth, ctx);
        pr.compression_ratio =
            get_num(*p, "compression_ratio", pr.compression_ratio, ctx);
        pr.psnr_base_db = get_num(*p, "psnr_base_db", pr.psnr_base_db, ctx);
        pr.psnr_step_db = get_num(*p, "psnr_step_db", pr.psnr_step_db, ctx);
        pr.decode_cost_base =
            get_num(*p, "decode_cost_base", pr.decode_cost_base, ctx);
        pr.size_jitter = get_num(*p, "size_jitter", pr.size_jitter, ctx);
      }
    }
  }

  if (const json* b = find(root, "bandwidth")) {
    check_keys(*b, "bandwidth", {"path", "synthetic", "groups", "duration_s"});
    spec.bandwidth.path = get_str(*b, "path", "", "bandwidth");
    spec.bandwidth.duration_s =
        get_num(*b, "duration_s", spec.bandwidth.duration_s, "bandwidth");
    const json* syn = find(*b, "synthetic");
    const json* groups = find(*b, "groups");
    if (!spec.bandwidth.path.empty() && (syn || groups)) {
      throw ConfigError("bandwidth: path excludes synthetic/groups");
    }
    if (syn && groups) {
      throw ConfigError("bandwidth: give either synthetic or groups");
    }
    if (syn) spec.bandwidth.synthetic = parse_bw_model(*syn, "bandwidth.synthetic");
    if (groups) {
      if (!groups->is_array() || groups->empty()) {
        throw ConfigError("bandwidth.groups must be a non-empty array");
      }
      spec.bandwidth.use_groups = true;
      for (std::size_t i = 0; i < groups->size(); ++i) {
        spec.bandwidth.groups.push_back(parse_bw_model(
            (*groups)[i], "bandwidth.groups[" + std::to_string(i) + "]"));
      }
    }
  }

  if (const json* f = find(root, "fov")) {
    check_keys(*f, "fov", {"path", "synthetic", "duration_s"});
    spec.fov.path = get_str(*f, "path", "", "fov");
    spec.fov.duration_s = get_num(*f, "duration_s", spec.fov.duration_s, "fov");
    const json* syn = find(*f, "synthetic");
    if (!spec.fov.path.empty() && syn) {
      throw ConfigError("fov: give either path or synthetic, not both");
    }
    if (syn) {
      const std::string ctx = "fov.synthetic";
      check_keys(*syn, ctx,
                 {"center", "start_ypr", "pos_step_m", "ang_step_deg", "pull",
                  "interval_s"});
      FovSynthModel& m = spec.fov.synthetic;
      m.center = get_vec3(*syn, "center", m.center, ctx);
      m.start_ypr = get_vec3(*syn, "start_ypr", m.start_ypr, ctx);
      m.pos_step_m = get_num(*syn, "pos_step_m", m.pos_step_m, ctx);
      m.ang_step_deg = get_num(*syn, "ang_step_deg", m.ang_step_deg, ctx);
      m.pull = get_num(*syn, "pull", m.pull, ctx);
      m.sample_interval_s = get_num(*syn, "interval_s", m.sample_interval_s, ctx);
    }
  }

  if (const json* c = find(root, "compute")) {
    check_keys(*c, "compute", {"capacity", "schedule"});
    spec.compute.capacity =
        get_num(*c, "capacity", spec.compute.capacity, "compute");
    if (const json* sched = find(*c, "schedule")) {
      if (!sched->is_array()) {
        throw ConfigError("compute.schedule must be an array of [t_s, capacity]");
      }
      for (const json& row : *sched) {
        if (!row.is_array() || row.size() != 2 || !row[0].is_number() ||
            !row[1].is_number()) {
          throw ConfigError(
              "compute.schedule entries must be [t_s, capacity] pairs");
        }
        spec.compute.schedule.emplace_back(row[0].get<double>(),
                                           row[1].get<double>());
      }
    }
  }

  if (const json* p = find(root, "player")) {
    const std::string ctx = "player";
    check_keys(*p, ctx,
               {"buffer_capacity_ms", "startup_threshold_ms", "initial_bw_mbps",
                "ewma_smoothing", "ewma_window_s", "bw_history_len",
                "fov_window_len", "min_level"});
    PlayerConfig& pl = spec.player;
    pl.buffer_capacity_ms =
        get_num(*p, "buffer_capacity_ms", pl.buffer_capacity_ms, ctx);
    pl.startup_threshold_ms =
        get_num(*p, "startup_threshold_ms", pl.startup_threshold_ms, ctx);
    pl.initial_bw_mbps = get_num(*p, "initial_bw_mbps", pl.initial_bw_mbps, ctx);
    pl.ewma_smoothing = get_num(*p, "ewma_smoothing", pl.ewma_smoothing, ctx);
    pl.ewma_window_s = get_num(*p, "ewma_window_s", pl.ewma_window_s, ctx);
    pl.bw_history_len = get_int(*p, "bw_history_len", pl.bw_history_len, ctx);
    pl.fov_window_len = get_int(*p, "fov_window_len", pl.fov_window_len, ctx);
    pl.min_level = get_int(*p, "min_level", pl.min_level, ctx);
  }

  if (const json* f = find(root, "frustum")) {
    const std::string ctx = "frustum";
    check_keys(*f, ctx, {"hfov_deg", "vfov_deg", "near_m", "far_m"});
    spec.frustum.hfov_deg = get_num(*f, "hfov_deg", spec.frustum.hfov_deg, ctx);
    spec.frustum.vfov_deg = get_num(*f, "vfov_deg", spec.frustum.vfov_deg, ctx);
    spec.frustum.near_m = get_num(*f, "near_m", spec.frustum.near_m, ctx);
    spec.frustum.far_m = get_num(*f, "far_m", spec.frustum.far_m, ctx);
  }

  if (const json* q = find(root, "qoe_table")) {
    spec.qoe_table = parse_qoe_weights(q->dump());
  }

  if (const json* f = find(root, "fed")) {
    const std::string ctx = "fed";
    check_keys(*f, ctx,
               {"clients", "mu", "local_epochs", "rounds", "weights",
                "strict_denominator"});
    FedConfig& fd = spec.fed;
    fd.clients = get_int(*f, "clients", fd.clients, ctx);
    fd.mu = get_num(*f, "mu", fd.mu, ctx);
    fd.local_epochs = get_int(*f, "local_epochs", fd.local_epochs, ctx);
    fd.max_rounds = get_int(*f, "rounds", fd.max_rounds, ctx);
    fd.strict_denominator =
        get_bool(*f, "strict_denominator", fd.strict_denominator, ctx);
    if (const json* w = find(*f, "weights")) {
      if (!w->is_array()) throw ConfigError("fed.weights must be an array");
      for (const json& v : *w) {
        if (!v.is_number()) throw ConfigError("fed.weights must hold numbers");
        fd.client_weights.push_back(v.get<double>());
      }
    }
  }

  if (const json* h = find(root, "hyper")) {
    const std::string ctx = "hyper";
    check_keys(*h, ctx,
               {"discount", "lr_actor", "lr_critic", "entropy_start",
                "entropy_end", "entropy_decay_iters", "reward_scale"});
    Hyperparams& hy = spec.hyper;
    hy.discount = get_num(*h, "discount", hy.discount, ctx);
    hy.lr_actor = get_num(*h, "lr_actor", hy.lr_actor, ctx);
    hy.lr_critic = get_num(*h, "lr_critic", hy.lr_critic, ctx);
    hy.entropy_start = get_num(*h, "entropy_start", hy.entropy_start, ctx);
    hy.entropy_end = get_num(*h, "entropy_end", hy.entropy_end, ctx);
    hy.entropy_decay_iters =
        get_num(*h, "entropy_decay_iters", hy.entropy_decay_iters, ctx);
    hy.reward_scale = get_num(*h, "reward_scale", hy.reward_scale, ctx);
  }

  if (const json* a = find(root, "arch")) {
    const std::string ctx = "arch";
    check_keys(*a, ctx, {"conv_filters", "conv_width", "hidden"});
    spec.conv_filters = get_int(*a, "conv_filters", spec.conv_filters, ctx);
    spec.conv_width = get_int(*a, "conv_width", spec.conv_width, ctx);
    spec.hidden = get_int(*a, "hidden", spec.hidden, ctx);
  }

  if (const json* b = find(root, "baseline")) {
    const std::string ctx = "baseline";
    check_keys(*b, ctx,
               {"reservoir_s", "cushion_s", "mpc_horizon", "error_window"});
    BaselineConfig& bc = spec.baseline;
    bc.reservoir_s = get_num(*b, "reservoir_s", bc.reservoir_s, ctx);
    bc.cushion_s = get_num(*b, "cushion_s", bc.cushion_s, ctx);
    bc.mpc_horizon = get_int(*b, "mpc_horizon", bc.mpc_horizon, ctx);
    bc.error_window = get_int(*b, "error_window", bc.error_window, ctx);
  }

  // Keep the rollout window consistent with the federation schedule.
  spec.hyper.local_epochs = spec.fed.local_epochs;
  spec.fed.seed = spec.seed;
  return spec;
}

ExperimentSpec load_experiment_spec(const std::string& path) {
  return parse_experiment_spec(read_text_file(path), path);
}

std::string serialize_experiment_spec(const ExperimentSpec& spec) {
  json root;
  root["algo"] = algo_to_string(spec.algo);
  root["seed"] = spec.seed;
  root["out"] = spec.out_dir;
  root["episodes"] = spec.episodes;
  root["checkpoint"] = spec.checkpoint;

  json manifest;
  if (!spec.manifest.path.empty()) {
    manifest["path"] = spec.manifest.path;
  } else {
    const SyntheticManifestSpec& s = spec.manifest.synthetic;
    manifest["synthetic"] = json{
        {"nx", s.grid.nx},
        {"ny", s.grid.ny},
        {"nz", s.grid.nz},
        {"extent", s.grid.tile_extent},
        {"origin", s.grid.origin},
        {"chunks", s.chunks},
        {"levels", s.levels},
        {"chunk_ms", s.chunk_duration_ms},
        {"profile",
         json{{"base_tile_bytes", s.profile.base_tile_bytes},
              {"level_growth", s.profile.level_growth},
              {"compression_ratio", s.profile.compression_ratio},
              {"psnr_base_db", s.profile.psnr_base_db},
              {"psnr_step_db", s.profile.psnr_step_db},
              {"decode_cost_base", s.profile.decode_cost_base},
              {"size_jitter", s.profile.size_jitter}}}};
  }
  root["manifest"] = manifest;

  json bandwidth;
  bandwidth["duration_s"] = spec.bandwidth.duration_s;
  if (!spec.bandwidth.path.empty()) {
    bandwidth["path"] = spec.bandwidth.path;
  } else if (spec.bandwidth.use_groups) {
    json groups = json::array();
    for (const BwSynthModel& m : spec.bandwidth.groups) {
      groups.push_back(bw_model_to_json(m));
    }
    bandwidth["groups"] = groups;
  } else {
    bandwidth["synthetic"] = bw_model_to_json(spec.bandwidth.synthetic);
  }
  root["bandwidth"] = bandwidth;

  json fov;
  fov["duration_s"] = spec.fov.duration_s;
  if (!spec.fov.path.empty()) {
    fov["path"] = spec.fov.path;
  } else {
    const FovSynthModel& m = spec.fov.synthetic;
    fov["synthetic"] = json{{"center", m.center},
                            {"start_ypr", m.start_ypr},
                            {"pos_step_m", m.pos_step_m},
                            {"ang_step_deg", m.ang_step_deg},
                            {"pull", m.pull},
                            {"interval_s", m.sample_interval_s}};
  }
  root["fov"] = fov;

  json schedule = json::array();
  for (const auto& [t, cap] : spec.compute.schedule) {
    schedule.push_back(json::array({t, cap}));
  }
  root["compute"] = json{{"capacity", spec.compute.capacity},
                         {"schedule", schedule}};

  root["player"] = json{{"buffer_capacity_ms", spec.player.buffer_capacity_ms},
                        {"startup_threshold_ms", spec.player.startup_threshold_ms},
                        {"initial_bw_mbps", spec.player.initial_bw_mbps},
                        {"ewma_smoothing", spec.player.ewma_smoothing},
                        {"ewma_window_s", spec.player.ewma_window_s},
                        {"bw_history_len", spec.player.bw_history_len},
                        {"fov_window_len", spec.player.fov_window_len},
                        {"min_level", spec.player.min_level}};

  root["frustum"] = json{{"hfov_deg", spec.frustum.hfov_deg},
                         {"vfov_deg", spec.frustum.vfov_deg},
                         {"near_m", spec.frustum.near_m},
                         {"far_m", spec.frustum.far_m}};

  json qoe = json::array();
  for (const QoeWeights& w : spec.qoe_table) {
    qoe.push_back(json{{"distance_m", w.distance_m},
                       {"alpha", w.alpha},
                       {"beta", w.beta},
                       {"gamma", w.gamma},
                       {"delta", w.delta},
                       {"epsilon", w.epsilon}});
  }
  root["qoe_table"] = qoe;

  root["fed"] = json{{"clients", spec.fed.clients},
                     {"mu", spec.fed.mu},
                     {"local_epochs", spec.fed.local_epochs},
                     {"rounds", spec.fed.max_rounds},
                     {"weights", spec.fed.client_weights},
                     {"strict_denominator", spec.fed.strict_denominator}};

  root["hyper"] = json{{"discount", spec.hyper.discount},
                       {"lr_actor", spec.hyper.lr_actor},
                       {"lr_critic", spec.hyper.lr_critic},
                       {"entropy_start", spec.hyper.entropy_start},
                       {"entropy_end", spec.hyper.entropy_end},
                       {"entropy_decay_iters", spec.hyper.entropy_decay_iters},
                       {"reward_scale", spec.hyper.reward_scale}};

  root["arch"] = json{{"conv_filters", spec.conv_filters},
                      {"conv_width", spec.conv_width},
                      {"hidden", spec.hidden}};

  root["baseline"] = json{{"reservoir_s", spec.baseline.reservoir_s},
                          {"cushion_s", spec.baseline.cushion_s},
                          {"mpc_horizon", spec.baseline.mpc_horizon},
                          {"error_window", spec.baseline.error_window}};
  return root.dump();
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string spec_hash(const ExperimentSpec& spec) {
  return hex16(fnv1a64(serialize_experiment_spec(spec)));
}

std::string replay_hash(const ExperimentSpec& spec) {
  // Only the pieces that decide what an evaluation episode replays.
  json full = json::parse(serialize_experiment_spec(spec));
  json sub;
  for (const char* key : {"manifest", "bandwidth", "fov", "compute", "player",
                          "frustum", "qoe_table", "seed", "episodes"}) {
    sub[key] = full.at(key);
  }
  return hex16(fnv1a64(sub.dump()));
}

TileManifest build_manifest(const ExperimentSpec& spec) {
  if (!spec.manifest.path.empty()) {
    TileManifest m = parse_manifest(read_text_file(spec.manifest.path));
    return m;
  }
  const SyntheticManifestSpec& s = spec.manifest.synthetic;
  TileGrid grid = s.grid;
  TileManifest m = generate_synthetic_manifest(
      derive_seed(spec.seed, kSeedMedia), grid, s.chunks, s.levels, s.profile);
  m.chunk_duration_ms = s.chunk_duration_ms;
  return m;
}

namespace {

BandwidthTrace bandwidth_for(const ExperimentSpec& spec,
                             const TileManifest& manifest, int group_index,
                             std::uint64_t seed) {
  if (!spec.bandwidth.path.empty()) {
    return load_bandwidth_trace(spec.bandwidth.path);
  }
  const BwSynthModel& model =
      spec.bandwidth.use_groups
          ? spec.bandwidth.groups[static_cast<std::size_t>(group_index) %
                                  spec.bandwidth.groups.size()]
          : spec.bandwidth.synthetic;
  return generate_synthetic_bandwidth(
      seed, model, trace_duration(manifest, spec.bandwidth.duration_s));
}

FovTrace fov_for(const ExperimentSpec& spec, const TileManifest& manifest,
                 std::uint64_t seed) {
  if (!spec.fov.path.empty()) return load_fov_trace(spec.fov.path);
  return generate_synthetic_fov(
      seed, spec.fov.synthetic,
      trace_duration(manifest, spec.fov.duration_s));
}

ComputeBudgetTrace compute_for(const ExperimentSpec& spec) {
  ComputeBudgetTrace t;
  t.capacity = spec.compute.capacity;
  t.schedule = spec.compute.schedule;
  validate_compute_budget(t);
  return t;
}

std::unique_ptr<Environment> make_env(const ExperimentSpec& spec,
                                      const TileManifest& manifest,
                                      int group_index, std::uint64_t bw_seed,
                                      std::uint64_t fov_seed) {
  return std::make_unique<Environment>(
      manifest, bandwidth_for(spec, manifest, group_index, bw_seed),
      fov_for(spec, manifest, fov_seed), compute_for(spec), spec.player,
      spec.frustum, spec.qoe_table);
}

}  // namespace

std::unique_ptr<Environment> make_train_env(const ExperimentSpec& spec,
                                            const TileManifest& manifest,
                                            int client, int episode) {
  const std::uint64_t cid = static_cast<std::uint64_t>(client);
  const std::uint64_t eid = static_cast<std::uint64_t>(episode);
  const std::uint64_t bw_seed =
      derive_seed(derive_seed(spec.seed, kSeedTrainBw, cid), kSeedEpisode, eid);
  const std::uint64_t fov_seed =
      derive_seed(derive_seed(spec.seed, kSeedTrainFov, cid), kSeedEpisode, eid);
  return make_env(spec, manifest, client, bw_seed, fov_seed);
}

std::unique_ptr<Environment> make_eval_env(const ExperimentSpec& spec,
                                           const TileManifest& manifest,
                                           int episode) {
  const std::uint64_t eid = static_cast<std::uint64_t>(episode);
  return make_env(spec, manifest, episode,
                  derive_seed(spec.seed, kSeedEvalBw, eid),
                  derive_seed(spec.seed, kSeedEvalFov, eid));
}

ArchConfig arch_for(const ExperimentSpec& spec, const TileManifest& manifest) {
  ArchConfig arch;
  arch.bw_len = spec.player.bw_history_len;
  arch.action_count = 2 * manifest.level_count;
  arch.conv_filters = spec.conv_filters;
  arch.conv_width = spec.conv_width;
  arch.hidden = spec.hidden;
  arch.validate();
  return arch;
}

int greedy_action(const PolicyParams& params, std::span<const double> features) {
  const std::vector<double> probs = forward_policy(params, features);
  int best = 0;
  for (int i = 1; i < static_cast<int>(probs.size()); ++i) {
    if (probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) {
      best = i;
    }
  }
  return best;
}

namespace {

class GreedyPolicy final : public EvalPolicy {
 public:
  explicit GreedyPolicy(PolicyParams params) : params_(std::move(params)) {}
  int choose(const Environment& env) override {
    return greedy_action(params_, env.features());
  }

 private:
  PolicyParams params_;
};

class RandomPolicy final : public EvalPolicy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  int choose(const Environment& env) override {
    return static_cast<int>(
        rng_.uniform_int(static_cast<std::uint64_t>(env.action_count())));
  }

 private:
  Rng rng_;
};

class BufferPolicy final : public EvalPolicy {
 public:
  explicit BufferPolicy(BaselineConfig config) : config_(std::move(config)) {}
  int choose(const Environment& env) override {
    return bb_select(env.state(), config_);
  }

 private:
  BaselineConfig config_;
};

class QueuePolicy final : public EvalPolicy {
 public:
  explicit QueuePolicy(BaselineConfig config) : config_(std::move(config)) {}
  int choose(const Environment& env) override {
    return quetra_select(env.state(), config_);
  }

 private:
  BaselineConfig config_;
};

class LookaheadPolicy final : public EvalPolicy {
 public:
  explicit LookaheadPolicy(BaselineConfig config) : config_(std::move(config)) {}
  void begin_episode(const Environment& env) override {
    (void)env;
    history_.clear();
    last_prediction_ = 0.0;
  }
  int choose(const Environment& env) override {
    last_prediction_ = env.state().predicted_bw_mbps;
    return rmpc_select(env.state(), config_, history_);
  }
  void observe(const StepOutcome& outcome) override {
    history_.push_back({last_prediction_, outcome.throughput_mbps});
    const std::size_t keep = static_cast<std::size_t>(config_.error_window);
    if (history_.size() > keep) {
      history_.erase(history_.begin(),
                     history_.end() - static_cast<std::ptrdiff_t>(keep));
    }
  }

 private:
  BaselineConfig config_;
  std::vector<BwErrorSample> history_;
  double last_prediction_ = 0.0;
};

BaselineConfig baseline_config_for(const ExperimentSpec& spec,
                                   const TileManifest& manifest) {
  BaselineConfig config = spec.baseline;
  config.chunk_duration_ms = manifest.chunk_duration_ms;
  config.buffer_capacity_ms = spec.player.buffer_capacity_ms;

  // The lookahead scorer wants a per-level estimate of the in-view PSNR sum.
  // Average the manifest PSNR per level and scale by a rough visible-tile
  // count (a quarter of the grid; the frustum sees one side of the volume).
  const double expected_visible =
      std::max(1.0, manifest.grid.tile_count() / 4.0);
  config.psnr_per_level.assign(static_cast<std::size_t>(manifest.level_count),
                               0.0);
  for (int l = 1; l <= manifest.level_count; ++l) {
    double sum = 0.0;
    int n = 0;
    for (int tile = 0; tile < manifest.grid.tile_count(); ++tile) {
      for (int chunk = 0; chunk < manifest.chunk_count; ++chunk) {
        sum += manifest.variant(tile, chunk, l).psnr_db;
        ++n;
      }
    }
    config.psnr_per_level[static_cast<std::size_t>(l - 1)] =
        sum / n * expected_visible;
  }

  // Score with the weight row for the nominal viewing distance: the gap
  // between the viewer path's anchor and the grid centre.
  std::array<double, 3> eye = spec.fov.synthetic.center;
  if (!spec.fov.path.empty()) {
    eye = load_fov_trace(spec.fov.path).sample_at(0.0).pos;
  }
  const std::array<double, 3> mid = manifest.grid.center();
  const double dist = std::sqrt((eye[0] - mid[0]) * (eye[0] - mid[0]) +
                                (eye[1] - mid[1]) * (eye[1] - mid[1]) +
                                (eye[2] - mid[2]) * (eye[2] - mid[2]));
  config.weights = spec.qoe_table.empty()
                       ? weights_for_distance(std::max(dist, 1e-9))
                       : weights_for_distance(std::max(dist, 1e-9),
                                              spec.qoe_table);
  return config;
}

PolicyParams load_params_for_eval(const ExperimentSpec& spec,
                                  const TileManifest& manifest) {
  if (spec.checkpoint.empty()) {
    throw ConfigError(std::string("algorithm \"") + algo_to_string(spec.algo) +
                      "\" needs a checkpoint for evaluation");
  }
  PolicyParams params = load_checkpoint(read_text_file(spec.checkpoint));
  const ArchConfig expect = arch_for(spec, manifest);
  if (params.arch.action_count != expect.action_count ||
      params.arch.bw_len != expect.bw_len) {
    throw ConfigError("checkpoint architecture does not match this spec: "
                      "checkpoint expects " +
                      std::to_string(params.arch.action_count) +
                      " actions over " + std::to_string(params.arch.bw_len) +
                      " bandwidth samples, spec needs " +
                      std::to_string(expect.action_count) + " over " +
                      std::to_string(expect.bw_len));
  }
  return params;
}

}  // namespace

std::unique_ptr<EvalPolicy> make_eval_policy(const ExperimentSpec& spec,
                                             const TileManifest& manifest) {
  switch (spec.algo) {
    case Algo::frl:
    case Algo::rl:
      return std::make_unique<GreedyPolicy>(load_params_for_eval(spec, manifest));
    case Algo::random_policy:
      return std::make_unique<RandomPolicy>(
          derive_seed(spec.seed, kSeedEvalPolicy));
    case Algo::bb:
      return std::make_unique<BufferPolicy>(baseline_config_for(spec, manifest));
    case Algo::quetra:
      return std::make_unique<QueuePolicy>(baseline_config_for(spec, manifest));
    case Algo::rmpc:
      return std::make_unique<LookaheadPolicy>(
          baseline_config_for(spec, manifest));
  }
  throw ConfigError("invalid algorithm id");
}

TrainResult train_experiment(const ExperimentSpec& spec) {
  if (spec.algo != Algo::frl && spec.algo != Algo::rl) {
    throw ConfigError(std::string("algorithm \"") + algo_to_string(spec.algo) +
                      "\" is not trainable");
  }
  const TileManifest manifest = build_manifest(spec);
  const ArchConfig arch = arch_for(spec, manifest);

  FedConfig fed = spec.fed;
  if (spec.algo == Algo::rl) {
    // Plain RL is the same loop with a single always-selected client.
    fed.clients = 1;
    fed.mu = 1.0;
    fed.client_weights.clear();
  }
  fed.validate();

  std::vector<ClientContext> clients = make_clients(
      fed, [&spec, &manifest](int client, int episode) {
        return make_train_env(spec, manifest, client, episode);
      });

  TrainResult result;
  result.params = init_params(arch, derive_seed(spec.seed, kSeedParams));

  const std::string hash = spec_hash(spec);
  std::ofstream curve;
  if (!spec.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(spec.out_dir, ec);
    if (ec) throw IoError("cannot create " + spec.out_dir);
    result.curve_path = (fs::path(spec.out_dir) / "training_curve.csv").string();
    curve.open(result.curve_path, std::ios::binary);
    if (!curve) throw IoError("cannot open " + result.curve_path);
    curve << "# spec_hash=" << hash << "\n";
    curve << "round,participants,failures,steps,mean_reward,critic_loss,"
             "entropy,beta\n";
  }

  for (int round = 0; round < fed.max_rounds; ++round) {
    RoundMetrics m = run_round(result.params, fed, spec.hyper,
                               std::span<ClientContext>(clients), round);
    if (curve.is_open()) {
      curve << m.round << ',' << m.participants << ',' << m.failures << ','
            << m.total_steps << ',' << fmt_g(m.mean_reward) << ','
            << fmt_g(m.critic_loss) << ',' << fmt_g(m.entropy) << ','
            << fmt_g(m.beta) << "\n";
      curve.flush();
      if (!curve) throw IoError("write failed: " + result.curve_path);
    }
    result.metrics.push_back(m);
  }
  result.rounds = fed.max_rounds;

  if (!spec.out_dir.empty()) {
    result.checkpoint_path =
        (fs::path(spec.out_dir) / "checkpoint.json").string();
    write_text_file(result.checkpoint_path,
                    save_checkpoint(result.params, hash));
  }
  return result;
}

EvalResult eval_experiment(const ExperimentSpec& spec) {
  const TileManifest manifest = build_manifest(spec);
  std::unique_ptr<EvalPolicy> policy = make_eval_policy(spec, manifest);
  const std::string hash = spec_hash(spec);

  EvalResult result;
  double qoe_sum = 0.0, level_sum = 0.0, psnr_sum = 0.0;
  double rebuffer = 0.0, bytes = 0.0, wall = 0.0;
  int chunks = 0;

  for (int e = 0; e < spec.episodes; ++e) {
    std::unique_ptr<Environment> env = make_eval_env(spec, manifest, e);
    env->reset();
    policy->begin_episode(*env);

    std::ofstream log;
    if (!spec.out_dir.empty()) {
      std::error_code ec;
      fs::create_directories(spec.out_dir, ec);
      if (ec) throw IoError("cannot create " + spec.out_dir);
      const std::string path =
          (fs::path(spec.out_dir) / ("episode_" + std::to_string(e) + ".csv"))
              .string();
      log.open(path, std::ios::binary);
      if (!log) throw IoError("cannot open " + path);
      log << "# spec_hash=" << hash << "\n" << episode_csv_header();
      result.episode_csv_paths.push_back(path);
    }

    EvalEpisodeMetrics em;
    em.episode = e;
    while (!env->done()) {
      const int action = policy->choose(*env);
      const StepOutcome out = env->step(action);
      policy->observe(out);
      if (log.is_open()) {
        append_episode_row(log, out, manifest.level_count);
        if (!log) throw IoError("episode log write failed");
      }
      em.chunks += 1;
      em.qoe_sum += out.qoe;
      em.level_sum += out.chunk.level;
      em.psnr_sum += out.chunk.fov_psnr_sum_db;
      em.rebuffer_s += out.chunk.rebuffer_s;
      em.bytes += static_cast<double>(out.bytes);
    }
    env->drain_remaining();
    em.wall_clock_s = env->wall_clock_s();

    qoe_sum += em.qoe_sum;
    level_sum += em.level_sum;
    psnr_sum += em.psnr_sum;
    rebuffer += em.rebuffer_s;
    bytes += em.bytes;
    wall += em.wall_clock_s;
    chunks += em.chunks;
    result.episodes.push_back(em);
  }

  EvalSummary& s = result.summary;
  s.algo = algo_to_string(spec.algo);
  s.episodes = spec.episodes;
  s.chunks = chunks;
  s.mean_qoe = chunks ? qoe_sum / chunks : 0.0;
  s.mean_level = chunks ? level_sum / chunks : 0.0;
  s.mean_psnr = chunks ? psnr_sum / chunks : 0.0;
  s.total_rebuffer_s = rebuffer;
  s.mean_bandwidth_mbps = wall > 0.0 ? bytes * 8.0 / 1e6 / wall : 0.0;

  if (!spec.out_dir.empty()) {
    nlohmann::ordered_json doc;
    doc["version"] = 1;
    doc["spec_hash"] = hash;
    doc["replay_hash"] = replay_hash(spec);
    doc["algo"] = s.algo;
    doc["seed"] = spec.seed;
    doc["episodes"] = s.episodes;
    doc["chunks"] = s.chunks;
    doc["mean_qoe"] = s.mean_qoe;
    doc["mean_level"] = s.mean_level;
    doc["mean_psnr"] = s.mean_psnr;
    doc["total_rebuffer_s"] = s.total_rebuffer_s;
    doc["mean_bandwidth_mbps"] = s.mean_bandwidth_mbps;
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    for (const EvalEpisodeMetrics& em : result.episodes) {
      per.push_back(nlohmann::ordered_json{
          {"episode", em.episode},
          {"chunks", em.chunks},
          {"mean_qoe", em.mean_qoe()},
          {"rebuffer_s", em.rebuffer_s},
          {"wall_clock_s", em.wall_clock_s},
          {"bytes", em.bytes}});
    }
    doc["per_episode"] = per;
    result.summary_path = (fs::path(spec.out_dir) / "summary.json").string();
    write_text_file(result.summary_path, doc.dump(2) + "\n");
  }
  return result;
}

std::string compare_experiments(const std::vector<ExperimentSpec>& specs,
                                const std::string& out_csv) {
  if (specs.size() < 2) {
    throw ConfigError("compare needs at least two specs");
  }
  const std::string shared = replay_hash(specs[0]);
  for (std::size_t i = 1; i < specs.size(); ++i) {
    if (replay_hash(specs[i]) != shared) {
      throw ConfigError(
          "compare specs must share media, traces, player, seed and episode "
          "count; spec " +
          std::to_string(i) + " replays a different environment");
    }
  }

  std::ostringstream csv;
  csv << "# spec_hash=" << shared << "\n";
  csv << "algo,mean_qoe,mean_level,mean_psnr,total_rebuffer_s,"
         "mean_bandwidth_mbps\n";
  for (const ExperimentSpec& spec : specs) {
    const EvalResult r = eval_experiment(spec);
    const EvalSummary& s = r.summary;
    csv << s.algo << ',' << fmt_g(s.mean_qoe) << ',' << fmt_g(s.mean_level)
        << ',' << fmt_g(s.mean_psnr) << ',' << fmt_g(s.total_rebuffer_s) << ','
        << fmt_g(s.mean_bandwidth_mbps) << "\n";
  }
  const std::string text = csv.str();
  if (!out_csv.empty()) write_text_file(out_csv, text);
  return text;
}

}  // namespace pcs
