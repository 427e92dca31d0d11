// pcstream: train, evaluate, and compare adaptive streaming policies on
// trace-driven tiled point cloud sessions.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pcs/errors.hpp"
#include "pcs/experiment.hpp"

namespace {

struct Overrides {
  std::string seed;  // parsed as text so "unset" is representable
  std::string out;
  std::string algo;
  std::string checkpoint;
  int rounds = -1;
  int clients = -1;
  double mu = -1.0;
  int local_epochs = -1;
  int episodes = -1;

  void add_common(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "override the spec seed");
    cmd->add_option("--out", out, "override the output directory");
    cmd->add_option("--algo", algo,
                    "override the algorithm (frl|rl|bb|quetra|rmpc|random)");
    cmd->add_option("--rounds", rounds, "override the federation round count");
    cmd->add_option("--clients", clients, "override the client count");
    cmd->add_option("--mu", mu, "override the participation fraction");
    cmd->add_option("--local-epochs", local_epochs,
                    "override steps per client per round");
    cmd->add_option("--episodes", episodes, "override the episode count");
    cmd->add_option("--checkpoint", checkpoint, "override the checkpoint path");
  }

  void apply(pcs::ExperimentSpec& spec) const {
    if (!seed.empty()) spec.seed = std::stoull(seed);
    if (!out.empty()) spec.out_dir = out;
    if (!algo.empty()) spec.algo = pcs::algo_from_string(algo);
    if (!checkpoint.empty()) spec.checkpoint = checkpoint;
    if (rounds >= 0) spec.fed.max_rounds = rounds;
    if (clients >= 0) spec.fed.clients = clients;
    if (mu >= 0.0) spec.fed.mu = mu;
    if (local_epochs >= 0) {
      spec.fed.local_epochs = local_epochs;
      spec.hyper.local_epochs = local_epochs;
    }
    if (episodes >= 0) spec.episodes = episodes;
    spec.fed.seed = spec.seed;
  }
};

void print_summary(const pcs::EvalSummary& s) {
  std::printf("algo               %s\n", s.algo.c_str());
  std::printf("episodes           %d (%d chunks)\n", s.episodes, s.chunks);
  std::printf("mean_qoe           %.6f\n", s.mean_qoe);
  std::printf("mean_level         %.6f\n", s.mean_level);
  std::printf("mean_psnr          %.6f\n", s.mean_psnr);
  std::printf("total_rebuffer_s   %.6f\n", s.total_rebuffer_s);
  std::printf("mean_bandwidth_mbps %.6f\n", s.mean_bandwidth_mbps);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trace-driven simulator for adaptive tiled point cloud streaming"};
  app.require_subcommand(1);

  std::string train_spec, eval_spec, compare_out;
  std::vector<std::string> compare_specs;
  Overrides train_over, eval_over, compare_over;

  CLI::App* train = app.add_subcommand(
      "train", "run federated training and write a checkpoint + curve");
  train->add_option("--spec", train_spec, "experiment spec (JSON)")->required();
  train_over.add_common(train);

  CLI::App* eval = app.add_subcommand(
      "eval", "replay evaluation episodes and write per-chunk logs + summary");
  eval->add_option("--spec", eval_spec, "experiment spec (JSON)")->required();
  eval_over.add_common(eval);

  CLI::App* compare = app.add_subcommand(
      "compare", "evaluate several specs on the same replay and tabulate");
  compare->add_option("--spec", compare_specs, "experiment specs (two or more)")
      ->required();
  compare->add_option("--out", compare_out, "path for the combined CSV");
  compare->add_option("--seed", compare_over.seed, "override every spec seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) {
      pcs::ExperimentSpec spec = pcs::load_experiment_spec(train_spec);
      train_over.apply(spec);
      const pcs::TrainResult r = pcs::train_experiment(spec);
      std::printf("trained %d rounds (%llu env steps)\n", r.rounds,
                  static_cast<unsigned long long>(r.params.iteration));
      if (!r.curve_path.empty()) {
        std::printf("curve      %s\n", r.curve_path.c_str());
        std::printf("checkpoint %s\n", r.checkpoint_path.c_str());
      }
      if (!r.metrics.empty()) {
        std::printf("final mean reward %.6f, critic loss %.6f\n",
                    r.metrics.back().mean_reward, r.metrics.back().critic_loss);
      }
    } else if (*eval) {
      pcs::ExperimentSpec spec = pcs::load_experiment_spec(eval_spec);
      eval_over.apply(spec);
      const pcs::EvalResult r = pcs::eval_experiment(spec);
      print_summary(r.summary);
      if (!r.summary_path.empty()) {
        std::printf("summary    %s\n", r.summary_path.c_str());
      }
    } else if (*compare) {
      std::vector<pcs::ExperimentSpec> specs;
      for (const std::string& path : compare_specs) {
        pcs::ExperimentSpec spec = pcs::load_experiment_spec(path);
        if (!compare_over.seed.empty()) {
          spec.seed = std::stoull(compare_over.seed);
          spec.fed.seed = spec.seed;
        }
        specs.push_back(std::move(spec));
      }
      const std::string table = pcs::compare_experiments(specs, compare_out);
      std::fputs(table.c_str(), stdout);
    }
  } catch (const pcs::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const pcs::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const pcs::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
