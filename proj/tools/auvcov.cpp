// Command line front end. All the real work lives in auvcov/harness.hpp;
// this file only maps flags onto the option structs.

#include <CLI11.hpp>

#include "auvcov/harness.hpp"
#include "auvcov/version.hpp"

namespace h = auvcov::harness;

namespace {

void add_common(CLI::App* cmd, h::TrainOptions& o) {
  cmd->add_option("--config", o.config_path, "config file (key=value lines)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides,
                  "override a config key, e.g. --set covert.epsilon=0.1");
  cmd->add_option("--seed", o.seeds, "seed(s); repeat for multi-seed runs");
  cmd->add_option("--out", o.out, "output root (default $AUVCOV_OUT or ./runs)");
  cmd->add_option("--episodes", o.episodes, "training episodes");
  cmd->add_option("--profile", o.profile, "parameter profile")
      ->check(CLI::IsMember({"desk", "paper", "none"}));
  cmd->add_option("--name", o.name, "run name (directory prefix)");
  cmd->add_flag("--quiet", o.quiet, "suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"covert multi-AUV exploration: training and evaluation"};
  app.set_version_flag("--version", auvcov::kVersion);
  app.require_subcommand(1);

  h::TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "train policies");
  add_common(train, train_opts);
  train->add_option("--checkpoint-every", train_opts.checkpoint_every,
                    "write checkpoint_ep<N>.txt every N episodes");
  train->add_flag("--resume", train_opts.resume,
                  "continue an existing run from its final checkpoint");

  h::EvalOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "evaluate a trained run");
  eval->add_option("--run", eval_opts.run, "trained run directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->add_option("--episodes", eval_opts.episodes, "evaluation episodes");
  eval->add_option("--seed", eval_opts.seed, "evaluation seed");
  eval->add_flag("--trace", eval_opts.trace, "write per-slice trace.csv");
  eval->add_flag("--sample", eval_opts.sample,
                 "sample the stochastic policy instead of taking the means");
  eval->add_flag("--quiet", eval_opts.quiet, "suppress output");

  h::SweepOptions sweep_opts;
  sweep_opts.base.name = "sweep";
  auto* sweep = app.add_subcommand(
      "sweep-epsilon", "train and evaluate across covertness budgets");
  add_common(sweep, sweep_opts.base);
  sweep->add_option("--epsilons", sweep_opts.epsilons,
                    "covertness levels to sweep");
  sweep->add_option("--eval-episodes", sweep_opts.eval_episodes,
                    "evaluation episodes per level");
  sweep->add_option("--eval-seed", sweep_opts.eval_seed, "evaluation seed");
  sweep->add_flag("--eval-only", sweep_opts.eval_only,
                  "reuse existing per-level runs, evaluate only");

  h::CompareOptions cmp_opts;
  auto* cmp = app.add_subcommand(
      "compare", "score trained, flat and random policies on shared episodes");
  cmp->add_option("--run", cmp_opts.run, "trained run directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  cmp->add_option("--eval-episodes", cmp_opts.eval_episodes,
                  "evaluation episodes per policy");
  cmp->add_option("--seed", cmp_opts.seed, "shared evaluation seed");
  cmp->add_flag("--quiet", cmp_opts.quiet, "suppress output");

  h::SmokeOptions smoke_opts;
  auto* smoke = app.add_subcommand("smoke", "fast end-to-end pipeline check");
  smoke->add_option("--out", smoke_opts.out, "output root");
  smoke->add_option("--seed", smoke_opts.seed, "seed");
  smoke->add_flag("--quiet", smoke_opts.quiet, "suppress output");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return h::cmd_train(train_opts);
  if (eval->parsed()) return h::cmd_eval(eval_opts);
  if (sweep->parsed()) return h::cmd_sweep_epsilon(sweep_opts);
  if (cmp->parsed()) return h::cmd_compare(cmp_opts);
  return h::cmd_smoke(smoke_opts);
}
