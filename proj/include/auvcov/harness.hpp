#pragma once
// Experiment plumbing: run directories, CSV export, and the five CLI
// commands (train / eval / sweep-epsilon / compare / smoke). Everything a
// run produces lands in one directory:
//
//   <out>/<name>-seed<S>/
//     config.kv            full snapshot, reparseable, pins the version
//     metrics.csv          one row per training episode
//     checkpoint_final.txt and optional checkpoint_ep<N>.txt
//     eval_summary.csv, eval_metrics.csv, trace.csv   (written by eval)
//
// The default output root is $AUVCOV_OUT, falling back to ./runs. Commands
// return process exit codes; they throw nothing across the boundary.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "envsim.hpp"
#include "hmappo.hpp"
#include "version.hpp"

namespace auvcov::harness {

namespace fs = std::filesystem;

inline fs::path out_root(const std::string& cli_value) {
  if (!cli_value.empty()) return cli_value;
  if (const char* env = std::getenv("AUVCOV_OUT"); env && *env)
    return env;
  return "runs";
}

inline fs::path run_dir(const fs::path& root, const std::string& name,
                        std::uint64_t seed) {
  return root / (name + "-seed" + std::to_string(seed));
}

inline std::string csv_num(double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

inline constexpr const char* kMetricsHeader =
    "episode,high_reward_avg,low_reward_avg,coverage,task_delay,efficiency,"
    "covert_fraction,completion_ratio";

inline void append_metrics_row(std::ostream& os,
                               const hmappo::EpisodeMetrics& m) {
  os << m.episode << ',' << csv_num(m.high_reward_avg) << ','
     << csv_num(m.low_reward_avg) << ',' << csv_num(m.coverage) << ','
     << csv_num(m.task_delay) << ',' << csv_num(m.efficiency) << ','
     << csv_num(m.covert_fraction) << ',' << csv_num(m.completion_ratio)
     << '\n';
}

inline void write_trace_csv(const fs::path& path,
                            const std::vector<envsim::TraceRow>& rows,
                            int n_auvs) {
  std::ofstream f(path);
  f << envsim::trace_csv_header(n_auvs) << '\n';
  for (const auto& r : rows) {
    f << r.slot << ',' << r.slice << ',' << csv_num(r.gamma_e) << ','
      << csv_num(r.kl) << ',' << r.covert;
    for (double v : r.auv_cols) f << ',' << csv_num(v);
    f << '\n';
  }
}

inline Config load_run_config(const fs::path& dir) {
  return load_config((dir / "config.kv").string());
}

inline hmappo::Policies load_run_policies(const fs::path& dir) {
  const fs::path ck = dir / "checkpoint_final.txt";
  std::ifstream f(ck);
  if (!f)
    throw std::runtime_error("missing checkpoint: " + ck.string());
  return hmappo::load_policies(f);
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value fragments
  std::vector<std::uint64_t> seeds{1};
  std::string out;               // output root; empty = $AUVCOV_OUT or ./runs
  std::string name = "run";
  std::string profile = "desk";
  int episodes = -1;             // <0: config/profile decides
  int checkpoint_every = -1;     // <0: config decides
  bool resume = false;
  bool quiet = false;
};

inline Config build_config(const TrainOptions& o, std::uint64_t seed) {
  ConfigBuilder b;
  if (!o.config_path.empty()) b.load_file(o.config_path);
  for (const auto& s : o.overrides) b.apply_override(s);
  if (o.episodes >= 0) b.set("train.episodes", std::to_string(o.episodes));
  if (o.checkpoint_every >= 0)
    b.set("train.checkpoint_every", std::to_string(o.checkpoint_every));
  b.set("train.seed", std::to_string(seed));
  b.set("world.seed", std::to_string(seed));
  b.apply_profile(o.profile);
  b.config().validate();
  return b.config();
}

inline void save_checkpoint_file(const hmappo::Trainer& t,
                                 const fs::path& path) {
  std::ofstream f(path);
  t.save_checkpoint(f);
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

// Trains cfg.train.episodes episodes into `dir` (fresh run: snapshot +
// metrics header). With `resume`, picks up from checkpoint_final.txt and
// appends; episode numbering continues.
inline hmappo::Trainer train_into(const Config& cfg, const fs::path& dir,
                                  bool resume, bool quiet) {
  fs::create_directories(dir);
  const fs::path metrics = dir / "metrics.csv";
  const fs::path final_ck = dir / "checkpoint_final.txt";

  hmappo::Trainer t(cfg.world, cfg.train);
  std::ofstream mf;
  if (resume) {
    std::ifstream ck(final_ck);
    if (!ck)
      throw std::runtime_error("missing checkpoint: " + final_ck.string());
    t.load_checkpoint(ck);
    mf.open(metrics, std::ios::app);
  } else {
    std::ofstream cf(dir / "config.kv");
    dump_config(cfg, cf);
    mf.open(metrics);
    mf << kMetricsHeader << '\n';
  }
  if (!mf) throw std::runtime_error("cannot write " + metrics.string());

  const int target = cfg.train.episodes;
  while (t.episodes_done() < target) {
    const auto em = t.run_episode();
    append_metrics_row(mf, em);
    mf.flush();
    if (cfg.train.checkpoint_every > 0 &&
        em.episode % cfg.train.checkpoint_every == 0)
      save_checkpoint_file(
          t, dir / ("checkpoint_ep" + std::to_string(em.episode) + ".txt"));
    if (!quiet && (em.episode % 25 == 0 || em.episode == target))
      std::cout << "  episode " << em.episode << "/" << target
                << "  high=" << em.high_reward_avg
                << "  low=" << em.low_reward_avg
                << "  covert=" << em.covert_fraction
                << "  completed=" << em.completion_ratio << std::endl;
  }
  save_checkpoint_file(t, final_ck);
  return t;
}

inline int cmd_train(const TrainOptions& o) {
  try {
    const fs::path root = out_root(o.out);
    for (const std::uint64_t seed : o.seeds) {
      const fs::path dir = run_dir(root, o.name, seed);
      Config cfg;
      if (o.resume) {
        cfg = load_run_config(dir);
        if (o.episodes >= 0) cfg.train.episodes = o.episodes;
      } else {
        cfg = build_config(o, seed);
      }
      if (!o.quiet)
        std::cout << "train seed " << seed << " -> " << dir.string()
                  << std::endl;
      train_into(cfg, dir, o.resume, o.quiet);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << std::endl;
    return 1;
  }
}

// ---------------------------------------------------------------------------

inline constexpr const char* kEvalHeader =
    "policy,episodes,high_reward_mean,high_reward_std,low_reward_mean,"
    "low_reward_std,coverage_mean,coverage_std,task_delay_mean,"
    "task_delay_std,efficiency_mean,efficiency_std,agg_efficiency_mean,"
    "agg_efficiency_std,covert_fraction_mean,covert_fraction_std,"
    "pooled_covert_fraction,completion_ratio_mean,completion_ratio_std,"
    "measured_kl_mean,measured_kl_std";

inline void append_eval_row(std::ostream& os, const std::string& label,
                            const hmappo::EvalSummary& s) {
  os << label << ',' << s.episodes << ',' << csv_num(s.high_reward.mean)
     << ',' << csv_num(s.high_reward.stddev) << ','
     << csv_num(s.low_reward.mean) << ',' << csv_num(s.low_reward.stddev)
     << ',' << csv_num(s.coverage.mean) << ',' << csv_num(s.coverage.stddev)
     << ',' << csv_num(s.task_delay.mean) << ','
     << csv_num(s.task_delay.stddev) << ',' << csv_num(s.efficiency.mean)
     << ',' << csv_num(s.efficiency.stddev) << ','
     << csv_num(s.agg_efficiency.mean) << ','
     << csv_num(s.agg_efficiency.stddev) << ','
     << csv_num(s.covert_fraction.mean) << ','
     << csv_num(s.covert_fraction.stddev) << ','
     << csv_num(s.pooled_covert_fraction()) << ','
     << csv_num(s.completion_ratio.mean) << ','
     << csv_num(s.completion_ratio.stddev) << ','
     << csv_num(s.measured_kl.mean) << ',' << csv_num(s.measured_kl.stddev)
     << '\n';
}

struct EvalOptions {
  std::string run;  // trained run directory
  int episodes = 100;
  std::uint64_t seed = 424242;
  bool trace = false;
  bool sample = false;  // default: deterministic mean-action rollouts
  bool quiet = false;
};

// Evaluation rolls out the mean actions (deterministic, what the policy has
// actually committed to). --sample rolls the stochastic policy instead, which
// reproduces the reward level of the training curves.
inline int cmd_eval(const EvalOptions& o) {
  try {
    const fs::path dir = o.run;
    const Config cfg = load_run_config(dir);
    const auto pol = load_run_policies(dir);

    const hmappo::HighPolicy high = o.sample
                                        ? hmappo::sampled_high(pol.central)
                                        : hmappo::greedy_high(pol.central);
    const hmappo::LowPolicy low = o.sample ? hmappo::sampled_low(pol.auv)
                                           : hmappo::greedy_low(pol.auv);
    std::vector<envsim::TraceRow> trace;
    std::vector<hmappo::EpisodeMetrics> per_episode;
    const auto summary =
        hmappo::evaluate(cfg.world, high, low, o.episodes, o.seed,
                         o.trace ? &trace : nullptr, &per_episode);

    {
      std::ofstream f(dir / "eval_summary.csv");
      f << kEvalHeader << '\n';
      append_eval_row(f, "hmappo", summary);
    }
    {
      std::ofstream f(dir / "eval_metrics.csv");
      f << kMetricsHeader << '\n';
      for (const auto& em : per_episode) append_metrics_row(f, em);
    }
    if (o.trace)
      write_trace_csv(dir / "trace.csv", trace, cfg.world.n_auvs);

    if (!o.quiet)
      std::cout << "eval " << o.episodes << " episodes:  efficiency="
                << summary.efficiency.mean
                << "  covert=" << summary.pooled_covert_fraction()
                << "  completed=" << summary.completion_ratio.mean
                << "  kl=" << summary.measured_kl.mean << std::endl;
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "eval: " << e.what() << std::endl;
    return 1;
  }
}

// ---------------------------------------------------------------------------

struct SweepOptions {
  TrainOptions base;                 // name defaults to "sweep"
  std::vector<double> epsilons{0.01, 0.05, 0.1, 0.2};
  int eval_episodes = 200;
  std::uint64_t eval_seed = 424242;
  bool eval_only = false;
};

struct SweepRow {
  double epsilon = 0.0;
  hmappo::EvalSummary summary;
};

inline std::string epsilon_tag(double eps) {
  std::ostringstream os;
  os << eps;
  return os.str();
}

inline int cmd_sweep_epsilon(const SweepOptions& o) {
  try {
    if (o.epsilons.size() < 2)
      throw std::runtime_error("invalid config: need at least two epsilons");
    const fs::path root = out_root(o.base.out);
    const std::uint64_t seed = o.base.seeds.front();
    const fs::path sweep_dir = run_dir(root, o.base.name, seed);
    fs::create_directories(sweep_dir);

    std::vector<SweepRow> rows;
    for (const double eps : o.epsilons) {
      const fs::path dir = sweep_dir / ("eps_" + epsilon_tag(eps));
      Config cfg;
      if (o.eval_only) {
        cfg = load_run_config(dir);  // throws if the run is missing
      } else {
        TrainOptions to = o.base;
        to.overrides.push_back("covert.epsilon=" + csv_num(eps));
        cfg = build_config(to, seed);
        if (!o.base.quiet)
          std::cout << "sweep eps=" << eps << " -> " << dir.string()
                    << std::endl;
        train_into(cfg, dir, false, o.base.quiet);
      }
      const auto pol = load_run_policies(dir);
      SweepRow row;
      row.epsilon = eps;
      row.summary = hmappo::evaluate(
          cfg.world, hmappo::greedy_high(pol.central),
          hmappo::greedy_low(pol.auv), o.eval_episodes, o.eval_seed);
      rows.push_back(row);
    }

    const fs::path table = sweep_dir / "sweep_epsilon.csv";
    std::ofstream f(table);
    f << "epsilon,kl_budget,eval_episodes,efficiency_mean,efficiency_std,"
         "agg_efficiency_mean,measured_kl_mean,measured_kl_std,"
         "covert_fraction_mean,covert_fraction_std,pooled_covert_fraction,"
         "completion_ratio_mean\n";
    for (const auto& r : rows) {
      const auto& s = r.summary;
      // The first two columns label the row, so the short form reads better
      // than 17 significant digits.
      f << epsilon_tag(r.epsilon) << ',' << epsilon_tag(2.0 * r.epsilon * r.epsilon)
        << ',' << s.episodes << ',' << csv_num(s.efficiency.mean) << ','
        << csv_num(s.efficiency.stddev) << ','
        << csv_num(s.agg_efficiency.mean) << ','
        << csv_num(s.measured_kl.mean) << ','
        << csv_num(s.measured_kl.stddev) << ','
        << csv_num(s.covert_fraction.mean) << ','
        << csv_num(s.covert_fraction.stddev) << ','
        << csv_num(s.pooled_covert_fraction()) << ','
        << csv_num(s.completion_ratio.mean) << '\n';
    }
    if (!o.base.quiet) {
      std::cout << "sweep table: " << table.string() << std::endl;
      for (const auto& r : rows)
        std::cout << "  eps=" << r.epsilon
                  << "  eta=" << r.summary.efficiency.mean
                  << "  kl=" << r.summary.measured_kl.mean
                  << "  covert=" << r.summary.pooled_covert_fraction()
                  << std::endl;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "sweep-epsilon: " << e.what() << std::endl;
    return 1;
  }
}

// ---------------------------------------------------------------------------

struct CompareOptions {
  std::string run;
  int eval_episodes = 200;
  std::uint64_t seed = 424242;
  bool quiet = false;
};

struct CompareRow {
  std::string policy;
  // The four axes: coverage per unit delay (episode aggregate), fraction of
  // delegated AUVs finishing in time, pooled covert-slice fraction, mean
  // per-slot efficiency.
  double cooperation_efficiency = 0.0;
  double completion_ratio = 0.0;
  double covertness = 0.0;
  double task_efficiency = 0.0;

  double axis(int i) const {
    switch (i) {
      case 0: return cooperation_efficiency;
      case 1: return completion_ratio;
      case 2: return covertness;
      default: return task_efficiency;
    }
  }
};

inline CompareRow make_compare_row(const std::string& label,
                                   const hmappo::EvalSummary& s) {
  CompareRow r;
  r.policy = label;
  r.cooperation_efficiency = s.agg_efficiency.mean;
  r.completion_ratio = s.completion_ratio.mean;
  r.covertness = s.pooled_covert_fraction();
  r.task_efficiency = s.efficiency.mean;
  return r;
}

inline int cmd_compare(const CompareOptions& o) {
  try {
    const fs::path dir = o.run;
    const Config cfg = load_run_config(dir);
    const auto pol = load_run_policies(dir);

    // Paired comparison: identical evaluation seed, so all three policies
    // see the same start states, tasks and currents.
    const auto full = hmappo::evaluate(
        cfg.world, hmappo::greedy_high(pol.central),
        hmappo::greedy_low(pol.auv), o.eval_episodes, o.seed);
    const auto flat = hmappo::evaluate(
        cfg.world, hmappo::all_on_high(), hmappo::greedy_low(pol.auv),
        o.eval_episodes, o.seed);
    const auto random = hmappo::evaluate(
        cfg.world, hmappo::random_high(), hmappo::random_low(cfg.world),
        o.eval_episodes, o.seed);

    std::vector<CompareRow> rows = {make_compare_row("hmappo", full),
                                    make_compare_row("all_on", flat),
                                    make_compare_row("random", random)};

    const char* header =
        "policy,cooperation_efficiency,task_completion_ratio,covertness,"
        "task_efficiency";
    {
      std::ofstream f(dir / "compare_raw.csv");
      f << header << '\n';
      for (const auto& r : rows)
        f << r.policy << ',' << csv_num(r.cooperation_efficiency) << ','
          << csv_num(r.completion_ratio) << ',' << csv_num(r.covertness)
          << ',' << csv_num(r.task_efficiency) << '\n';
    }
    {
      // Min-max across the three policies per axis; a degenerate axis
      // (identical scores) normalizes to 1 for everyone.
      std::ofstream f(dir / "compare.csv");
      f << header << '\n';
      for (const auto& r : rows) {
        f << r.policy;
        for (int a = 0; a < 4; ++a) {
          double lo = rows[0].axis(a), hi = rows[0].axis(a);
          for (const auto& q : rows) {
            lo = std::min(lo, q.axis(a));
            hi = std::max(hi, q.axis(a));
          }
          const double v =
              hi - lo > 0.0 ? (r.axis(a) - lo) / (hi - lo) : 1.0;
          f << ',' << csv_num(v);
        }
        f << '\n';
      }
    }
    if (!o.quiet)
      for (const auto& r : rows)
        std::cout << "  " << r.policy << "  coop=" << r.cooperation_efficiency
                  << "  completed=" << r.completion_ratio
                  << "  covert=" << r.covertness
                  << "  eff=" << r.task_efficiency << std::endl;
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "compare: " << e.what() << std::endl;
    return 1;
  }
}

// ---------------------------------------------------------------------------

struct SmokeOptions {
  std::string out;
  std::uint64_t seed = 1;
  bool quiet = false;
};

// End-to-end shakedown at toy scale: a short training run, an evaluation
// with trace export, and the cheap bookkeeping invariants. Exit 0 means the
// pipeline holds together.
inline int cmd_smoke(const SmokeOptions& o) {
  try {
    TrainOptions to;
    to.out = o.out;
    to.name = "smoke";
    to.seeds = {o.seed};
    to.quiet = true;
    to.overrides = {"world.slot_horizon=3", "world.slice_horizon=40",
                    "train.episodes=3",     "train.batch_auv=128",
                    "train.batch_central=4"};
    const Config cfg = build_config(to, o.seed);
    const fs::path dir = run_dir(out_root(o.out), to.name, o.seed);
    auto trainer = train_into(cfg, dir, false, true);

    if (trainer.episodes_done() != 3)
      throw std::runtime_error("smoke: wrong episode count");
    if (static_cast<int>(trainer.low_buffer().size()) >= cfg.train.batch_auv)
      throw std::runtime_error("smoke: low buffer not consumed");

    const auto pol = load_run_policies(dir);
    std::vector<envsim::TraceRow> trace;
    const auto summary =
        hmappo::evaluate(cfg.world, hmappo::greedy_high(pol.central),
                         hmappo::greedy_low(pol.auv), 2, o.seed, &trace);
    write_trace_csv(dir / "trace.csv", trace, cfg.world.n_auvs);

    // Covert flags must equal recomputation from the logged SNR.
    for (const auto& row : trace) {
      const bool want = acoustics::kl_divergence(row.gamma_e) <=
                        cfg.world.covert.kl_budget();
      if ((row.covert != 0) != want)
        throw std::runtime_error("smoke: trace covert flag mismatch");
    }
    if (summary.empty) throw std::runtime_error("smoke: empty eval");

    if (!o.quiet)
      std::cout << "smoke ok: " << dir.string() << "  (3 train episodes, "
                << trace.size() << " trace rows)" << std::endl;
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "smoke: " << e.what() << std::endl;
    return 1;
  }
}

}  // namespace auvcov::harness
