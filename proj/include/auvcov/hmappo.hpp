#pragma once
// Hierarchical multi-agent PPO on the dual-timescale environment.
//
// Two learners share one machinery:
//   high level   Bernoulli delegation policy + critic on the central state,
//                one transition per slot
//   low level    tanh-squashed Gaussian control policy (parameter-shared
//                across AUVs by default) + centralized critic on the
//                zero-padded concatenation of every AUV's observation
//                (CTDE: that critic exists only during training)
//
// Both use GAE(lambda), the clipped surrogate with gradients taken through
// the unclipped branch only, advantage normalization per update, an entropy
// bonus, global gradient-norm clipping, and Adam. Rollout buffers fill until
// their batch threshold and are cleared by the update that consumes them.
//
// Buffer layout matters for GAE: transitions are pushed one agent-sequence
// at a time (each sequence ends with done = 1), so a flat scan with cuts at
// done reconstructs every sequence. The high-level buffer may end mid
// episode; the stored next_value of the tail transition is the bootstrap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "envsim.hpp"
#include "neural.hpp"
#include "rng.hpp"
#include "version.hpp"

namespace auvcov::hmappo {

using Eigen::VectorXd;
using neural::AdamConfig;
using neural::AdamState;
using neural::BernoulliPolicy;
using neural::GaussianPolicy;
using neural::Mlp;

struct TrainConfig {
  int episodes = 2000;
  double lr_actor = 3e-5;
  double lr_critic = 5e-5;
  double discount = 0.99;
  double clip = 0.2;
  double gae_lambda = 0.95;
  int batch_auv = 512;      // low-level buffer threshold
  int batch_central = 16;   // high-level buffer threshold
  int epochs = 4;           // passes over a batch per update
  int minibatch = 256;
  double entropy_coef = 0.01;
  double grad_clip = 0.5;   // global l2 norm; 0 disables
  // Critic networks regress returns / value_scale. Slot returns run from a
  // few tens positive (covert bonuses) to minus a hundred or so (deficit
  // overshoot at a fast battery crossing); the scale keeps regression
  // targets near unit range while GAE still runs on raw rewards and raw
  // (rescaled) values.
  double value_scale = 100.0;
  double std_floor = 1e-3;
  bool shared_actor = true;
  int hidden1 = 64;
  int hidden2 = 64;
  int checkpoint_every = 0;  // episodes; 0 = final checkpoint only
  std::uint64_t seed = 1;

  std::vector<int> hidden() const {
    std::vector<int> h;
    if (hidden1 > 0) h.push_back(hidden1);
    if (hidden2 > 0) h.push_back(hidden2);
    return h;
  }

  void validate() const {
    if (episodes < 0) throw std::domain_error("TrainConfig: bad episodes");
    if (lr_actor <= 0.0 || lr_critic <= 0.0)
      throw std::domain_error("TrainConfig: learning rates must be positive");
    if (discount < 0.0 || discount > 1.0)
      throw std::domain_error("TrainConfig: discount outside [0, 1]");
    if (clip <= 0.0 || clip >= 1.0)
      throw std::domain_error("TrainConfig: clip outside (0, 1)");
    if (gae_lambda < 0.0 || gae_lambda > 1.0)
      throw std::domain_error("TrainConfig: lambda outside [0, 1]");
    if (batch_auv < 1 || batch_central < 1 || epochs < 1 || minibatch < 1)
      throw std::domain_error("TrainConfig: bad batch geometry");
    if (entropy_coef < 0.0 || grad_clip < 0.0 || std_floor <= 0.0)
      throw std::domain_error("TrainConfig: bad regularizer");
    if (value_scale <= 0.0)
      throw std::domain_error("TrainConfig: value_scale must be positive");
    if (hidden1 < 0 || hidden2 < 0 || (hidden1 == 0 && hidden2 == 0))
      throw std::domain_error("TrainConfig: need a hidden layer");
  }
};

// ---------------------------------------------------------------------------

struct Transition {
  VectorXd obs;
  VectorXd global;     // low level only: padded team observation
  VectorXd presquash;  // low level only: raw Gaussian draw
  std::vector<int> bits;  // high level only
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;       // critic at behavior time
  double next_value = 0.0;  // critic on the successor, 0 past a terminal
  bool done = false;
  int agent = 0;

  void save(std::ostream& os) const {
    os << "tr " << agent << ' ' << (done ? 1 : 0) << ' ';
    neural::detail::write_scalar(os, log_prob);
    os << ' ';
    neural::detail::write_scalar(os, reward);
    os << ' ';
    neural::detail::write_scalar(os, value);
    os << ' ';
    neural::detail::write_scalar(os, next_value);
    os << '\n';
    neural::detail::write_vector(os, obs);
    neural::detail::write_vector(os, global);
    neural::detail::write_vector(os, presquash);
    os << bits.size();
    for (int b : bits) os << ' ' << b;
    os << '\n';
  }

  void load(std::istream& is) {
    neural::detail::expect_token(is, "tr");
    int d = 0;
    is >> agent >> d >> log_prob >> reward >> value >> next_value;
    if (!is) throw std::runtime_error("checkpoint: bad transition");
    done = d != 0;
    obs = neural::detail::read_vector(is);
    global = neural::detail::read_vector(is);
    presquash = neural::detail::read_vector(is);
    std::size_t nb = 0;
    is >> nb;
    bits.assign(nb, 0);
    for (auto& b : bits) is >> b;
    if (!is) throw std::runtime_error("checkpoint: bad transition bits");
  }
};

struct RolloutBuffer {
  std::vector<Transition> data;

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  void clear() { data.clear(); }
  void push(Transition t) { data.push_back(std::move(t)); }

  void save(std::ostream& os) const {
    os << "buffer " << data.size() << '\n';
    for (const auto& t : data) t.save(os);
  }
  void load(std::istream& is) {
    neural::detail::expect_token(is, "buffer");
    std::size_t n = 0;
    is >> n;
    if (!is) throw std::runtime_error("checkpoint: bad buffer size");
    data.assign(n, Transition{});
    for (auto& t : data) t.load(is);
  }
};

// ---------------------------------------------------------------------------

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantage + value, the critic target
};

// Generalized advantage estimation over a flat array that may contain
// several sequences; done[i] = 1 cuts the recursion. `bootstrap_value` is
// the critic's estimate past the final entry, used only when the tail is
// truncated (done[n-1] = 0).
inline GaeResult compute_gae(std::span<const double> rewards,
                             std::span<const double> values,
                             std::span<const int> dones,
                             double bootstrap_value, double discount,
                             double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw std::invalid_argument("compute_gae: size mismatch");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const bool terminal = dones[i] != 0;
    const double next_v =
        terminal ? 0.0 : (i + 1 < n ? values[i + 1] : bootstrap_value);
    const double delta = rewards[i] + discount * next_v - values[i];
    running = terminal ? delta : delta + discount * lambda * running;
    out.advantages[i] = running;
    out.returns[i] = running + values[i];
  }
  return out;
}

// Clipped PPO surrogate for one sample. `grad_coef` is d(loss)/d(logp_new):
// zero whenever the clipped branch is active and smaller, so no gradient
// leaks through a clipped sample.
struct Surrogate {
  double loss = 0.0;
  double grad_coef = 0.0;
  bool clipped = false;
};

inline Surrogate clipped_surrogate(double ratio, double advantage,
                                   double clip) {
  const double unclipped = ratio * advantage;
  const double clipped =
      std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage;
  Surrogate s;
  s.loss = -std::min(unclipped, clipped);
  s.clipped = std::abs(ratio - 1.0) > clip;
  s.grad_coef = unclipped <= clipped ? -advantage * ratio : 0.0;
  return s;
}

namespace detail {

inline void normalize(std::vector<double>& v) {
  if (v.empty()) return;
  const double mean =
      std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  for (double& x : v) x = (x - mean) / (sd + 1e-8);
}

inline void shuffle(std::vector<int>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.below(i)]);
}

inline double clip_grad_norm(Mlp::Grads& g, VectorXd* extra,
                             double max_norm) {
  double sq = g.squared_norm();
  if (extra) sq += extra->squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    g.scale(s);
    if (extra) *extra *= s;
  }
  return norm;
}

}  // namespace detail

struct UpdateStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  int samples = 0;  // buffer size consumed
};

// ---------------------------------------------------------------------------

// The delegated-control actors: one shared policy by default, or one per
// AUV. Optimizer states travel with the policies.
struct AuvActors {
  bool shared = true;
  std::vector<GaussianPolicy> actors;
  std::vector<AdamState> opts;

  int actor_index(int agent) const {
    return shared ? 0 : agent;
  }
  GaussianPolicy& for_agent(int agent) { return actors[actor_index(agent)]; }
  const GaussianPolicy& for_agent(int agent) const {
    return actors[actor_index(agent)];
  }

  void save(std::ostream& os) const {
    os << "auv_actors " << (shared ? 1 : 0) << ' ' << actors.size() << '\n';
    for (std::size_t i = 0; i < actors.size(); ++i) {
      actors[i].save(os);
      opts[i].save(os);
    }
  }
  void load(std::istream& is) {
    neural::detail::expect_token(is, "auv_actors");
    int sh = 0;
    std::size_t n = 0;
    is >> sh >> n;
    if (!is || n == 0) throw std::runtime_error("checkpoint: bad actors");
    shared = sh != 0;
    actors.assign(n, GaussianPolicy{});
    opts.assign(n, AdamState{});
    for (std::size_t i = 0; i < n; ++i) {
      actors[i].load(is);
      opts[i].load(is, actors[i].net);
    }
  }
};

// Zero-padded team observation for the centralized low-level critic: every
// AUV's 12 features at its own offset, zeros where an AUV is not delegated
// this slot, plus the two time fractions (slice within slot, slot within
// episode). Actors never see time, but the critic needs it: the depletion
// penalty accrues per slice, so the return from a state depends strongly on
// how much of the slot is left.
inline VectorXd global_features(const std::vector<envsim::LowLevelObs>& obs,
                                const envsim::WorldConfig& cfg,
                                double slice_frac, double slot_frac) {
  VectorXd g = VectorXd::Zero(envsim::LowLevelObs::kDim * cfg.n_auvs + 2);
  for (const auto& o : obs)
    g.segment(o.auv * envsim::LowLevelObs::kDim, envsim::LowLevelObs::kDim) =
        o.features(cfg);
  g[envsim::LowLevelObs::kDim * cfg.n_auvs] = slice_frac;
  g[envsim::LowLevelObs::kDim * cfg.n_auvs + 1] = slot_frac;
  return g;
}

// High-level critic input: the actor's state plus the slot fraction.
inline VectorXd high_critic_features(const VectorXd& state,
                                     double slot_frac) {
  VectorXd g(state.size() + 1);
  g.head(state.size()) = state;
  g[state.size()] = slot_frac;
  return g;
}

// ---------------------------------------------------------------------------

// One PPO update of the high-level pair. The actor reads Transition::obs;
// the critic reads Transition::global (the same state plus centralized
// extras such as the slot fraction). Clears the buffer.
inline UpdateStats ppo_update(BernoulliPolicy& actor, AdamState& actor_opt,
                              Mlp& critic, AdamState& critic_opt,
                              RolloutBuffer& buffer, const TrainConfig& cfg,
                              Rng& rng) {
  const int n = static_cast<int>(buffer.size());
  if (n == 0) throw std::logic_error("ppo_update: empty buffer");

  std::vector<double> rewards(n), values(n);
  std::vector<int> dones(n);
  for (int i = 0; i < n; ++i) {
    rewards[i] = buffer.data[i].reward;
    values[i] = buffer.data[i].value;
    dones[i] = buffer.data[i].done ? 1 : 0;
  }
  auto gae = compute_gae(rewards, values, dones,
                         buffer.data.back().next_value, cfg.discount,
                         cfg.gae_lambda);
  detail::normalize(gae.advantages);

  UpdateStats st;
  st.samples = n;
  double processed = 0.0;
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::shuffle(idx, rng);
    for (int start = 0; start < n; start += cfg.minibatch) {
      const int m = std::min(cfg.minibatch, n - start);
      Mlp::Grads ga = actor.net.zero_grads();
      Mlp::Grads gc = critic.zero_grads();
      double closs = 0.0;
      for (int j = 0; j < m; ++j) {
        const Transition& t = buffer.data[idx[start + j]];
        const double adv = gae.advantages[idx[start + j]];
        const double ret = gae.returns[idx[start + j]];

        const double logp = actor.log_prob(t.obs, t.bits);
        const double ratio = std::exp(logp - t.log_prob);
        const Surrogate s = clipped_surrogate(ratio, adv, cfg.clip);
        if (s.grad_coef != 0.0)
          actor.log_prob_backward(t.obs, t.bits, s.grad_coef, ga);
        st.entropy += actor.entropy_backward(t.obs, -cfg.entropy_coef, ga);
        st.actor_loss += s.loss;
        st.clip_fraction += s.clipped ? 1.0 : 0.0;
        st.approx_kl += t.log_prob - logp;

        Mlp::Cache cache;
        const double v = critic.forward(t.global, cache)[0];
        const double dv = v - ret / cfg.value_scale;
        closs += 0.5 * dv * dv;
        critic.backward(cache, VectorXd::Constant(1, dv), gc);
      }
      const double inv = 1.0 / static_cast<double>(m);
      ga.scale(inv);
      gc.scale(inv);
      detail::clip_grad_norm(ga, nullptr, cfg.grad_clip);
      detail::clip_grad_norm(gc, nullptr, cfg.grad_clip);
      actor_opt.step(actor.net, ga);
      critic_opt.step(critic, gc);
      st.critic_loss += closs;
      processed += m;
    }
  }
  st.actor_loss /= processed;
  st.critic_loss /= processed;
  st.entropy /= processed;
  st.clip_fraction /= processed;
  st.approx_kl /= processed;
  buffer.clear();
  return st;
}

// One PPO update of the low-level actors against the centralized critic,
// which reads Transition::global. With a single delegated AUV and its
// observation padded into the global vector this is exactly ppo_update on
// that AUV. Clears the buffer.
inline UpdateStats mappo_update(AuvActors& actors, Mlp& critic,
                                AdamState& critic_opt, RolloutBuffer& buffer,
                                const TrainConfig& cfg, Rng& rng) {
  const int n = static_cast<int>(buffer.size());
  if (n == 0) throw std::logic_error("mappo_update: empty buffer");

  std::vector<double> rewards(n), values(n);
  std::vector<int> dones(n);
  for (int i = 0; i < n; ++i) {
    rewards[i] = buffer.data[i].reward;
    values[i] = buffer.data[i].value;
    dones[i] = buffer.data[i].done ? 1 : 0;
  }
  auto gae = compute_gae(rewards, values, dones,
                         buffer.data.back().next_value, cfg.discount,
                         cfg.gae_lambda);
  detail::normalize(gae.advantages);

  const std::size_t na = actors.actors.size();
  UpdateStats st;
  st.samples = n;
  double processed = 0.0;
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::shuffle(idx, rng);
    for (int start = 0; start < n; start += cfg.minibatch) {
      const int m = std::min(cfg.minibatch, n - start);
      std::vector<Mlp::Grads> ga(na);
      std::vector<VectorXd> gls(na);
      std::vector<int> count(na, 0);
      for (std::size_t a = 0; a < na; ++a) {
        ga[a] = actors.actors[a].net.zero_grads();
        gls[a] = VectorXd::Zero(actors.actors[a].log_std.size());
      }
      Mlp::Grads gc = critic.zero_grads();
      double closs = 0.0;

      for (int j = 0; j < m; ++j) {
        const Transition& t = buffer.data[idx[start + j]];
        const double adv = gae.advantages[idx[start + j]];
        const double ret = gae.returns[idx[start + j]];
        const int a = actors.actor_index(t.agent);
        GaussianPolicy& actor = actors.actors[a];

        const double logp = actor.log_prob(t.obs, t.presquash);
        const double ratio = std::exp(logp - t.log_prob);
        const Surrogate s = clipped_surrogate(ratio, adv, cfg.clip);
        if (s.grad_coef != 0.0)
          actor.log_prob_backward(t.obs, t.presquash, s.grad_coef, ga[a],
                                  gls[a]);
        actor.entropy_backward(-cfg.entropy_coef, gls[a]);
        ++count[a];
        st.entropy += actor.entropy();
        st.actor_loss += s.loss;
        st.clip_fraction += s.clipped ? 1.0 : 0.0;
        st.approx_kl += t.log_prob - logp;

        Mlp::Cache cache;
        const double v = critic.forward(t.global, cache)[0];
        const double dv = v - ret / cfg.value_scale;
        closs += 0.5 * dv * dv;
        critic.backward(cache, VectorXd::Constant(1, dv), gc);
      }

      for (std::size_t a = 0; a < na; ++a) {
        if (count[a] == 0) continue;
        const double inv = 1.0 / static_cast<double>(count[a]);
        ga[a].scale(inv);
        gls[a] *= inv;
        detail::clip_grad_norm(ga[a], &gls[a], cfg.grad_clip);
        actors.opts[a].step(actors.actors[a].net, ga[a],
                            actors.actors[a].log_std, gls[a]);
        actors.actors[a].apply_log_std_ceiling();
      }
      const double inv = 1.0 / static_cast<double>(m);
      gc.scale(inv);
      detail::clip_grad_norm(gc, nullptr, cfg.grad_clip);
      critic_opt.step(critic, gc);
      st.critic_loss += closs;
      processed += m;
    }
  }
  st.actor_loss /= processed;
  st.critic_loss /= processed;
  st.entropy /= processed;
  st.clip_fraction /= processed;
  st.approx_kl /= processed;
  buffer.clear();
  return st;
}

// ---------------------------------------------------------------------------

// One row of the training metrics CSV.
struct EpisodeMetrics {
  int episode = 0;
  double high_reward_avg = 0.0;
  double low_reward_avg = 0.0;
  double coverage = 0.0;
  double task_delay = 0.0;
  double efficiency = 0.0;
  double covert_fraction = 0.0;
  double completion_ratio = 0.0;
};

class Trainer {
 public:
  Trainer(envsim::WorldConfig world, TrainConfig cfg)
      : world_(std::move(world)), cfg_(cfg), env_(world_) {
    world_.validate();
    cfg_.validate();
    Rng init(mix_seed(cfg_.seed, kInitStream));
    const int n = world_.n_auvs;

    std::vector<int> high_actor_w{4 * n};
    std::vector<int> high_critic_w{4 * n + 1};
    std::vector<int> low_actor_w{envsim::LowLevelObs::kDim};
    std::vector<int> low_critic_w{envsim::LowLevelObs::kDim * n + 2};
    for (int h : cfg_.hidden()) {
      high_actor_w.push_back(h);
      high_critic_w.push_back(h);
      low_actor_w.push_back(h);
      low_critic_w.push_back(h);
    }
    high_actor_w.push_back(n);
    high_critic_w.push_back(1);
    low_actor_w.push_back(4);
    low_critic_w.push_back(1);

    central_actor_ = BernoulliPolicy(high_actor_w, init);
    central_critic_ = Mlp(high_critic_w, init);

    VectorXd lo(4), hi(4);
    lo << world_.power_min, -world_.speed_max, -world_.speed_max,
        -world_.speed_max;
    hi << world_.power_max, world_.speed_max, world_.speed_max,
        world_.speed_max;
    actors_.shared = cfg_.shared_actor;
    const int n_actors = cfg_.shared_actor ? 1 : n;
    for (int i = 0; i < n_actors; ++i)
      actors_.actors.emplace_back(low_actor_w, lo, hi, init, cfg_.std_floor);
    for (auto& p : actors_.actors) {
      // The policy's wide default start saturates the squash in this box:
      // nearly every velocity draw is full thrust, which empties a battery
      // inside three slices and buries the rest of the reward under deficit
      // penalties. Start near hover (pre-squash sigma 0.2, roughly 1 m/s per
      // axis) and bias transmit power toward the quiet end of the band so
      // exploration stays in the survivable part of the action box.
      p.log_std.setConstant(std::log(0.2));
      p.log_std[0] = std::log(0.5);
      p.net.biases().back()[0] = -2.0;
    }
    low_critic_ = Mlp(low_critic_w, init);

    const AdamConfig a{cfg_.lr_actor};
    const AdamConfig c{cfg_.lr_critic};
    central_actor_opt_ = AdamState(central_actor_.net, a);
    central_critic_opt_ = AdamState(central_critic_, c);
    for (auto& p : actors_.actors) {
      actors_.opts.emplace_back(p.net, a);
      actors_.opts.back().attach_extra(p.log_std.size());
    }
    low_critic_opt_ = AdamState(low_critic_, c);

    act_rng_ = Rng(mix_seed(cfg_.seed, kActStream));
    upd_rng_ = Rng(mix_seed(cfg_.seed, kUpdateStream));
  }

  const envsim::WorldConfig& world() const { return world_; }
  const TrainConfig& train_config() const { return cfg_; }
  int episodes_done() const { return episode_; }
  const std::vector<EpisodeMetrics>& history() const { return history_; }
  const BernoulliPolicy& central_actor() const { return central_actor_; }
  const Mlp& central_critic() const { return central_critic_; }
  const AuvActors& auv_actors() const { return actors_; }
  const Mlp& low_critic() const { return low_critic_; }
  const RolloutBuffer& low_buffer() const { return low_buffer_; }
  const RolloutBuffer& high_buffer() const { return high_buffer_; }
  const UpdateStats& last_low_update() const { return last_low_; }
  const UpdateStats& last_high_update() const { return last_high_; }

  EpisodeMetrics run_episode() {
    env_.reset(mix_seed(cfg_.seed, kEnvStream + static_cast<std::uint64_t>(
                                                    episode_)));
    VectorXd sfeat = env_.state().features(world_);

    EpisodeMetrics em;
    em.episode = episode_ + 1;
    int covert = 0, comm = 0, completed = 0, selected = 0;

    struct Step {
      VectorXd obs;
      VectorXd presquash;
      double log_prob;
      double reward;
      double value;
      VectorXd global;
    };

    for (int slot = 0; slot < world_.slot_horizon; ++slot) {
      const double slot_frac =
          static_cast<double>(slot) / world_.slot_horizon;
      const auto hs = central_actor_.sample(sfeat, act_rng_);
      const VectorXd hglob = high_critic_features(sfeat, slot_frac);
      const double v_high =
          cfg_.value_scale * central_critic_.forward(hglob)[0];
      auto obs = env_.begin_slot(envsim::HighLevelAction{hs.bits});
      const int team = static_cast<int>(obs.size());

      std::vector<std::vector<Step>> traj(team);
      while (true) {
        const double slice_frac =
            static_cast<double>(env_.slices_this_slot()) /
            world_.slice_horizon;
        const VectorXd glob =
            global_features(obs, world_, slice_frac, slot_frac);
        const double v_low = cfg_.value_scale * low_critic_.forward(glob)[0];
        std::vector<envsim::LowLevelAction> actions(team);
        std::vector<Step> now(team);
        for (int k = 0; k < team; ++k) {
          const VectorXd f = obs[k].features(world_);
          const auto s =
              actors_.for_agent(obs[k].auv).sample(f, act_rng_);
          actions[k] = {s.action[0], {s.action[1], s.action[2], s.action[3]}};
          now[k] = {f, s.presquash, s.log_prob, 0.0, v_low, glob};
        }
        // A dead AUV still submits actions (the interface is uniform) but
        // they move nothing, so those samples carry no policy lesson, only
        // the deficit penalty. Keeping them floods the batch with huge
        // action-independent advantages that thrash the shared trunk. The
        // slice that crosses into debt is alive at action time and stays:
        // it closes the segment, so dying costs its overshoot penalty plus
        // all bootstrapped future value.
        std::vector<char> alive(team);
        for (int k = 0; k < team; ++k) alive[k] = obs[k].energy > 0.0;
        const auto res = env_.low_step(actions);
        for (int k = 0; k < team; ++k) {
          if (!alive[k]) continue;
          now[k].reward = res.rewards[k];
          traj[k].push_back(std::move(now[k]));
        }
        if (res.done) break;
        obs = res.obs;
      }

      const auto slot_res = env_.end_slot();
      const auto& sm = slot_res.summary;

      // Per-agent sequences, contiguous, each terminated.
      for (int k = 0; k < team; ++k) {
        const int agent = env_.delegated()[k];
        for (std::size_t i = 0; i < traj[k].size(); ++i) {
          Transition t;
          t.obs = std::move(traj[k][i].obs);
          t.global = std::move(traj[k][i].global);
          t.presquash = std::move(traj[k][i].presquash);
          t.log_prob = traj[k][i].log_prob;
          t.reward = traj[k][i].reward;
          t.value = traj[k][i].value;
          t.done = i + 1 == traj[k].size();
          t.next_value = t.done ? 0.0 : traj[k][i + 1].value;
          t.agent = agent;
          low_buffer_.push(std::move(t));
        }
      }
      if (static_cast<int>(low_buffer_.size()) >= cfg_.batch_auv)
        last_low_ = mappo_update(actors_, low_critic_, low_critic_opt_,
                                 low_buffer_, cfg_, upd_rng_);

      const VectorXd sfeat_next = slot_res.next_state.features(world_);
      Transition ht;
      ht.obs = sfeat;
      ht.global = hglob;
      ht.bits = hs.bits;
      ht.log_prob = hs.log_prob;
      ht.reward = slot_res.reward;
      ht.value = v_high;
      ht.done = slot_res.episode_done;
      ht.next_value =
          ht.done ? 0.0
                  : cfg_.value_scale *
                        central_critic_.forward(high_critic_features(
                            sfeat_next,
                            static_cast<double>(slot + 1) /
                                world_.slot_horizon))[0];
      high_buffer_.push(std::move(ht));
      if (static_cast<int>(high_buffer_.size()) >= cfg_.batch_central)
        last_high_ = ppo_update(central_actor_, central_actor_opt_,
                                central_critic_, central_critic_opt_,
                                high_buffer_, cfg_, upd_rng_);

      sfeat = sfeat_next;
      em.high_reward_avg += sm.high_reward;
      em.low_reward_avg += sm.avg_low_reward;
      em.coverage += sm.coverage;
      em.task_delay += sm.task_delay;
      em.efficiency += sm.efficiency;
      covert += sm.covert_slices;
      comm += sm.communicating_slices;
      completed += sm.completed_count;
      selected += sm.selected_count;
    }

    const double ns = world_.slot_horizon;
    em.high_reward_avg /= ns;
    em.low_reward_avg /= ns;
    em.coverage /= ns;
    em.task_delay /= ns;
    em.efficiency /= ns;
    em.covert_fraction = comm > 0 ? static_cast<double>(covert) / comm : 1.0;
    em.completion_ratio =
        selected > 0 ? static_cast<double>(completed) / selected : 0.0;

    ++episode_;
    history_.push_back(em);
    return em;
  }

  void save_checkpoint(std::ostream& os) const {
    os << "auvcov_checkpoint " << kCheckpointVersion << '\n';
    os << "episode " << episode_ << '\n';
    os << "act_rng ";
    act_rng_.save(os);
    os << "\nupd_rng ";
    upd_rng_.save(os);
    os << '\n';
    os << "section central_actor\n";
    central_actor_.save(os);
    central_actor_opt_.save(os);
    os << "section central_critic\n";
    central_critic_.save(os);
    central_critic_opt_.save(os);
    os << "section auv_actors\n";
    actors_.save(os);
    os << "section low_critic\n";
    low_critic_.save(os);
    low_critic_opt_.save(os);
    os << "section high_buffer\n";
    high_buffer_.save(os);
    os << "section low_buffer\n";
    low_buffer_.save(os);
    os << "end\n";
  }

  void load_checkpoint(std::istream& is) {
    neural::detail::expect_token(is, "auvcov_checkpoint");
    int version = 0;
    is >> version;
    if (version != kCheckpointVersion)
      throw std::runtime_error("checkpoint: unsupported version");
    neural::detail::expect_token(is, "episode");
    is >> episode_;
    neural::detail::expect_token(is, "act_rng");
    act_rng_.load(is);
    neural::detail::expect_token(is, "upd_rng");
    upd_rng_.load(is);
    neural::detail::expect_token(is, "section");
    neural::detail::expect_token(is, "central_actor");
    central_actor_.load(is);
    central_actor_opt_.load(is, central_actor_.net);
    neural::detail::expect_token(is, "section");
    neural::detail::expect_token(is, "central_critic");
    central_critic_.load(is);
    central_critic_opt_.load(is, central_critic_);
    neural::detail::expect_token(is, "section");
    neural::detail::expect_token(is, "auv_actors");
    actors_.load(is);
    neural::detail::expect_token(is, "section");
    neural::detail::expect_token(is, "low_critic");
    low_critic_.load(is);
    low_critic_opt_.load(is, low_critic_);
    neural::detail::expect_token(is, "section");
    neural::detail::expect_token(is, "high_buffer");
    high_buffer_.load(is);
    neural::detail::expect_token(is, "section");
    neural::detail::expect_token(is, "low_buffer");
    low_buffer_.load(is);
    neural::detail::expect_token(is, "end");
    history_.clear();
  }

 private:
  static constexpr std::uint64_t kInitStream = 0;
  static constexpr std::uint64_t kActStream = 1;
  static constexpr std::uint64_t kUpdateStream = 2;
  static constexpr std::uint64_t kEnvStream = 16;

  envsim::WorldConfig world_;
  TrainConfig cfg_;
  envsim::Environment env_;
  BernoulliPolicy central_actor_;
  Mlp central_critic_;
  AdamState central_actor_opt_, central_critic_opt_;
  AuvActors actors_;
  Mlp low_critic_;
  AdamState low_critic_opt_;
  RolloutBuffer high_buffer_, low_buffer_;
  Rng act_rng_{0}, upd_rng_{0};
  int episode_ = 0;
  std::vector<EpisodeMetrics> history_;
  UpdateStats last_low_{}, last_high_{};
};

// Runs `cfg.episodes` episodes from scratch; `on_episode`, when given, sees
// the trainer after every episode (checkpoint cadence, CSV streaming).
inline Trainer train(
    const envsim::WorldConfig& world, const TrainConfig& cfg,
    const std::function<void(const Trainer&, const EpisodeMetrics&)>&
        on_episode = {}) {
  Trainer t(world, cfg);
  for (int e = 0; e < cfg.episodes; ++e) {
    const auto em = t.run_episode();
    if (on_episode) on_episode(t, em);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Evaluation: pure rollout, no critics anywhere on this path.

using HighPolicy =
    std::function<envsim::HighLevelAction(const VectorXd&, Rng&)>;
using LowPolicy = std::function<envsim::LowLevelAction(
    const envsim::LowLevelObs&, const VectorXd&, Rng&)>;

inline HighPolicy greedy_high(const BernoulliPolicy& p) {
  return [&p](const VectorXd& s, Rng&) {
    return envsim::HighLevelAction{p.greedy(s)};
  };
}

inline HighPolicy sampled_high(const BernoulliPolicy& p) {
  return [&p](const VectorXd& s, Rng& rng) {
    return envsim::HighLevelAction{p.sample(s, rng).bits};
  };
}

// Fair-coin delegation; an all-zero draw is retried then forced uniformly.
inline HighPolicy random_high() {
  return [](const VectorXd& s, Rng& rng) {
    const int n = static_cast<int>(s.size()) / 4;
    envsim::HighLevelAction a;
    a.select.assign(n, 0);
    for (int attempt = 0; attempt <= BernoulliPolicy::kMaxResample;
         ++attempt) {
      bool any = false;
      for (int i = 0; i < n; ++i) {
        a.select[i] = rng.bernoulli(0.5) ? 1 : 0;
        any = any || a.select[i] != 0;
      }
      if (any) return a;
    }
    a.select[rng.below(static_cast<std::uint64_t>(n))] = 1;
    return a;
  };
}

inline HighPolicy all_on_high() {
  return [](const VectorXd& s, Rng&) {
    envsim::HighLevelAction a;
    a.select.assign(static_cast<int>(s.size()) / 4, 1);
    return a;
  };
}

inline LowPolicy greedy_low(const AuvActors& actors) {
  return [&actors](const envsim::LowLevelObs& o, const VectorXd& f, Rng&) {
    const VectorXd a = actors.for_agent(o.auv).mean_action(f);
    return envsim::LowLevelAction{a[0], {a[1], a[2], a[3]}};
  };
}

inline LowPolicy sampled_low(const AuvActors& actors) {
  return [&actors](const envsim::LowLevelObs& o, const VectorXd& f, Rng& rng) {
    const auto s = actors.for_agent(o.auv).sample(f, rng);
    return envsim::LowLevelAction{s.action[0],
                                  {s.action[1], s.action[2], s.action[3]}};
  };
}

// Uniform random control in the raw action box.
inline LowPolicy random_low(const envsim::WorldConfig& cfg) {
  const double pmin = cfg.power_min, pmax = cfg.power_max, v = cfg.speed_max;
  return [pmin, pmax, v](const envsim::LowLevelObs&, const VectorXd&,
                         Rng& rng) {
    return envsim::LowLevelAction{
        rng.uniform(pmin, pmax),
        {rng.uniform(-v, v), rng.uniform(-v, v), rng.uniform(-v, v)}};
  };
}

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;
};

inline Stat make_stat(const std::vector<double>& xs) {
  Stat s;
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) /
           static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

struct EvalSummary {
  int episodes = 0;
  bool empty = true;  // set when no episodes were run
  Stat high_reward;
  Stat low_reward;
  Stat coverage;
  Stat task_delay;
  Stat efficiency;      // mean per-slot coverage / delay
  Stat agg_efficiency;  // per episode: total coverage / total delay
  Stat covert_fraction;
  Stat completion_ratio;
  Stat measured_kl;  // mean KL over communicating slices, per episode
  long covert_slices = 0;
  long communicating_slices = 0;

  double pooled_covert_fraction() const {
    return communicating_slices > 0
               ? static_cast<double>(covert_slices) / communicating_slices
               : 1.0;
  }
};

// Deterministic in `seed`: per-episode environment seeds and the policy
// stream derive from it.
inline EvalSummary evaluate(const envsim::WorldConfig& world,
                            const HighPolicy& high, const LowPolicy& low,
                            int episodes, std::uint64_t seed,
                            std::vector<envsim::TraceRow>* trace = nullptr,
                            std::vector<EpisodeMetrics>* per_episode = nullptr) {
  if (episodes < 0) throw std::invalid_argument("evaluate: negative episodes");
  EvalSummary out;
  out.episodes = episodes;
  if (episodes == 0) return out;  // empty summary, flag already set
  out.empty = false;

  envsim::Environment env(world);
  env.set_trace_sink(trace);
  Rng pol_rng(mix_seed(seed, 0xE1));

  std::vector<double> vh, vl, vcov, vdel, veff, vagg, vcf, vcr, vkl;

  for (int e = 0; e < episodes; ++e) {
    env.reset(mix_seed(seed, 0x100 + static_cast<std::uint64_t>(e)));
    VectorXd sfeat = env.state().features(world);
    double sh = 0, sl = 0, scov = 0, sdel = 0, seff = 0, skl = 0;
    int covert = 0, comm = 0, completed = 0, selected = 0;

    for (int slot = 0; slot < world.slot_horizon; ++slot) {
      auto obs = env.begin_slot(high(sfeat, pol_rng));
      while (true) {
        std::vector<envsim::LowLevelAction> actions;
        actions.reserve(obs.size());
        for (const auto& o : obs)
          actions.push_back(low(o, o.features(world), pol_rng));
        const auto res = env.low_step(actions);
        if (res.info.communicating) skl += res.info.kl;
        if (res.done) break;
        obs = res.obs;
      }
      const auto sr = env.end_slot();
      const auto& sm = sr.summary;
      sh += sm.high_reward;
      sl += sm.avg_low_reward;
      scov += sm.coverage;
      sdel += sm.task_delay;
      seff += sm.efficiency;
      covert += sm.covert_slices;
      comm += sm.communicating_slices;
      completed += sm.completed_count;
      selected += sm.selected_count;
      sfeat = sr.next_state.features(world);
    }

    const double ns = world.slot_horizon;
    vh.push_back(sh / ns);
    vl.push_back(sl / ns);
    vcov.push_back(scov / ns);
    vdel.push_back(sdel / ns);
    veff.push_back(seff / ns);
    vagg.push_back(sdel > 0.0 ? scov / sdel : 0.0);
    vcf.push_back(comm > 0 ? static_cast<double>(covert) / comm : 1.0);
    vcr.push_back(selected > 0 ? static_cast<double>(completed) / selected
                               : 0.0);
    vkl.push_back(comm > 0 ? skl / comm : 0.0);
    out.covert_slices += covert;
    out.communicating_slices += comm;

    if (per_episode) {
      EpisodeMetrics em;
      em.episode = e + 1;
      em.high_reward_avg = vh.back();
      em.low_reward_avg = vl.back();
      em.coverage = vcov.back();
      em.task_delay = vdel.back();
      em.efficiency = veff.back();
      em.covert_fraction = vcf.back();
      em.completion_ratio = vcr.back();
      per_episode->push_back(em);
    }
  }

  out.high_reward = make_stat(vh);
  out.low_reward = make_stat(vl);
  out.coverage = make_stat(vcov);
  out.task_delay = make_stat(vdel);
  out.efficiency = make_stat(veff);
  out.agg_efficiency = make_stat(vagg);
  out.covert_fraction = make_stat(vcf);
  out.completion_ratio = make_stat(vcr);
  out.measured_kl = make_stat(vkl);
  return out;
}

// Actor-only view of a checkpoint, for evaluation tools. Parses the full
// stream for integrity but returns no critic and no optimizer state.
struct Policies {
  BernoulliPolicy central;
  AuvActors auv;
  int episode = 0;
};

inline Policies load_policies(std::istream& is) {
  Policies p;
  neural::detail::expect_token(is, "auvcov_checkpoint");
  int version = 0;
  is >> version;
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  neural::detail::expect_token(is, "episode");
  is >> p.episode;
  Rng scratch_rng;
  neural::detail::expect_token(is, "act_rng");
  scratch_rng.load(is);
  neural::detail::expect_token(is, "upd_rng");
  scratch_rng.load(is);
  neural::detail::expect_token(is, "section");
  neural::detail::expect_token(is, "central_actor");
  p.central.load(is);
  AdamState scratch_adam;
  scratch_adam.load(is, p.central.net);
  neural::detail::expect_token(is, "section");
  neural::detail::expect_token(is, "central_critic");
  Mlp scratch_net;
  scratch_net.load(is);
  scratch_adam.load(is, scratch_net);
  neural::detail::expect_token(is, "section");
  neural::detail::expect_token(is, "auv_actors");
  p.auv.load(is);
  p.auv.opts.clear();  // evaluation never touches optimizer state
  return p;  // critics, buffers and the trailing sections stay unread
}

}  // namespace auvcov::hmappo
