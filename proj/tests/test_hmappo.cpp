#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "auvcov/hmappo.hpp"

namespace hm = auvcov::hmappo;
namespace es = auvcov::envsim;
namespace nn = auvcov::neural;
using auvcov::Rng;
using Eigen::VectorXd;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

es::WorldConfig tiny_world() {
  es::WorldConfig w;
  w.n_auvs = 2;
  w.slot_horizon = 2;
  w.slice_horizon = 8;
  w.seed = 5;
  return w;
}

hm::TrainConfig tiny_train() {
  hm::TrainConfig c;
  c.episodes = 2;
  c.batch_auv = 16;
  c.batch_central = 2;
  c.minibatch = 8;
  c.epochs = 2;
  c.hidden1 = 8;
  c.hidden2 = 0;
  c.seed = 3;
  return c;
}

bool metrics_equal(const hm::EpisodeMetrics& a, const hm::EpisodeMetrics& b) {
  return a.episode == b.episode && a.high_reward_avg == b.high_reward_avg &&
         a.low_reward_avg == b.low_reward_avg && a.coverage == b.coverage &&
         a.task_delay == b.task_delay && a.efficiency == b.efficiency &&
         a.covert_fraction == b.covert_fraction &&
         a.completion_ratio == b.completion_ratio;
}

}  // namespace

TEST_CASE("advantage estimation matches the hand-worked example", "[hmappo]") {
  const std::vector<double> r{1.0, 1.0};
  const std::vector<double> v{0.0, 0.0};
  const std::vector<int> d{0, 1};
  const auto g = hm::compute_gae(r, v, d, 0.0, 0.99, 0.95);
  REQUIRE(g.advantages.size() == 2);
  CHECK_THAT(g.advantages[0], WithinRel(1.9405, 1e-12));
  CHECK_THAT(g.advantages[1], WithinRel(1.0, 1e-12));
  CHECK_THAT(g.returns[0], WithinRel(1.9405, 1e-12));
  CHECK_THAT(g.returns[1], WithinRel(1.0, 1e-12));
}

TEST_CASE("lambda one reduces to discounted returns minus value", "[hmappo]") {
  const std::vector<double> r{0.5, -1.0, 2.0, 0.25};
  const std::vector<double> v{0.3, 0.7, -0.4, 0.1};
  const std::vector<int> d{0, 0, 0, 1};
  const double gamma = 0.9;
  const auto g = hm::compute_gae(r, v, d, 0.0, gamma, 1.0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    double ret = 0.0;
    for (std::size_t k = i; k < r.size(); ++k)
      ret += std::pow(gamma, static_cast<double>(k - i)) * r[k];
    REQUIRE_THAT(g.advantages[i], WithinAbs(ret - v[i], 1e-12));
    REQUIRE_THAT(g.returns[i], WithinAbs(ret, 1e-12));
  }
}

TEST_CASE("lambda zero reduces to one-step temporal differences", "[hmappo]") {
  const std::vector<double> r{0.5, -1.0, 2.0};
  const std::vector<double> v{0.3, 0.7, -0.4};
  const std::vector<int> d{0, 0, 1};
  const double gamma = 0.95;
  const auto g = hm::compute_gae(r, v, d, 0.0, gamma, 0.0);
  CHECK_THAT(g.advantages[0], WithinAbs(r[0] + gamma * v[1] - v[0], 1e-12));
  CHECK_THAT(g.advantages[1], WithinAbs(r[1] + gamma * v[2] - v[1], 1e-12));
  CHECK_THAT(g.advantages[2], WithinAbs(r[2] - v[2], 1e-12));
}

TEST_CASE("done flags cut the flat array into independent sequences",
          "[hmappo]") {
  const std::vector<double> ra{1.0, -0.5, 0.25}, va{0.1, 0.2, 0.3};
  const std::vector<double> rb{2.0, 0.5}, vb{-0.1, 0.4};
  const std::vector<int> da{0, 0, 1}, db{0, 1};

  std::vector<double> r = ra, v = va;
  r.insert(r.end(), rb.begin(), rb.end());
  v.insert(v.end(), vb.begin(), vb.end());
  std::vector<int> d = da;
  d.insert(d.end(), db.begin(), db.end());

  const auto whole = hm::compute_gae(r, v, d, 0.0, 0.97, 0.9);
  const auto first = hm::compute_gae(ra, va, da, 0.0, 0.97, 0.9);
  const auto second = hm::compute_gae(rb, vb, db, 0.0, 0.97, 0.9);
  for (std::size_t i = 0; i < ra.size(); ++i)
    REQUIRE(whole.advantages[i] == first.advantages[i]);
  for (std::size_t i = 0; i < rb.size(); ++i)
    REQUIRE(whole.advantages[ra.size() + i] == second.advantages[i]);
}

TEST_CASE("a truncated tail bootstraps from the stored value", "[hmappo]") {
  const std::vector<double> r{1.0};
  const std::vector<double> v{2.0};
  const std::vector<int> d{0};
  const auto g = hm::compute_gae(r, v, d, 3.0, 0.9, 0.5);
  CHECK_THAT(g.advantages[0], WithinAbs(1.0 + 0.9 * 3.0 - 2.0, 1e-12));
  // With done set, the bootstrap must be ignored.
  const std::vector<int> dt{1};
  const auto gt = hm::compute_gae(r, v, dt, 3.0, 0.9, 0.5);
  CHECK_THAT(gt.advantages[0], WithinAbs(-1.0, 1e-12));

  const std::vector<double> short_v{1.0, 2.0};
  CHECK_THROWS_AS(hm::compute_gae(r, short_v, d, 0.0, 0.9, 0.5),
                  std::invalid_argument);
}

TEST_CASE("clipped surrogate blocks gradients on the clipped branch",
          "[hmappo]") {
  // Inside the trust band: plain importance-weighted objective.
  auto s = hm::clipped_surrogate(1.05, 2.0, 0.2);
  CHECK_THAT(s.loss, WithinRel(-2.1, 1e-12));
  CHECK_THAT(s.grad_coef, WithinRel(-2.0 * 1.05, 1e-12));
  CHECK_FALSE(s.clipped);

  // Positive advantage, ratio beyond 1 + clip: clipped, no gradient.
  s = hm::clipped_surrogate(1.5, 2.0, 0.2);
  CHECK_THAT(s.loss, WithinRel(-1.2 * 2.0, 1e-12));
  CHECK(s.grad_coef == 0.0);
  CHECK(s.clipped);

  // Negative advantage, ratio beyond the band: the unclipped branch is the
  // pessimistic one, so the gradient still flows.
  s = hm::clipped_surrogate(1.5, -2.0, 0.2);
  CHECK_THAT(s.loss, WithinRel(3.0, 1e-12));
  CHECK_THAT(s.grad_coef, WithinRel(2.0 * 1.5, 1e-12));

  // Positive advantage, ratio below 1 - clip: unclipped is pessimistic.
  s = hm::clipped_surrogate(0.5, 1.0, 0.2);
  CHECK_THAT(s.grad_coef, WithinRel(-0.5, 1e-12));

  // Negative advantage, ratio below the band: clipped branch wins, no grad.
  s = hm::clipped_surrogate(0.5, -1.0, 0.2);
  CHECK(s.grad_coef == 0.0);
}

TEST_CASE("advantage normalization centers and scales", "[hmappo]") {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0};
  hm::detail::normalize(v);
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / 5.0;
  CHECK_THAT(mean, WithinAbs(0.0, 1e-12));
  double var = 0.0;
  for (double x : v) var += x * x;
  CHECK_THAT(std::sqrt(var / 5.0), WithinRel(1.0, 1e-6));

  std::vector<double> flat{2.0, 2.0, 2.0};
  hm::detail::normalize(flat);
  for (double x : flat) REQUIRE_THAT(x, WithinAbs(0.0, 1e-12));
  std::vector<double> empty;
  CHECK_NOTHROW(hm::detail::normalize(empty));
}

TEST_CASE("index shuffle is a seeded permutation", "[hmappo]") {
  std::vector<int> idx(100);
  std::iota(idx.begin(), idx.end(), 0);
  Rng a(9), b(9), c(10);
  auto i1 = idx, i2 = idx, i3 = idx;
  hm::detail::shuffle(i1, a);
  hm::detail::shuffle(i2, b);
  hm::detail::shuffle(i3, c);
  CHECK(i1 == i2);
  CHECK(i1 != i3);
  auto sorted = i1;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == idx);
  CHECK(i1 != idx);  // a 100-element identity shuffle would be astonishing
}

TEST_CASE("gradient norm clipping rescales only above the cap", "[hmappo]") {
  Rng rng(12);
  nn::Mlp net(std::vector<int>{2, 3, 1}, rng);
  auto g = net.zero_grads();
  g.w[0].setConstant(2.0);
  g.w[1].setConstant(2.0);
  g.b[0].setConstant(2.0);
  g.b[1].setConstant(2.0);
  VectorXd extra = VectorXd::Constant(2, 2.0);
  const double before = std::sqrt(g.squared_norm() + extra.squaredNorm());

  auto g2 = g;
  VectorXd e2 = extra;
  const double reported = hm::detail::clip_grad_norm(g2, &e2, 1.0);
  CHECK_THAT(reported, WithinRel(before, 1e-12));
  CHECK_THAT(std::sqrt(g2.squared_norm() + e2.squaredNorm()),
             WithinRel(1.0, 1e-12));

  // Under the cap: untouched.
  auto g3 = g;
  hm::detail::clip_grad_norm(g3, nullptr, 1e9);
  CHECK(g3.w[0] == g.w[0]);
  // Zero disables clipping entirely.
  auto g4 = g;
  VectorXd e4 = extra;
  hm::detail::clip_grad_norm(g4, &e4, 0.0);
  CHECK(g4.w[0] == g.w[0]);
  CHECK(e4 == extra);
}

TEST_CASE("team observation is zero-padded with trailing time fractions",
          "[hmappo]") {
  auto cfg = tiny_world();
  cfg.n_auvs = 3;
  es::LowLevelObs o;
  o.auv = 1;
  o.dist_central = 10.0;
  o.dist_subtarget = 20.0;
  o.position = {50.0, 60.0, -70.0};
  o.energy = cfg.energy_max;

  const auto g = hm::global_features({o}, cfg, 0.25, 0.5);
  REQUIRE(g.size() == 12 * 3 + 2);
  // Slots 0 and 2 are empty.
  for (int i = 0; i < 12; ++i) REQUIRE(g[i] == 0.0);
  for (int i = 24; i < 36; ++i) REQUIRE(g[i] == 0.0);
  const auto f = o.features(cfg);
  for (int i = 0; i < 12; ++i) REQUIRE(g[12 + i] == f[i]);
  CHECK(g[36] == 0.25);
  CHECK(g[37] == 0.5);

  const VectorXd state = VectorXd::LinSpaced(8, 0.0, 7.0);
  const auto h = hm::high_critic_features(state, 0.3);
  REQUIRE(h.size() == 9);
  CHECK(h.head(8) == state);
  CHECK(h[8] == 0.3);
}

TEST_CASE("train config validation catches bad geometry", "[hmappo]") {
  auto c = tiny_train();
  c.clip = 0.0;
  CHECK_THROWS_AS(c.validate(), std::domain_error);
  c = tiny_train();
  c.value_scale = 0.0;
  CHECK_THROWS_AS(c.validate(), std::domain_error);
  c = tiny_train();
  c.gae_lambda = 1.5;
  CHECK_THROWS_AS(c.validate(), std::domain_error);
  c = tiny_train();
  c.hidden1 = 0;
  c.hidden2 = 0;
  CHECK_THROWS_AS(c.validate(), std::domain_error);
  c = tiny_train();
  c.minibatch = 0;
  CHECK_THROWS_AS(c.validate(), std::domain_error);
}

TEST_CASE("high-level update consumes the buffer and reports finite stats",
          "[hmappo]") {
  Rng init(77);
  nn::BernoulliPolicy actor(std::vector<int>{3, 8, 2}, init);
  nn::Mlp critic(std::vector<int>{4, 8, 1}, init);
  hm::TrainConfig cfg = tiny_train();
  cfg.minibatch = 4;
  nn::AdamState aopt(actor.net, {cfg.lr_actor});
  nn::AdamState copt(critic, {cfg.lr_critic});

  hm::RolloutBuffer buf;
  Rng fill(78);
  for (int i = 0; i < 10; ++i) {
    hm::Transition t;
    t.obs = VectorXd::NullaryExpr(3, [&](Eigen::Index) { return fill.normal(); });
    t.global = VectorXd::NullaryExpr(4, [&](Eigen::Index) { return fill.normal(); });
    t.bits = {fill.bernoulli(0.6) ? 1 : 0, 1};
    t.log_prob = actor.log_prob(t.obs, t.bits);
    t.reward = fill.normal();
    t.value = fill.normal();
    t.done = i == 9;
    buf.push(std::move(t));
  }

  Rng upd(79);
  const auto st = hm::ppo_update(actor, aopt, critic, copt, buf, cfg, upd);
  CHECK(buf.empty());
  CHECK(st.samples == 10);
  CHECK(std::isfinite(st.actor_loss));
  CHECK(std::isfinite(st.critic_loss));
  CHECK(st.critic_loss >= 0.0);
  CHECK(std::isfinite(st.entropy));
  CHECK(st.clip_fraction >= 0.0);
  CHECK(st.clip_fraction <= 1.0);
  CHECK_THROWS_AS(hm::ppo_update(actor, aopt, critic, copt, buf, cfg, upd),
                  std::logic_error);
}

TEST_CASE("low-level update steps every touched actor and clears the buffer",
          "[hmappo]") {
  Rng init(80);
  const VectorXd lo = (VectorXd(2) << -1.0, 0.1).finished();
  const VectorXd hi = (VectorXd(2) << 1.0, 2.0).finished();
  hm::AuvActors actors;
  actors.shared = true;
  actors.actors.emplace_back(std::vector<int>{2, 8, 2}, lo, hi, init);
  actors.opts.emplace_back(actors.actors[0].net, nn::AdamConfig{1e-3});
  actors.opts[0].attach_extra(2);
  nn::Mlp critic(std::vector<int>{5, 8, 1}, init);
  nn::AdamState copt(critic, {1e-3});

  hm::TrainConfig cfg = tiny_train();
  cfg.minibatch = 6;

  // Push the log-std past its ceiling to confirm the update projects it back.
  actors.actors[0].log_std[0] = 5.0;

  hm::RolloutBuffer buf;
  Rng fill(81);
  for (int i = 0; i < 12; ++i) {
    hm::Transition t;
    t.obs = VectorXd::NullaryExpr(2, [&](Eigen::Index) { return fill.normal(); });
    t.global = VectorXd::NullaryExpr(5, [&](Eigen::Index) { return fill.normal(); });
    const auto s = actors.actors[0].sample(t.obs, fill);
    t.presquash = s.presquash;
    t.log_prob = s.log_prob;
    t.reward = fill.normal();
    t.value = fill.normal();
    t.agent = 0;
    t.done = (i == 5) || (i == 11);
    buf.push(std::move(t));
  }

  Rng upd(82);
  const auto st = hm::mappo_update(actors, critic, copt, buf, cfg, upd);
  CHECK(buf.empty());
  CHECK(st.samples == 12);
  CHECK(std::isfinite(st.actor_loss));
  CHECK(std::isfinite(st.critic_loss));
  CHECK(actors.opts[0].step_count() > 0);
  CHECK(actors.actors[0].log_std[0] <=
        std::log(0.5 * (hi[0] - lo[0])) + 1e-12);
}

TEST_CASE("transitions and buffers survive a text round trip", "[hmappo]") {
  hm::Transition t;
  t.obs = (VectorXd(2) << 0.125, -3.5).finished();
  t.global = (VectorXd(3) << 1.0, 2.0, 3.0).finished();
  t.presquash = (VectorXd(1) << -0.75).finished();
  t.bits = {1, 0, 1};
  t.log_prob = -1.25;
  t.reward = 0.5;
  t.value = 2.0;
  t.next_value = 1.75;
  t.done = true;
  t.agent = 4;

  hm::RolloutBuffer buf;
  buf.push(t);
  buf.push(t);
  std::stringstream ss;
  buf.save(ss);
  hm::RolloutBuffer back;
  back.load(ss);
  REQUIRE(back.size() == 2);
  const auto& u = back.data[1];
  CHECK(u.obs == t.obs);
  CHECK(u.global == t.global);
  CHECK(u.presquash == t.presquash);
  CHECK(u.bits == t.bits);
  CHECK(u.log_prob == t.log_prob);
  CHECK(u.next_value == t.next_value);
  CHECK(u.done == t.done);
  CHECK(u.agent == t.agent);
}

TEST_CASE("training is deterministic in the seed", "[hmappo]") {
  const auto w = tiny_world();
  const auto c = tiny_train();
  hm::Trainer a(w, c), b(w, c);
  for (int e = 0; e < 2; ++e) {
    const auto ma = a.run_episode();
    const auto mb = b.run_episode();
    REQUIRE(metrics_equal(ma, mb));
  }
  // A different training seed diverges.
  auto c2 = c;
  c2.seed = 4;
  hm::Trainer d(w, c2);
  CHECK_FALSE(metrics_equal(d.run_episode(), a.history()[0]));
}

TEST_CASE("a reloaded checkpoint continues bit-identically", "[hmappo]") {
  const auto w = tiny_world();
  const auto c = tiny_train();
  hm::Trainer a(w, c);
  a.run_episode();
  a.run_episode();
  std::stringstream ss;
  a.save_checkpoint(ss);

  hm::Trainer b(w, c);
  b.load_checkpoint(ss);
  REQUIRE(b.episodes_done() == 2);
  const auto ma = a.run_episode();
  const auto mb = b.run_episode();
  REQUIRE(ma.episode == 3);
  REQUIRE(metrics_equal(ma, mb));

  std::stringstream junk("auvcov_checkpoint 999\n");
  hm::Trainer d(w, c);
  CHECK_THROWS_AS(d.load_checkpoint(junk), std::runtime_error);
}

TEST_CASE("actor-only loading reproduces the trainer's policies", "[hmappo]") {
  const auto w = tiny_world();
  const auto c = tiny_train();
  hm::Trainer t(w, c);
  t.run_episode();
  std::stringstream ss;
  t.save_checkpoint(ss);
  const auto pol = hm::load_policies(ss);
  CHECK(pol.episode == 1);
  CHECK(pol.auv.opts.empty());

  Rng probe(90);
  for (int i = 0; i < 10; ++i) {
    const VectorXd s =
        VectorXd::NullaryExpr(4 * w.n_auvs,
                              [&](Eigen::Index) { return probe.normal(); });
    REQUIRE(pol.central.greedy(s) == t.central_actor().greedy(s));
    const VectorXd f = VectorXd::NullaryExpr(
        es::LowLevelObs::kDim, [&](Eigen::Index) { return probe.normal(); });
    REQUIRE(pol.auv.for_agent(0).mean_action(f) ==
            t.auv_actors().for_agent(0).mean_action(f));
  }
}

TEST_CASE("buffers drain at the batch threshold during training", "[hmappo]") {
  const auto w = tiny_world();
  auto c = tiny_train();
  // Thresholds low enough that every slot triggers both updates.
  c.batch_auv = 1;
  c.batch_central = 1;
  hm::Trainer t(w, c);
  t.run_episode();
  CHECK(t.low_buffer().empty());
  CHECK(t.high_buffer().empty());
  CHECK(t.last_low_update().samples > 0);
  CHECK(t.last_high_update().samples > 0);
}

TEST_CASE("evaluation is deterministic and respects its contract",
          "[hmappo]") {
  const auto w = tiny_world();
  const auto c = tiny_train();
  hm::Trainer t(w, c);

  CHECK_THROWS_AS(hm::evaluate(w, hm::random_high(), hm::random_low(w), -1, 1),
                  std::invalid_argument);
  const auto none =
      hm::evaluate(w, hm::random_high(), hm::random_low(w), 0, 1);
  CHECK(none.empty);
  CHECK(none.episodes == 0);

  std::vector<es::TraceRow> tr1, tr2;
  std::vector<hm::EpisodeMetrics> pe1;
  const auto a = hm::evaluate(w, hm::greedy_high(t.central_actor()),
                              hm::greedy_low(t.auv_actors()), 3, 17, &tr1,
                              &pe1);
  const auto b = hm::evaluate(w, hm::greedy_high(t.central_actor()),
                              hm::greedy_low(t.auv_actors()), 3, 17, &tr2);
  CHECK_FALSE(a.empty);
  CHECK(a.episodes == 3);
  CHECK(pe1.size() == 3);
  CHECK(a.high_reward.mean == b.high_reward.mean);
  CHECK(a.covert_fraction.mean == b.covert_fraction.mean);
  CHECK(a.measured_kl.mean == b.measured_kl.mean);
  REQUIRE(tr1.size() == tr2.size());
  REQUIRE_FALSE(tr1.empty());
  for (std::size_t i = 0; i < tr1.size(); ++i)
    REQUIRE(tr1[i].auv_cols == tr2[i].auv_cols);

  // A different seed gives a different rollout.
  const auto d = hm::evaluate(w, hm::greedy_high(t.central_actor()),
                              hm::greedy_low(t.auv_actors()), 3, 18);
  CHECK(a.high_reward.mean != d.high_reward.mean);
}

TEST_CASE("baseline policies cover the action space safely", "[hmappo]") {
  const auto w = tiny_world();
  Rng rng(33);
  const VectorXd s = VectorXd::Zero(4 * w.n_auvs);
  for (int i = 0; i < 50; ++i) {
    const auto a = hm::random_high()(s, rng);
    REQUIRE(static_cast<int>(a.select.size()) == w.n_auvs);
    REQUIRE(a.count() >= 1);
  }
  const auto all = hm::all_on_high()(s, rng);
  CHECK(all.count() == w.n_auvs);

  es::LowLevelObs o;
  for (int i = 0; i < 50; ++i) {
    const auto act = hm::random_low(w)(o, VectorXd::Zero(12), rng);
    REQUIRE(act.power >= w.power_min);
    REQUIRE(act.power <= w.power_max);
    REQUIRE(std::abs(act.velocity.x) <= w.speed_max);
    REQUIRE(std::abs(act.velocity.z) <= w.speed_max);
  }
}

TEST_CASE("evaluation statistics match their definitions", "[hmappo]") {
  hm::Stat s = hm::make_stat({1.0, 2.0, 3.0, 4.0});
  CHECK_THAT(s.mean, WithinRel(2.5, 1e-12));
  CHECK_THAT(s.stddev, WithinRel(std::sqrt(1.25), 1e-12));
  const auto empty = hm::make_stat({});
  CHECK(empty.mean == 0.0);

  hm::EvalSummary sum;
  CHECK(sum.pooled_covert_fraction() == 1.0);  // vacuously covert
  sum.covert_slices = 3;
  sum.communicating_slices = 4;
  CHECK_THAT(sum.pooled_covert_fraction(), WithinRel(0.75, 1e-12));
}
