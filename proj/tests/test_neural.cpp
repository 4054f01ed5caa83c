#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Core>
#include <cmath>
#include <sstream>
#include <vector>

#include "auvcov/neural.hpp"
#include "auvcov/rng.hpp"

namespace nn = auvcov::neural;
using auvcov::Rng;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kFdStep = 1e-5;

bool grad_close(double analytic, double fd, double tol = 1e-4) {
  return std::abs(analytic - fd) <=
         tol * std::max({1.0, std::abs(analytic), std::abs(fd)});
}

VectorXd random_vec(int n, Rng& rng, double scale = 1.0) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

// Scalar loss used by the finite-difference checks: fixed linear readout of
// the network output.
double readout_loss(const nn::Mlp& net, const VectorXd& x, const VectorXd& w) {
  return w.dot(net.forward(x));
}

}  // namespace

TEST_CASE("mlp forward matches a hand-computed two-layer net", "[neural]") {
  Rng rng(1);
  nn::Mlp net(std::vector<int>{2, 2, 1}, rng);
  net.weights()[0] << 1.0, -1.0, 0.5, 2.0;
  net.biases()[0] << 0.1, -0.2;
  net.weights()[1] << 3.0, -1.5;
  net.biases()[1] << 0.25;
  const VectorXd x = (VectorXd(2) << 0.3, -0.7).finished();
  const double h1 = std::tanh(1.0 * 0.3 - 1.0 * -0.7 + 0.1);
  const double h2 = std::tanh(0.5 * 0.3 + 2.0 * -0.7 - 0.2);
  const double want = 3.0 * h1 - 1.5 * h2 + 0.25;
  CHECK_THAT(net.forward(x)[0], WithinRel(want, 1e-15));
  CHECK(net.input_width() == 2);
  CHECK(net.output_width() == 1);
  CHECK(net.param_count() == 2 * 2 + 2 + 2 + 1);
}

TEST_CASE("mlp rejects malformed construction and inputs", "[neural]") {
  Rng rng(2);
  CHECK_THROWS_AS(nn::Mlp(std::vector<int>{3}, rng), std::invalid_argument);
  CHECK_THROWS_AS(nn::Mlp(std::vector<int>{3, 0, 1}, rng),
                  std::invalid_argument);
  nn::Mlp net(std::vector<int>{3, 4, 2}, rng);
  CHECK_THROWS_AS(net.forward(VectorXd::Zero(4)), std::invalid_argument);
  nn::Mlp::Cache cache;
  net.forward(VectorXd::Zero(3), cache);
  auto g = net.zero_grads();
  CHECK_THROWS_AS(net.backward(cache, VectorXd::Zero(3), g),
                  std::invalid_argument);
}

TEST_CASE("mlp gradients match central differences across shapes",
          "[neural]") {
  const std::vector<std::vector<int>> shapes{
      {1, 1}, {2, 3, 1}, {3, 8, 8, 2}, {4, 5, 4, 3, 2}, {5, 2}};
  Rng rng(20240915);
  int instances = 0;
  for (const auto& widths : shapes) {
    for (int rep = 0; rep < 4; ++rep, ++instances) {
      nn::Mlp net(widths, rng);
      const VectorXd x = random_vec(widths.front(), rng);
      const VectorXd w = random_vec(widths.back(), rng);

      nn::Mlp::Cache cache;
      net.forward(x, cache);
      auto grads = net.zero_grads();
      const VectorXd dx = net.backward(cache, w, grads);

      // Every weight and bias entry against a central difference.
      for (std::size_t l = 0; l < net.layer_count(); ++l) {
        MatrixXd& wm = net.weights()[l];
        for (Eigen::Index r = 0; r < wm.rows(); ++r)
          for (Eigen::Index c = 0; c < wm.cols(); ++c) {
            const double keep = wm(r, c);
            wm(r, c) = keep + kFdStep;
            const double up = readout_loss(net, x, w);
            wm(r, c) = keep - kFdStep;
            const double dn = readout_loss(net, x, w);
            wm(r, c) = keep;
            REQUIRE(grad_close(grads.w[l](r, c), (up - dn) / (2.0 * kFdStep)));
          }
        VectorXd& bv = net.biases()[l];
        for (Eigen::Index i = 0; i < bv.size(); ++i) {
          const double keep = bv[i];
          bv[i] = keep + kFdStep;
          const double up = readout_loss(net, x, w);
          bv[i] = keep - kFdStep;
          const double dn = readout_loss(net, x, w);
          bv[i] = keep;
          REQUIRE(grad_close(grads.b[l][i], (up - dn) / (2.0 * kFdStep)));
        }
      }

      // And the input gradient.
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        VectorXd xp = x, xm = x;
        xp[i] += kFdStep;
        xm[i] -= kFdStep;
        const double fd =
            (readout_loss(net, xp, w) - readout_loss(net, xm, w)) /
            (2.0 * kFdStep);
        REQUIRE(grad_close(dx[i], fd));
      }
    }
  }
  CHECK(instances == 20);
}

TEST_CASE("backward accumulates rather than overwrites", "[neural]") {
  Rng rng(5);
  nn::Mlp net(std::vector<int>{2, 3, 1}, rng);
  const VectorXd x = random_vec(2, rng);
  const VectorXd w = random_vec(1, rng);
  nn::Mlp::Cache cache;
  net.forward(x, cache);
  auto once = net.zero_grads();
  net.backward(cache, w, once);
  auto twice = net.zero_grads();
  net.backward(cache, w, twice);
  net.backward(cache, w, twice);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    REQUIRE(twice.w[l].isApprox(2.0 * once.w[l], 1e-15));
    REQUIRE(twice.b[l].isApprox(2.0 * once.b[l], 1e-15));
  }
}

TEST_CASE("adam matches an inline reference implementation", "[neural]") {
  Rng rng(7);
  nn::Mlp net(std::vector<int>{1, 1}, rng);
  nn::AdamConfig cfg;
  cfg.lr = 0.01;
  nn::AdamState opt(net, cfg);

  // Reference state for the single weight and single bias.
  double w = net.weights()[0](0, 0), b = net.biases()[0][0];
  double mw = 0, vw = 0, mb = 0, vb = 0;
  Rng gs(8);
  for (int t = 1; t <= 50; ++t) {
    auto g = net.zero_grads();
    const double gw = gs.normal(), gb = gs.normal();
    g.w[0](0, 0) = gw;
    g.b[0][0] = gb;
    opt.step(net, g);

    mw = 0.9 * mw + 0.1 * gw;
    vw = 0.999 * vw + 0.001 * gw * gw;
    mb = 0.9 * mb + 0.1 * gb;
    vb = 0.999 * vb + 0.001 * gb * gb;
    const double bc1 = 1.0 - std::pow(0.9, t), bc2 = 1.0 - std::pow(0.999, t);
    w -= cfg.lr * (mw / bc1) / (std::sqrt(vw / bc2) + cfg.eps);
    b -= cfg.lr * (mb / bc1) / (std::sqrt(vb / bc2) + cfg.eps);

    REQUIRE_THAT(net.weights()[0](0, 0), WithinRel(w, 1e-12));
    REQUIRE_THAT(net.biases()[0][0], WithinRel(b, 1e-12));
  }
  CHECK(opt.step_count() == 50);
}

TEST_CASE("adam extra vector shares the step counter", "[neural]") {
  Rng rng(9);
  nn::Mlp net(std::vector<int>{2, 2}, rng);
  nn::AdamState opt(net, {});
  VectorXd extra = VectorXd::Zero(3);
  const VectorXd eg = (VectorXd(3) << 1.0, -1.0, 0.5).finished();
  auto g = net.zero_grads();
  CHECK_THROWS_AS(opt.step(net, g, extra, eg), std::logic_error);
  opt.attach_extra(3);
  opt.step(net, g, extra, eg);
  // First bias-corrected Adam step moves each coordinate by about lr.
  CHECK_THAT(extra[0], WithinRel(-opt.config().lr, 1e-6));
  CHECK_THAT(extra[1], WithinRel(opt.config().lr, 1e-6));
}

TEST_CASE("gaussian policy samples inside the box", "[neural]") {
  Rng rng(11);
  const VectorXd lo = (VectorXd(3) << -5.0, -5.0, 0.01).finished();
  const VectorXd hi = (VectorXd(3) << 5.0, 5.0, 2.0).finished();
  nn::GaussianPolicy pol(std::vector<int>{4, 8, 3}, lo, hi, rng);
  CHECK(pol.action_dim() == 3);
  // Wide start: sigma = half the range.
  CHECK_THAT(pol.log_std[0], WithinRel(std::log(5.0), 1e-12));
  CHECK_THAT(pol.log_std[2], WithinRel(std::log(0.995), 1e-12));

  Rng act(12);
  for (int i = 0; i < 500; ++i) {
    const VectorXd obs = random_vec(4, act);
    const auto s = pol.sample(obs, act);
    // tanh saturates to exactly +-1 in double precision, so the box is
    // closed at the ends, not open.
    for (int d = 0; d < 3; ++d) {
      REQUIRE(s.action[d] >= lo[d]);
      REQUIRE(s.action[d] <= hi[d]);
    }
    REQUIRE(std::isfinite(s.log_prob));
  }
  const VectorXd mean = pol.mean_action(VectorXd::Zero(4));
  for (int d = 0; d < 3; ++d) {
    REQUIRE(mean[d] >= lo[d]);
    REQUIRE(mean[d] <= hi[d]);
  }
}

TEST_CASE("gaussian log-prob is finite far into the tails", "[neural]") {
  Rng rng(13);
  const VectorXd lo = VectorXd::Constant(2, -1.0);
  const VectorXd hi = VectorXd::Constant(2, 1.0);
  nn::GaussianPolicy pol(std::vector<int>{2, 4, 2}, lo, hi, rng);
  const VectorXd obs = VectorXd::Zero(2);
  for (double u : {-40.0, -20.0, 20.0, 40.0}) {
    const double lp = pol.log_prob(obs, VectorXd::Constant(2, u));
    REQUIRE(std::isfinite(lp));
  }
}

TEST_CASE("gaussian log-prob integrates the squash Jacobian", "[neural]") {
  // For a fixed presquash u, log pi(u) must equal the base Gaussian term
  // minus log |da/du|.
  Rng rng(14);
  const VectorXd lo = (VectorXd(1) << 2.0).finished();
  const VectorXd hi = (VectorXd(1) << 6.0).finished();
  nn::GaussianPolicy pol(std::vector<int>{1, 1}, lo, hi, rng);
  pol.log_std[0] = std::log(0.7);
  const VectorXd obs = (VectorXd(1) << 0.3).finished();
  const double mu = pol.net.forward(obs)[0];
  const double u = 0.9;
  const double z = (u - mu) / 0.7;
  const double base = -0.5 * z * z - std::log(0.7) -
                      0.5 * std::log(2.0 * std::numbers::pi);
  const double jac = std::log(2.0) + std::log(1.0 - std::tanh(u) * std::tanh(u));
  CHECK_THAT(pol.log_prob(obs, (VectorXd(1) << u).finished()),
             WithinRel(base - jac, 1e-12));
}

TEST_CASE("gaussian log-prob gradients match central differences",
          "[neural]") {
  Rng rng(15);
  const VectorXd lo = (VectorXd(2) << -3.0, 0.1).finished();
  const VectorXd hi = (VectorXd(2) << 3.0, 2.0).finished();
  nn::GaussianPolicy pol(std::vector<int>{3, 5, 2}, lo, hi, rng);
  pol.log_std << std::log(0.8), std::log(0.4);

  Rng probe(16);
  for (int rep = 0; rep < 5; ++rep) {
    const VectorXd obs = random_vec(3, probe);
    const auto s = pol.sample(obs, probe);
    const double coef = probe.normal();

    auto gnet = pol.net.zero_grads();
    VectorXd glog_std = VectorXd::Zero(2);
    pol.log_prob_backward(obs, s.presquash, coef, gnet, glog_std);

    for (std::size_t l = 0; l < pol.net.layer_count(); ++l) {
      MatrixXd& wm = pol.net.weights()[l];
      for (Eigen::Index r = 0; r < wm.rows(); ++r)
        for (Eigen::Index c = 0; c < wm.cols(); ++c) {
          const double keep = wm(r, c);
          wm(r, c) = keep + kFdStep;
          const double up = coef * pol.log_prob(obs, s.presquash);
          wm(r, c) = keep - kFdStep;
          const double dn = coef * pol.log_prob(obs, s.presquash);
          wm(r, c) = keep;
          REQUIRE(grad_close(gnet.w[l](r, c), (up - dn) / (2.0 * kFdStep)));
        }
    }
    for (int d = 0; d < 2; ++d) {
      const double keep = pol.log_std[d];
      pol.log_std[d] = keep + kFdStep;
      const double up = coef * pol.log_prob(obs, s.presquash);
      pol.log_std[d] = keep - kFdStep;
      const double dn = coef * pol.log_prob(obs, s.presquash);
      pol.log_std[d] = keep;
      REQUIRE(grad_close(glog_std[d], (up - dn) / (2.0 * kFdStep)));
    }
  }
}

TEST_CASE("floored sigma dimensions get no log-std gradient", "[neural]") {
  Rng rng(17);
  const VectorXd lo = VectorXd::Constant(2, -1.0);
  const VectorXd hi = VectorXd::Constant(2, 1.0);
  nn::GaussianPolicy pol(std::vector<int>{2, 2}, lo, hi, rng, 1e-3);
  pol.log_std << std::log(0.5), -20.0;  // second dim far below the floor
  CHECK_THAT(pol.stddev()[1], WithinRel(1e-3, 1e-12));

  const VectorXd obs = VectorXd::Zero(2);
  Rng act(18);
  const auto s = pol.sample(obs, act);
  auto gnet = pol.net.zero_grads();
  VectorXd glog_std = VectorXd::Zero(2);
  pol.log_prob_backward(obs, s.presquash, 1.0, gnet, glog_std);
  CHECK(glog_std[1] == 0.0);
  VectorXd gh = VectorXd::Zero(2);
  pol.entropy_backward(1.0, gh);
  CHECK(gh[0] == 1.0);
  CHECK(gh[1] == 0.0);
}

TEST_CASE("gaussian entropy matches the diagonal closed form", "[neural]") {
  Rng rng(19);
  const VectorXd lo = VectorXd::Constant(2, -1.0);
  const VectorXd hi = VectorXd::Constant(2, 1.0);
  nn::GaussianPolicy pol(std::vector<int>{2, 2}, lo, hi, rng);
  pol.log_std << std::log(0.3), std::log(1.7);
  const double want = 2.0 * 0.5 * std::log(2.0 * std::numbers::pi *
                                            std::numbers::e) +
                      std::log(0.3) + std::log(1.7);
  CHECK_THAT(pol.entropy(), WithinRel(want, 1e-12));
}

TEST_CASE("log-std ceiling projects back to the initial width", "[neural]") {
  Rng rng(21);
  const VectorXd lo = (VectorXd(2) << -4.0, 0.0).finished();
  const VectorXd hi = (VectorXd(2) << 4.0, 1.0).finished();
  nn::GaussianPolicy pol(std::vector<int>{1, 2}, lo, hi, rng);
  pol.log_std << 3.0, -2.0;
  pol.apply_log_std_ceiling();
  CHECK_THAT(pol.log_std[0], WithinRel(std::log(4.0), 1e-12));
  CHECK(pol.log_std[1] == -2.0);  // below the ceiling: untouched
}

TEST_CASE("gaussian policy round-trips through a text checkpoint",
          "[neural]") {
  Rng rng(22);
  const VectorXd lo = VectorXd::Constant(3, -2.0);
  const VectorXd hi = VectorXd::Constant(3, 2.0);
  nn::GaussianPolicy pol(std::vector<int>{4, 6, 3}, lo, hi, rng);
  pol.log_std << -0.3, 0.1, -1.7;

  std::stringstream ss;
  pol.save(ss);
  nn::GaussianPolicy back;
  back.load(ss);

  for (std::size_t l = 0; l < pol.net.layer_count(); ++l) {
    REQUIRE(back.net.weights()[l] == pol.net.weights()[l]);
    REQUIRE(back.net.biases()[l] == pol.net.biases()[l]);
  }
  REQUIRE(back.log_std == pol.log_std);

  // Same stream, same draws, same actions, bit for bit.
  Rng a(23), b(23);
  const VectorXd obs = random_vec(4, a);
  Rng a2(24), b2(24);
  const auto sa = pol.sample(obs, a2);
  const auto sb = back.sample(obs, b2);
  REQUIRE(sa.action == sb.action);
  REQUIRE(sa.log_prob == sb.log_prob);

  std::stringstream bad("gauss??");
  CHECK_THROWS_AS(back.load(bad), std::runtime_error);
}

TEST_CASE("bernoulli sampling never returns an empty selection", "[neural]") {
  Rng rng(25);
  nn::BernoulliPolicy pol(std::vector<int>{2, 4, 3}, rng);
  Rng act(26);
  for (int i = 0; i < 300; ++i) {
    const auto s = pol.sample(random_vec(2, act), act);
    int on = 0;
    for (int b : s.bits) on += b;
    REQUIRE(on >= 1);
    REQUIRE(std::isfinite(s.log_prob));
  }
}

TEST_CASE("hopeless logits force the most probable bit", "[neural]") {
  Rng rng(27);
  nn::BernoulliPolicy pol(std::vector<int>{1, 3}, rng);
  // Drive all logits strongly negative through the biases; zero the weights
  // so the observation cannot flip the sign.
  pol.net.weights()[0].setZero();
  pol.net.biases()[0] << -50.0, -30.0, -40.0;
  Rng act(28);
  const auto s = pol.sample((VectorXd(1) << 0.4).finished(), act);
  CHECK(s.forced);
  CHECK(s.bits == std::vector<int>{0, 1, 0});  // least-negative logit wins
  const auto g = pol.greedy((VectorXd(1) << 0.4).finished());
  CHECK(g == std::vector<int>{0, 1, 0});
}

TEST_CASE("bernoulli log-prob is the sum of per-bit terms", "[neural]") {
  Rng rng(29);
  nn::BernoulliPolicy pol(std::vector<int>{2, 2}, rng);
  const VectorXd obs = random_vec(2, rng);
  const VectorXd logits = pol.net.forward(obs);
  const std::vector<int> bits{1, 0};
  const double want = std::log(nn::detail::sigmoid(logits[0])) +
                      std::log(1.0 - nn::detail::sigmoid(logits[1]));
  CHECK_THAT(pol.log_prob(obs, bits), WithinRel(want, 1e-9));
  const std::vector<int> wrong{1, 0, 1};
  CHECK_THROWS_AS(pol.log_prob(obs, wrong), std::invalid_argument);
}

TEST_CASE("bernoulli gradients match central differences", "[neural]") {
  Rng rng(30);
  nn::BernoulliPolicy pol(std::vector<int>{3, 4, 3}, rng);
  Rng probe(31);
  for (int rep = 0; rep < 5; ++rep) {
    const VectorXd obs = random_vec(3, probe);
    const auto s = pol.sample(obs, probe);
    const double coef = probe.normal();

    auto gnet = pol.net.zero_grads();
    pol.log_prob_backward(obs, s.bits, coef, gnet);
    for (std::size_t l = 0; l < pol.net.layer_count(); ++l) {
      MatrixXd& wm = pol.net.weights()[l];
      for (Eigen::Index r = 0; r < wm.rows(); ++r)
        for (Eigen::Index c = 0; c < wm.cols(); ++c) {
          const double keep = wm(r, c);
          wm(r, c) = keep + kFdStep;
          const double up = coef * pol.log_prob(obs, s.bits);
          wm(r, c) = keep - kFdStep;
          const double dn = coef * pol.log_prob(obs, s.bits);
          wm(r, c) = keep;
          REQUIRE(grad_close(gnet.w[l](r, c), (up - dn) / (2.0 * kFdStep)));
        }
    }

    // Entropy gradient against the same scheme.
    auto gh = pol.net.zero_grads();
    pol.entropy_backward(obs, coef, gh);
    MatrixXd& wm = pol.net.weights()[0];
    for (Eigen::Index r = 0; r < wm.rows(); ++r) {
      const double keep = wm(r, 0);
      wm(r, 0) = keep + kFdStep;
      const double up = coef * pol.entropy(obs);
      wm(r, 0) = keep - kFdStep;
      const double dn = coef * pol.entropy(obs);
      wm(r, 0) = keep;
      REQUIRE(grad_close(gh.w[0](r, 0), (up - dn) / (2.0 * kFdStep)));
    }
  }
}

TEST_CASE("bernoulli policy round-trips through a text checkpoint",
          "[neural]") {
  Rng rng(32);
  nn::BernoulliPolicy pol(std::vector<int>{3, 5, 4}, rng);
  std::stringstream ss;
  pol.save(ss);
  nn::BernoulliPolicy back;
  back.load(ss);
  for (std::size_t l = 0; l < pol.net.layer_count(); ++l) {
    REQUIRE(back.net.weights()[l] == pol.net.weights()[l]);
    REQUIRE(back.net.biases()[l] == pol.net.biases()[l]);
  }
  std::stringstream bad("mlp 1 ...");
  CHECK_THROWS_AS(back.load(bad), std::runtime_error);
}

TEST_CASE("mlp checkpoint text survives a round trip bit for bit",
          "[neural]") {
  Rng rng(33);
  nn::Mlp net(std::vector<int>{7, 9, 3}, rng);
  std::stringstream ss;
  net.save(ss);
  nn::Mlp back;
  back.load(ss);
  std::stringstream again;
  back.save(again);
  CHECK(ss.str() == again.str());

  std::stringstream truncated("mlp 2\n2 2 0.5 0.5");
  nn::Mlp t;
  CHECK_THROWS_AS(t.load(truncated), std::runtime_error);
}
