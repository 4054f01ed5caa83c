#pragma once
// Small dense networks and policy heads, gradients written out by hand.
// Everything here is deterministic given the Rng streams passed in, and
// everything serializes to plain text with max_digits10 precision so a
// checkpoint restores bit-identical parameters.
//
// Contents:
//   Mlp              affine + tanh hidden layers, identity output, exact
//                    reverse-mode gradients
//   AdamState        bias-corrected Adam over an Mlp (plus one optional
//                    free vector, used for a policy's log-std)
//   GaussianPolicy   tanh-squashed diagonal Gaussian over a box, with the
//                    change-of-variables term handled exactly
//   BernoulliPolicy  independent per-bit Bernoulli from logits

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"
#include "version.hpp"

namespace auvcov::neural {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

// log(1 - tanh(u)^2), stable for large |u| (the naive form underflows to
// log(0) around |u| ~ 19).
inline double log_one_minus_tanh_sq(double u) {
  const double a = std::abs(u);
  return 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
}

inline void write_scalar(std::ostream& os, double v) {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  os.precision(old);
}

inline void write_vector(std::ostream& os, const VectorXd& v) {
  os << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    os << ' ';
    write_scalar(os, v[i]);
  }
  os << '\n';
}

inline VectorXd read_vector(std::istream& is) {
  Eigen::Index n = 0;
  is >> n;
  if (!is || n < 0) throw std::runtime_error("checkpoint: bad vector size");
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) is >> v[i];
  if (!is) throw std::runtime_error("checkpoint: truncated vector");
  return v;
}

inline void write_matrix(std::ostream& os, const MatrixXd& m) {
  os << m.rows() << ' ' << m.cols();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      os << ' ';
      write_scalar(os, m(r, c));
    }
  os << '\n';
}

inline MatrixXd read_matrix(std::istream& is) {
  Eigen::Index rows = 0, cols = 0;
  is >> rows >> cols;
  if (!is || rows < 0 || cols < 0)
    throw std::runtime_error("checkpoint: bad matrix shape");
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) is >> m(r, c);
  if (!is) throw std::runtime_error("checkpoint: truncated matrix");
  return m;
}

inline void expect_token(std::istream& is, const std::string& want) {
  std::string got;
  is >> got;
  if (!is || got != want)
    throw std::runtime_error("checkpoint: expected '" + want + "', got '" +
                             got + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------

class Mlp {
 public:
  struct Cache {
    // acts[0] is the input, acts[l] the post-activation output of layer l.
    std::vector<VectorXd> acts;
  };

  struct Grads {
    std::vector<MatrixXd> w;
    std::vector<VectorXd> b;

    void set_zero() {
      for (auto& m : w) m.setZero();
      for (auto& v : b) v.setZero();
    }
    void add(const Grads& o) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] += o.w[i];
        b[i] += o.b[i];
      }
    }
    void scale(double s) {
      for (auto& m : w) m *= s;
      for (auto& v : b) v *= s;
    }
    double squared_norm() const {
      double n = 0.0;
      for (const auto& m : w) n += m.squaredNorm();
      for (const auto& v : b) n += v.squaredNorm();
      return n;
    }
  };

  Mlp() = default;

  // widths include input and output, e.g. {12, 64, 64, 4}. Glorot-uniform
  // weights, zero biases; the draw order (layer by layer, row-major) is part
  // of the determinism contract.
  Mlp(std::span<const int> widths, Rng& rng) {
    if (widths.size() < 2)
      throw std::invalid_argument("Mlp: need at least input and output width");
    for (int w : widths)
      if (w < 1) throw std::invalid_argument("Mlp: non-positive width");
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const int in = widths[l], out = widths[l + 1];
      const double limit = std::sqrt(6.0 / (in + out));
      MatrixXd w(out, in);
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c)
          w(r, c) = rng.uniform(-limit, limit);
      w_.push_back(std::move(w));
      b_.emplace_back(VectorXd::Zero(out));
    }
  }

  int input_width() const { return static_cast<int>(w_.front().cols()); }
  int output_width() const { return static_cast<int>(w_.back().rows()); }
  std::size_t layer_count() const { return w_.size(); }
  const std::vector<MatrixXd>& weights() const { return w_; }
  const std::vector<VectorXd>& biases() const { return b_; }
  std::vector<MatrixXd>& weights() { return w_; }
  std::vector<VectorXd>& biases() { return b_; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& m : w_) n += static_cast<std::size_t>(m.size());
    for (const auto& v : b_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  VectorXd forward(const VectorXd& x) const {
    check_input(x);
    VectorXd a = x;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      a = (w_[l] * a + b_[l]).eval();
      if (l + 1 < w_.size()) a = a.array().tanh().matrix();
    }
    return a;
  }

  VectorXd forward(const VectorXd& x, Cache& cache) const {
    check_input(x);
    cache.acts.assign(1, x);
    cache.acts.reserve(w_.size() + 1);
    VectorXd a = x;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      a = (w_[l] * a + b_[l]).eval();
      if (l + 1 < w_.size()) a = a.array().tanh().matrix();
      cache.acts.push_back(a);
    }
    return a;
  }

  Grads zero_grads() const {
    Grads g;
    for (const auto& m : w_) g.w.emplace_back(MatrixXd::Zero(m.rows(), m.cols()));
    for (const auto& v : b_) g.b.emplace_back(VectorXd::Zero(v.size()));
    return g;
  }

  // Reverse pass. `dLdy` is the loss gradient at the output; gradients are
  // accumulated (not assigned) into `grads`. Returns dL/dx.
  VectorXd backward(const Cache& cache, const VectorXd& dLdy,
                    Grads& grads) const {
    if (cache.acts.size() != w_.size() + 1)
      throw std::invalid_argument("Mlp::backward: cache does not match net");
    if (dLdy.size() != output_width())
      throw std::invalid_argument("Mlp::backward: bad output gradient size");
    VectorXd delta = dLdy;  // dL/dz for the current layer
    for (std::size_t l = w_.size(); l-- > 0;) {
      if (l + 1 < w_.size()) {
        // cache.acts[l + 1] = tanh(z); tanh' = 1 - tanh^2
        delta = (delta.array() *
                 (1.0 - cache.acts[l + 1].array().square()))
                    .matrix();
      }
      grads.w[l] += delta * cache.acts[l].transpose();
      grads.b[l] += delta;
      if (l > 0) delta = (w_[l].transpose() * delta).eval();
    }
    return w_.front().transpose() * delta;
  }

  void save(std::ostream& os) const {
    os << "mlp " << w_.size() << '\n';
    for (std::size_t l = 0; l < w_.size(); ++l) {
      detail::write_matrix(os, w_[l]);
      detail::write_vector(os, b_[l]);
    }
  }

  void load(std::istream& is) {
    detail::expect_token(is, "mlp");
    std::size_t layers = 0;
    is >> layers;
    if (!is || layers == 0) throw std::runtime_error("checkpoint: bad mlp");
    w_.clear();
    b_.clear();
    for (std::size_t l = 0; l < layers; ++l) {
      w_.push_back(detail::read_matrix(is));
      b_.push_back(detail::read_vector(is));
    }
  }

 private:
  void check_input(const VectorXd& x) const {
    if (w_.empty()) throw std::logic_error("Mlp: forward on empty net");
    if (x.size() != input_width())
      throw std::invalid_argument("Mlp: input size mismatch");
  }

  std::vector<MatrixXd> w_;
  std::vector<VectorXd> b_;
};

// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over one Mlp, optionally covering one extra free
// vector (a policy's log-std) under the same step counter.
class AdamState {
 public:
  AdamState() = default;

  AdamState(const Mlp& net, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& m : net.weights())
      mw_.emplace_back(MatrixXd::Zero(m.rows(), m.cols())),
          vw_.emplace_back(MatrixXd::Zero(m.rows(), m.cols()));
    for (const auto& v : net.biases())
      mb_.emplace_back(VectorXd::Zero(v.size())),
          vb_.emplace_back(VectorXd::Zero(v.size()));
  }

  void attach_extra(Eigen::Index size) {
    mx_ = VectorXd::Zero(size);
    vx_ = VectorXd::Zero(size);
    has_extra_ = true;
  }

  long long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }

  void step(Mlp& net, const Mlp::Grads& g) {
    begin_step(net, g);
    apply_net(net, g);
  }

  void step(Mlp& net, const Mlp::Grads& g, VectorXd& extra,
            const VectorXd& extra_grad) {
    if (!has_extra_ || extra.size() != mx_.size())
      throw std::logic_error("AdamState: extra vector not attached");
    begin_step(net, g);
    apply_net(net, g);
    update(mx_, vx_, extra, extra_grad);
  }

  void save(std::ostream& os) const {
    os << "adam " << t_ << ' ' << (has_extra_ ? 1 : 0) << ' ';
    detail::write_scalar(os, cfg_.lr);
    os << ' ';
    detail::write_scalar(os, cfg_.beta1);
    os << ' ';
    detail::write_scalar(os, cfg_.beta2);
    os << ' ';
    detail::write_scalar(os, cfg_.eps);
    os << '\n';
    for (std::size_t l = 0; l < mw_.size(); ++l) {
      detail::write_matrix(os, mw_[l]);
      detail::write_matrix(os, vw_[l]);
      detail::write_vector(os, mb_[l]);
      detail::write_vector(os, vb_[l]);
    }
    if (has_extra_) {
      detail::write_vector(os, mx_);
      detail::write_vector(os, vx_);
    }
  }

  void load(std::istream& is, const Mlp& net) {
    detail::expect_token(is, "adam");
    int extra = 0;
    is >> t_ >> extra >> cfg_.lr >> cfg_.beta1 >> cfg_.beta2 >> cfg_.eps;
    if (!is) throw std::runtime_error("checkpoint: bad adam header");
    mw_.clear();
    vw_.clear();
    mb_.clear();
    vb_.clear();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      mw_.push_back(detail::read_matrix(is));
      vw_.push_back(detail::read_matrix(is));
      mb_.push_back(detail::read_vector(is));
      vb_.push_back(detail::read_vector(is));
    }
    has_extra_ = extra != 0;
    if (has_extra_) {
      mx_ = detail::read_vector(is);
      vx_ = detail::read_vector(is);
    }
  }

 private:
  void begin_step(const Mlp& net, const Mlp::Grads& g) {
    if (mw_.size() != net.layer_count() || g.w.size() != net.layer_count())
      throw std::logic_error("AdamState: shape mismatch");
    ++t_;
    bc1_ = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    bc2_ = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  }

  void apply_net(Mlp& net, const Mlp::Grads& g) {
    for (std::size_t l = 0; l < mw_.size(); ++l) {
      update(mw_[l], vw_[l], net.weights()[l], g.w[l]);
      update(mb_[l], vb_[l], net.biases()[l], g.b[l]);
    }
  }

  template <typename T>
  void update(T& m, T& v, T& param, const T& grad) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
    v = (cfg_.beta2 * v.array() + (1.0 - cfg_.beta2) * grad.array().square())
            .matrix();
    param.array() -=
        cfg_.lr * (m.array() / bc1_) / ((v.array() / bc2_).sqrt() + cfg_.eps);
  }

  AdamConfig cfg_;
  long long t_ = 0;
  double bc1_ = 1.0, bc2_ = 1.0;
  std::vector<MatrixXd> mw_, vw_;
  std::vector<VectorXd> mb_, vb_;
  VectorXd mx_, vx_;
  bool has_extra_ = false;
};

// ---------------------------------------------------------------------------

// Diagonal Gaussian with state-dependent mean (from the net) and a learnable
// state-independent log-std vector, squashed through tanh and mapped onto
// [lo, hi] per dimension. The pre-squash draw is kept alongside the action:
// importance ratios later evaluate both old and new log-probs at the same
// pre-squash point, so the squash Jacobian is computed exactly and cancels
// nothing it should not.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;

  GaussianPolicy(std::span<const int> widths, VectorXd lo, VectorXd hi,
                 Rng& rng, double std_floor = 1e-3)
      : net(widths, rng), lo_(std::move(lo)), hi_(std::move(hi)),
        std_floor_(std_floor) {
    if (lo_.size() != net.output_width() || hi_.size() != net.output_width())
      throw std::invalid_argument("GaussianPolicy: bounds size mismatch");
    for (Eigen::Index d = 0; d < lo_.size(); ++d)
      if (!(lo_[d] < hi_[d]))
        throw std::invalid_argument("GaussianPolicy: empty action interval");
    // Start wide: sigma = half the action range per dimension.
    log_std = (0.5 * (hi_ - lo_).array()).log().matrix();
  }

  struct Sample {
    VectorXd action;     // in [lo, hi]
    VectorXd presquash;  // the raw Gaussian draw u
    double log_prob = 0.0;
  };

  int action_dim() const { return static_cast<int>(lo_.size()); }
  const VectorXd& lower() const { return lo_; }
  const VectorXd& upper() const { return hi_; }
  double std_floor() const { return std_floor_; }

  VectorXd stddev() const {
    return log_std.array().exp().max(std_floor_).matrix();
  }

  VectorXd squash(const VectorXd& presquash) const {
    return (lo_.array() + (hi_ - lo_).array() *
                              (presquash.array().tanh() + 1.0) * 0.5)
        .matrix();
  }

  Sample sample(const VectorXd& obs, Rng& rng) const {
    const VectorXd mu = net.forward(obs);
    const VectorXd sd = stddev();
    VectorXd u(mu.size());
    for (Eigen::Index d = 0; d < mu.size(); ++d)
      u[d] = mu[d] + sd[d] * rng.normal();
    Sample s;
    s.presquash = u;
    s.action = squash(u);
    s.log_prob = log_prob_at(mu, u);
    return s;
  }

  // Deterministic action: squashed mean.
  VectorXd mean_action(const VectorXd& obs) const {
    return squash(net.forward(obs));
  }

  double log_prob(const VectorXd& obs, const VectorXd& presquash) const {
    return log_prob_at(net.forward(obs), presquash);
  }

  // log pi(u | obs) with the squash correction, and its gradient scaled by
  // `coef` accumulated into (gnet, glog_std). Floored dimensions get zero
  // log-std gradient. Returns the log-prob.
  double log_prob_backward(const VectorXd& obs, const VectorXd& presquash,
                           double coef, Mlp::Grads& gnet,
                           VectorXd& glog_std) const {
    Mlp::Cache cache;
    const VectorXd mu = net.forward(obs, cache);
    const VectorXd sd = stddev();
    VectorXd dmu(mu.size());
    const double lp = log_prob_at(mu, presquash);
    for (Eigen::Index d = 0; d < mu.size(); ++d) {
      const double z = (presquash[d] - mu[d]) / sd[d];
      dmu[d] = coef * z / sd[d];
      if (std::exp(log_std[d]) > std_floor_)
        glog_std[d] += coef * (z * z - 1.0);
    }
    net.backward(cache, dmu, gnet);
    return lp;
  }

  // Entropy of the pre-squash Gaussian (the usual surrogate for squashed
  // policies); gradient w.r.t. log_std is 1 per un-floored dimension.
  double entropy() const {
    const VectorXd sd = stddev();
    double h = 0.0;
    for (Eigen::Index d = 0; d < sd.size(); ++d)
      h += 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e) +
           std::log(sd[d]);
    return h;
  }

  void entropy_backward(double coef, VectorXd& glog_std) const {
    for (Eigen::Index d = 0; d < log_std.size(); ++d)
      if (std::exp(log_std[d]) > std_floor_) glog_std[d] += coef;
  }

  // Projects log_std back to its initial ceiling, ln(range/2). Past that
  // sigma the squashed samples already sit on the box edges, so letting the
  // entropy bonus ratchet it further only bloats the parameter; callers run
  // this after every optimizer step.
  void apply_log_std_ceiling() {
    for (Eigen::Index d = 0; d < log_std.size(); ++d)
      log_std[d] =
          std::min(log_std[d], std::log(0.5 * (hi_[d] - lo_[d])));
  }

  void save(std::ostream& os) const {
    os << "gaussian\n";
    net.save(os);
    detail::write_vector(os, log_std);
    detail::write_vector(os, lo_);
    detail::write_vector(os, hi_);
    detail::write_scalar(os, std_floor_);
    os << '\n';
  }

  void load(std::istream& is) {
    detail::expect_token(is, "gaussian");
    net.load(is);
    log_std = detail::read_vector(is);
    lo_ = detail::read_vector(is);
    hi_ = detail::read_vector(is);
    is >> std_floor_;
    if (!is) throw std::runtime_error("checkpoint: bad gaussian policy");
  }

  Mlp net;
  VectorXd log_std;

 private:
  double log_prob_at(const VectorXd& mu, const VectorXd& u) const {
    const VectorXd sd = stddev();
    double lp = 0.0;
    for (Eigen::Index d = 0; d < mu.size(); ++d) {
      const double z = (u[d] - mu[d]) / sd[d];
      lp += -0.5 * z * z - std::log(sd[d]) -
            0.5 * std::log(2.0 * std::numbers::pi);
      // da/du = (hi - lo)/2 * (1 - tanh^2(u))
      lp -= std::log(0.5 * (hi_[d] - lo_[d])) +
            detail::log_one_minus_tanh_sq(u[d]);
    }
    return lp;
  }

  VectorXd lo_, hi_;
  double std_floor_ = 1e-3;
};

// ---------------------------------------------------------------------------

// Independent Bernoulli bits from logits. Sampling never returns the all-zero
// vector: it resamples up to `kMaxResample` times and then forces the most
// probable bit, because an empty selection is not a legal delegation.
class BernoulliPolicy {
 public:
  static constexpr int kMaxResample = 10;

  BernoulliPolicy() = default;

  BernoulliPolicy(std::span<const int> widths, Rng& rng) : net(widths, rng) {}

  struct Sample {
    std::vector<int> bits;
    double log_prob = 0.0;
    bool forced = false;  // all-zero persisted through every resample
  };

  int bit_count() const { return net.output_width(); }

  Sample sample(const VectorXd& obs, Rng& rng) const {
    const VectorXd logits = net.forward(obs);
    Sample s;
    s.bits.assign(logits.size(), 0);
    for (int attempt = 0; attempt <= kMaxResample; ++attempt) {
      bool any = false;
      for (Eigen::Index d = 0; d < logits.size(); ++d) {
        s.bits[d] = rng.uniform01() < detail::sigmoid(logits[d]) ? 1 : 0;
        any = any || s.bits[d] != 0;
      }
      if (any) {
        s.log_prob = log_prob_at(logits, s.bits);
        return s;
      }
    }
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    s.bits.assign(logits.size(), 0);
    s.bits[best] = 1;
    s.forced = true;
    s.log_prob = log_prob_at(logits, s.bits);
    return s;
  }

  // Deterministic: bit on where p > 1/2; if that leaves nothing, the most
  // probable bit alone.
  std::vector<int> greedy(const VectorXd& obs) const {
    const VectorXd logits = net.forward(obs);
    std::vector<int> bits(logits.size(), 0);
    bool any = false;
    for (Eigen::Index d = 0; d < logits.size(); ++d) {
      bits[d] = logits[d] > 0.0 ? 1 : 0;
      any = any || bits[d] != 0;
    }
    if (!any) {
      Eigen::Index best = 0;
      logits.maxCoeff(&best);
      bits[best] = 1;
    }
    return bits;
  }

  double log_prob(const VectorXd& obs, std::span<const int> bits) const {
    return log_prob_at(net.forward(obs), bits);
  }

  // As GaussianPolicy::log_prob_backward: accumulates coef * dlogp/dtheta.
  double log_prob_backward(const VectorXd& obs, std::span<const int> bits,
                           double coef, Mlp::Grads& gnet) const {
    Mlp::Cache cache;
    const VectorXd logits = net.forward(obs, cache);
    if (static_cast<Eigen::Index>(bits.size()) != logits.size())
      throw std::invalid_argument("BernoulliPolicy: bit count mismatch");
    VectorXd dlogits(logits.size());
    for (Eigen::Index d = 0; d < logits.size(); ++d)
      dlogits[d] = coef * (static_cast<double>(bits[d]) -
                           detail::sigmoid(logits[d]));
    net.backward(cache, dlogits, gnet);
    return log_prob_at(logits, bits);
  }

  // Mean per-bit entropy and its gradient (dH_d/dlogit_d = -l p (1 - p)).
  double entropy_backward(const VectorXd& obs, double coef,
                          Mlp::Grads& gnet) const {
    Mlp::Cache cache;
    const VectorXd logits = net.forward(obs, cache);
    const double inv = 1.0 / static_cast<double>(logits.size());
    double h = 0.0;
    VectorXd dlogits(logits.size());
    for (Eigen::Index d = 0; d < logits.size(); ++d) {
      const double l = logits[d];
      const double p = detail::sigmoid(l);
      h += (p * detail::softplus(-l) + (1.0 - p) * detail::softplus(l)) * inv;
      dlogits[d] = coef * inv * (-l * p * (1.0 - p));
    }
    net.backward(cache, dlogits, gnet);
    return h;
  }

  double entropy(const VectorXd& obs) const {
    const VectorXd logits = net.forward(obs);
    double h = 0.0;
    for (Eigen::Index d = 0; d < logits.size(); ++d) {
      const double p = detail::sigmoid(logits[d]);
      h += p * detail::softplus(-logits[d]) +
           (1.0 - p) * detail::softplus(logits[d]);
    }
    return h / static_cast<double>(logits.size());
  }

  void save(std::ostream& os) const {
    os << "bernoulli\n";
    net.save(os);
  }

  void load(std::istream& is) {
    detail::expect_token(is, "bernoulli");
    net.load(is);
  }

  Mlp net;

 private:
  static double log_prob_at(const VectorXd& logits, std::span<const int> bits) {
    if (static_cast<Eigen::Index>(bits.size()) != logits.size())
      throw std::invalid_argument("BernoulliPolicy: bit count mismatch");
    double lp = 0.0;
    for (Eigen::Index d = 0; d < logits.size(); ++d)
      lp -= bits[d] != 0 ? detail::softplus(-logits[d])
                         : detail::softplus(logits[d]);
    return lp;
  }
};

}  // namespace auvcov::neural
