#pragma once

// Soft actor-critic with the adaptive residual blend
//   a_exec = theta(s) * a_drl + (1 - theta(s)) * a_boids.
// One learner owns the shared actor, twin critics, their targets and the
// replay buffer; every defender's transitions feed the same buffer.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "arboids/networks.hpp"
#include "arboids/nn.hpp"

namespace arboids {

/// arboids: adaptive blend; residual: clip(a_drl + a_boids); vanilla: a_drl only.
enum class BlendMode { arboids, residual, vanilla };

inline std::string to_string(BlendMode m) {
  switch (m) {
    case BlendMode::arboids: return "arboids";
    case BlendMode::residual: return "rp";
    case BlendMode::vanilla: return "vanilla_sac";
  }
  return "?";
}

struct LearnerConfig {
  double gamma = 0.99;
  double lr = 1e-4;
  int batch = 4096;
  std::int64_t buffer_capacity = 1'000'000;
  double polyak = 0.005;
  double target_entropy = -2.0;
  std::int64_t warmup_steps = 5000;
  int updates_per_step = 1;
  int update_every = 1;
  double initial_alpha = 0.2;
  double theta_noise = 0.1;

  const LearnerConfig& validated() const {
    validate();
    return *this;
  }

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("learner.gamma must be in (0, 1)");
    if (!(lr > 0.0)) throw ConfigError("learner.lr must be > 0");
    if (batch < 1) throw ConfigError("learner.batch must be >= 1");
    if (buffer_capacity < 1) throw ConfigError("learner.buffer_capacity must be >= 1");
    if (!(polyak >= 0.0 && polyak <= 1.0)) throw ConfigError("learner.polyak must be in [0, 1]");
    if (warmup_steps < 0) throw ConfigError("learner.warmup_steps must be >= 0");
    if (updates_per_step < 0 || update_every < 1) throw ConfigError("learner update cadence is invalid");
    if (!(initial_alpha > 0.0)) throw ConfigError("learner.initial_alpha must be > 0");
    if (theta_noise < 0.0) throw ConfigError("learner.theta_noise must be >= 0");
  }
};

/// One replay record; observations are flat columns in the learner's layout.
struct Transition {
  std::vector<float> obs;
  std::array<float, 2> a_drl{};
  float theta = 1.0f;
  float reward = 0.0f;
  std::vector<float> next_obs;
  bool done = false;
  std::array<float, 2> a_boids{};
};

template <typename S>
struct Batch {
  nn::Matrix<S> obs, next_obs;
  nn::Matrix<S> a_drl;      // 2 x B
  nn::RowVector<S> theta;   // 1 x B
  nn::RowVector<S> reward;
  nn::RowVector<S> done;
  nn::Matrix<S> a_boids;    // 2 x B
  Eigen::Index size() const { return obs.cols(); }
};

/// Shared ring buffer; sampling is uniform without replacement inside a batch.
class ReplayBuffer {
 public:
  ReplayBuffer(int obs_dim, std::int64_t capacity) : obs_dim_(obs_dim), capacity_(capacity) {
    if (capacity <= 0) throw RuntimeError("replay capacity must be > 0");
    if (obs_dim <= 0) throw RuntimeError("replay obs_dim must be > 0");
  }

  void push(const Transition& t) {
    if (static_cast<int>(t.obs.size()) != obs_dim_ || static_cast<int>(t.next_obs.size()) != obs_dim_)
      throw RuntimeError("transition observation size does not match the replay buffer");
    ensure_allocated();
    const Eigen::Index c = static_cast<Eigen::Index>(head_);
    obs_.col(c) = Eigen::Map<const Eigen::VectorXf>(t.obs.data(), obs_dim_);
    next_obs_.col(c) = Eigen::Map<const Eigen::VectorXf>(t.next_obs.data(), obs_dim_);
    a_drl_.col(c) << t.a_drl[0], t.a_drl[1];
    a_boids_.col(c) << t.a_boids[0], t.a_boids[1];
    theta_(c) = t.theta;
    reward_(c) = t.reward;
    done_(c) = t.done ? 1.0f : 0.0f;
    head_ = (head_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }

  void push(std::span<const Transition> ts) {
    for (const auto& t : ts) push(t);
  }

  std::int64_t size() const { return size_; }
  std::int64_t capacity() const { return capacity_; }
  int obs_dim() const { return obs_dim_; }

  /// Oldest-first index of the slot holding record `k` (0 = oldest).
  std::int64_t slot(std::int64_t k) const { return size_ < capacity_ ? k : (head_ + k) % capacity_; }

  std::vector<std::int64_t> sample_indices(int batch, std::mt19937_64& rng) const {
    if (batch > size_)
      throw RuntimeError("cannot sample " + std::to_string(batch) + " from a buffer holding " +
                         std::to_string(size_));
    // Floyd's algorithm: distinct indices in [0, size).
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(batch));
    std::unordered_set<std::int64_t> seen;
    seen.reserve(static_cast<std::size_t>(batch) * 2);
    for (std::int64_t j = size_ - batch; j < size_; ++j) {
      std::uniform_int_distribution<std::int64_t> dist(0, j);
      const std::int64_t r = dist(rng);
      if (seen.insert(r).second)
        out.push_back(r);
      else {
        seen.insert(j);
        out.push_back(j);
      }
    }
    return out;
  }

  template <typename S>
  Batch<S> gather(std::span<const std::int64_t> idx) const {
    const auto B = static_cast<Eigen::Index>(idx.size());
    Batch<S> b;
    b.obs.resize(obs_dim_, B);
    b.next_obs.resize(obs_dim_, B);
    b.a_drl.resize(2, B);
    b.a_boids.resize(2, B);
    b.theta.resize(B);
    b.reward.resize(B);
    b.done.resize(B);
    for (Eigen::Index k = 0; k < B; ++k) {
      const auto c = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(k)]);
      b.obs.col(k) = obs_.col(c).cast<S>();
      b.next_obs.col(k) = next_obs_.col(c).cast<S>();
      b.a_drl.col(k) = a_drl_.col(c).cast<S>();
      b.a_boids.col(k) = a_boids_.col(c).cast<S>();
      b.theta(k) = static_cast<S>(theta_(c));
      b.reward(k) = static_cast<S>(reward_(c));
      b.done(k) = static_cast<S>(done_(c));
    }
    return b;
  }

  template <typename S>
  Batch<S> sample(int batch, std::mt19937_64& rng) const {
    const auto idx = sample_indices(batch, rng);
    return gather<S>(idx);
  }

 private:
  void ensure_allocated() {
    // Grow geometrically so a 1e6-capacity buffer does not allocate up front.
    const std::int64_t need = std::min(capacity_, size_ + 1);
    if (obs_.cols() >= need) return;
    const std::int64_t cols = std::min(capacity_, std::max<std::int64_t>(need, obs_.cols() * 2 + 1024));
    auto grow = [&](auto& m, Eigen::Index rows) { m.conservativeResize(rows, static_cast<Eigen::Index>(cols)); };
    grow(obs_, obs_dim_);
    grow(next_obs_, obs_dim_);
    grow(a_drl_, 2);
    grow(a_boids_, 2);
    theta_.conservativeResize(static_cast<Eigen::Index>(cols));
    reward_.conservativeResize(static_cast<Eigen::Index>(cols));
    done_.conservativeResize(static_cast<Eigen::Index>(cols));
  }

  int obs_dim_;
  std::int64_t capacity_;
  std::int64_t head_ = 0;
  std::int64_t size_ = 0;
  Eigen::MatrixXf obs_, next_obs_, a_drl_, a_boids_;
  Eigen::VectorXf theta_, reward_, done_;
};

enum class ActMode { train, eval };

struct ActionChoice {
  NormalizedAction a_exec;
  std::array<double, 2> a_drl{};
  double theta = 1.0;  ///< blend weight actually used (after exploration noise)
};

/// Convex blend, then component-wise clip to [-1, 1].
inline NormalizedAction blend_actions(const std::array<double, 2>& a_drl, const NormalizedAction& a_boids,
                                      double theta) {
  return {clip(theta * a_drl[0] + (1.0 - theta) * a_boids.a_left, -1.0, 1.0),
          clip(theta * a_drl[1] + (1.0 - theta) * a_boids.a_right, -1.0, 1.0)};
}

inline NormalizedAction residual_actions(const std::array<double, 2>& a_drl, const NormalizedAction& a_boids) {
  return {clip(a_drl[0] + a_boids.a_left, -1.0, 1.0), clip(a_drl[1] + a_boids.a_right, -1.0, 1.0)};
}

/// theta' = clip(theta + N(0, sigma), 0, 1)
inline double explore_theta(double theta, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  return clip(theta + n(rng), 0.0, 1.0);
}

struct UpdateStats {
  double critic1_loss = 0.0;
  double critic2_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double mean_log_prob = 0.0;
  double mean_theta = 0.0;
};

/// Action selection for any actor, learner-owned or loaded from a checkpoint.
/// Train mode samples the Gaussian and perturbs theta; eval mode is deterministic.
template <typename S>
std::vector<ActionChoice> select_actions(const ActorNetwork<S>& actor, BlendMode blend, const nn::Matrix<S>& obs,
                                         std::span<const NormalizedAction> a_boids, ActMode mode,
                                         std::mt19937_64& rng, double theta_noise,
                                         std::optional<double> theta_override = std::nullopt) {
  const Eigen::Index B = obs.cols();
  ActorCache<S> cache;
  nn::Matrix<S> noise;
  if (mode == ActMode::train) {
    std::normal_distribution<double> n01(0.0, 1.0);
    noise.resize(2, B);
    for (Eigen::Index k = 0; k < noise.size(); ++k) noise.data()[k] = static_cast<S>(n01(rng));
  }
  const ActorOutput<S>& out = actor.forward(obs, mode == ActMode::train ? &noise : nullptr, cache);
  std::vector<ActionChoice> res(static_cast<std::size_t>(B));
  for (Eigen::Index b = 0; b < B; ++b) {
    auto& r = res[static_cast<std::size_t>(b)];
    r.a_drl = {static_cast<double>(out.action(0, b)), static_cast<double>(out.action(1, b))};
    const NormalizedAction boids = a_boids.empty() ? NormalizedAction{} : a_boids[static_cast<std::size_t>(b)];
    switch (blend) {
      case BlendMode::arboids: {
        double th = static_cast<double>(out.theta(b));
        if (mode == ActMode::train) th = explore_theta(th, theta_noise, rng);
        if (theta_override) th = *theta_override;
        r.theta = th;
        r.a_exec = blend_actions(r.a_drl, boids, th);
        break;
      }
      case BlendMode::residual:
        r.theta = 1.0;
        r.a_exec = residual_actions(r.a_drl, boids);
        break;
      case BlendMode::vanilla:
        r.theta = 1.0;
        r.a_exec = {clip(r.a_drl[0], -1.0, 1.0), clip(r.a_drl[1], -1.0, 1.0)};
        break;
    }
  }
  return res;
}

template <typename S>
class SacLearner {
 public:
  SacLearner(ObsLayout layout, NetworkShape shape, BlendMode mode, LearnerConfig cfg, std::uint64_t seed)
      : cfg_(cfg.validated()),
        mode_(mode),
        actor_(layout, shape, mode == BlendMode::arboids),
        critic_{CriticNetwork<S>(layout, shape, action_input_dim(mode)),
                CriticNetwork<S>(layout, shape, action_input_dim(mode))},
        rng_(seed),
        buffer_(layout.flat_dim(), cfg.buffer_capacity) {
    if (mode != BlendMode::vanilla && !layout.has_boids())
      throw ConfigError("blend mode " + to_string(mode) + " needs the Boids observation block");
    actor_.initialize(rng_);
    critic_[0].initialize(rng_);
    critic_[1].initialize(rng_);
    target_[0] = critic_[0];
    target_[1] = critic_[1];
    actor_opt_ = nn::AdamState<S>::like(actor_.params());
    critic_opt_[0] = nn::AdamState<S>::like(critic_[0].params());
    critic_opt_[1] = nn::AdamState<S>::like(critic_[1].params());
    log_alpha_ = std::log(cfg_.initial_alpha);
  }

  static int action_input_dim(BlendMode m) { return m == BlendMode::arboids ? 3 : 2; }

  const LearnerConfig& config() const { return cfg_; }
  LearnerConfig& mutable_config() { return cfg_; }
  BlendMode mode() const { return mode_; }
  const ObsLayout& layout() const { return actor_.layout(); }
  ActorNetwork<S>& actor() { return actor_; }
  const ActorNetwork<S>& actor() const { return actor_; }
  CriticNetwork<S>& critic(int k) { return critic_[k]; }
  const CriticNetwork<S>& critic(int k) const { return critic_[k]; }
  CriticNetwork<S>& target(int k) { return target_[k]; }
  const CriticNetwork<S>& target(int k) const { return target_[k]; }
  nn::AdamState<S>& actor_optimizer() { return actor_opt_; }
  nn::AdamState<S>& critic_optimizer(int k) { return critic_opt_[k]; }
  nn::ScalarAdam& alpha_optimizer() { return alpha_opt_; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  std::mt19937_64& rng() { return rng_; }
  double alpha() const { return std::exp(log_alpha_); }
  double log_alpha() const { return log_alpha_; }
  void set_log_alpha(double v) { log_alpha_ = v; }
  std::int64_t updates() const { return updates_; }
  void set_updates(std::int64_t u) { updates_ = u; }

  nn::AdamConfig adam() const { return {cfg_.lr, 0.9, 0.999, 1e-8}; }

  /// Batched action selection for several agents sharing this actor. Each
  /// column of `obs` is one agent; `a_boids` supplies the baseline actions.
  std::vector<ActionChoice> select_actions(const nn::Matrix<S>& obs, std::span<const NormalizedAction> a_boids,
                                           ActMode mode, std::mt19937_64& rng,
                                           std::optional<double> theta_override = std::nullopt) const {
    return arboids::select_actions(actor_, mode_, obs, a_boids, mode, rng, cfg_.theta_noise, theta_override);
  }

  nn::Matrix<S> critic_action_input(const nn::Matrix<S>& a_drl, const nn::RowVector<S>& theta) const {
    if (mode_ != BlendMode::arboids) return a_drl;
    nn::Matrix<S> in(3, a_drl.cols());
    in.topRows(2) = a_drl;
    in.row(2) = theta;
    return in;
  }

  /// Soft Bellman targets from the target critics, with next actions and
  /// noise-free theta drawn from the current actor.
  nn::RowVector<S> critic_targets(const Batch<S>& batch, const nn::Matrix<S>& next_noise) const {
    ActorCache<S> ac;
    const ActorOutput<S>& nxt = actor_.forward(batch.next_obs, &next_noise, ac);
    const nn::Matrix<S> act_in = critic_action_input(nxt.action, nxt.theta);
    const nn::RowVector<S> q1 = target_[0].forward(batch.next_obs, act_in);
    const nn::RowVector<S> q2 = target_[1].forward(batch.next_obs, act_in);
    const S alpha = static_cast<S>(this->alpha());
    const S gamma = static_cast<S>(cfg_.gamma);
    nn::RowVector<S> y(batch.size());
    for (Eigen::Index b = 0; b < batch.size(); ++b) {
      const S soft = std::min(q1(b), q2(b)) - alpha * nxt.log_prob(b);
      y(b) = batch.reward(b) + gamma * (S(1) - batch.done(b)) * soft;
    }
    return y;
  }

  /// Squared-error loss of critic k against fixed targets; gradients go to `grads`.
  S critic_loss(int k, const Batch<S>& batch, const nn::RowVector<S>& y, nn::ParameterSet<S>* grads) const {
    CriticCache<S> cc;
    const nn::Matrix<S> act_in = critic_action_input(batch.a_drl, batch.theta);
    const nn::RowVector<S> q = critic_[k].forward(batch.obs, act_in, cc);
    const nn::RowVector<S> diff = q - y;
    const S B = static_cast<S>(batch.size());
    if (grads) critic_[k].backward(cc, (S(2) / B) * diff, grads);
    return diff.squaredNorm() / B;
  }

  std::pair<double, double> critic_update(const Batch<S>& batch) {
    if (batch.size() == 0) throw RuntimeError("critic_update on an empty batch");
    nn::Matrix<S> noise = gaussian(2, batch.size());
    const nn::RowVector<S> y = critic_targets(batch, noise);
    double loss[2];
    for (int k = 0; k < 2; ++k) {
      auto grads = critic_[k].params().zeros_like();
      loss[k] = static_cast<double>(critic_loss(k, batch, y, &grads));
      nn::adam_step(critic_[k].params(), grads, critic_opt_[k], adam());
    }
    return {loss[0], loss[1]};
  }

  struct ActorLoss {
    S loss = 0;
    S mean_log_prob = 0;
    S mean_theta = 0;
  };

  /// mean[alpha * log pi(a|s) - min(Q1, Q2)(s, a, theta(s))] with the
  /// reparameterized action and a differentiable theta.
  ActorLoss actor_loss(const Batch<S>& batch, const nn::Matrix<S>& noise, nn::ParameterSet<S>* grads) const {
    ActorCache<S> ac;
    const ActorOutput<S>& out = actor_.forward(batch.obs, &noise, ac);
    const nn::Matrix<S> act_in = critic_action_input(out.action, out.theta);
    CriticCache<S> c1, c2;
    const nn::RowVector<S> q1 = critic_[0].forward(batch.obs, act_in, c1);
    const nn::RowVector<S> q2 = critic_[1].forward(batch.obs, act_in, c2);
    const Eigen::Index B = batch.size();
    const S alpha = static_cast<S>(this->alpha());
    ActorLoss res;
    nn::RowVector<S> dq1 = nn::RowVector<S>::Zero(B), dq2 = nn::RowVector<S>::Zero(B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const bool first = q1(b) <= q2(b);
      res.loss += alpha * out.log_prob(b) - (first ? q1(b) : q2(b));
      (first ? dq1 : dq2)(b) = S(-1) / static_cast<S>(B);
    }
    res.loss /= static_cast<S>(B);
    res.mean_log_prob = out.log_prob.mean();
    res.mean_theta = out.theta.size() ? out.theta.mean() : S(1);
    if (grads) {
      nn::Matrix<S> d_in = critic_[0].backward(c1, dq1, nullptr) + critic_[1].backward(c2, dq2, nullptr);
      const nn::RowVector<S> d_logp = nn::RowVector<S>::Constant(B, alpha / static_cast<S>(B));
      const nn::Matrix<S> d_act = d_in.topRows(2);
      nn::RowVector<S> d_theta;
      if (mode_ == BlendMode::arboids) d_theta = d_in.row(2);
      actor_.backward(ac, d_act, d_logp, mode_ == BlendMode::arboids ? &d_theta : nullptr, *grads);
    }
    return res;
  }

  ActorLoss actor_adapter_update(const Batch<S>& batch) {
    nn::Matrix<S> noise = gaussian(2, batch.size());
    auto grads = actor_.params().zeros_like();
    const ActorLoss l = actor_loss(batch, noise, &grads);
    nn::adam_step(actor_.params(), grads, actor_opt_, adam());
    return l;
  }

  /// Gradient of the temperature loss -log_alpha * (log pi + H_target) w.r.t. log_alpha.
  double temperature_gradient(double mean_log_prob) const { return -(mean_log_prob + cfg_.target_entropy); }

  double temperature_update(double mean_log_prob) {
    log_alpha_ = alpha_opt_.step(log_alpha_, temperature_gradient(mean_log_prob), adam());
    return alpha();
  }

  void soft_update_targets() {
    nn::soft_update(target_[0].params(), critic_[0].params(), cfg_.polyak);
    nn::soft_update(target_[1].params(), critic_[1].params(), cfg_.polyak);
  }

  UpdateStats update_from(const Batch<S>& batch) {
    UpdateStats st;
    auto [l1, l2] = critic_update(batch);
    st.critic1_loss = l1;
    st.critic2_loss = l2;
    const ActorLoss al = actor_adapter_update(batch);
    st.actor_loss = static_cast<double>(al.loss);
    st.mean_log_prob = static_cast<double>(al.mean_log_prob);
    st.mean_theta = static_cast<double>(al.mean_theta);
    st.alpha = temperature_update(st.mean_log_prob);
    soft_update_targets();
    ++updates_;
    return st;
  }

  UpdateStats update() {
    const int B = static_cast<int>(std::min<std::int64_t>(cfg_.batch, buffer_.size()));
    const Batch<S> batch = buffer_.sample<S>(B, rng_);
    return update_from(batch);
  }

 private:
  nn::Matrix<S> gaussian(Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> n01(0.0, 1.0);
    nn::Matrix<S> m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<S>(n01(rng_));
    return m;
  }

  LearnerConfig cfg_;
  BlendMode mode_;
  ActorNetwork<S> actor_;
  CriticNetwork<S> critic_[2];
  CriticNetwork<S> target_[2];
  nn::AdamState<S> actor_opt_;
  nn::AdamState<S> critic_opt_[2];
  nn::ScalarAdam alpha_opt_;
  double log_alpha_ = 0.0;
  std::int64_t updates_ = 0;
  std::mt19937_64 rng_;
  ReplayBuffer buffer_;
};

}  // namespace arboids
