#pragma once

// Actor (state embedding, decision module, squashed-Gaussian head, adapter)
// and critic networks, plus the flat observation layout they consume.
//
// Flat observation column:
//   [count | items (max_items * 2) | a-block | b-block]
// The defender a-block is s_AT (4) and the b-block is s_Boids (8, with the
// Boids action in its last two rows). The attacker uses a 2-wide a-block and
// no b-block.

#include <algorithm>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "arboids/apf.hpp"
#include "arboids/engagement.hpp"
#include "arboids/nn.hpp"

namespace arboids {

struct ObsLayout {
  int max_items = 2;
  int item_dim = 2;
  int a_dim = 4;
  int b_dim = 8;

  int items_offset() const { return 1; }
  int a_offset() const { return 1 + max_items * item_dim; }
  int b_offset() const { return a_offset() + a_dim; }
  int flat_dim() const { return b_offset() + b_dim; }
  bool has_boids() const { return b_dim >= 2; }
  int boids_action_offset() const { return b_offset() + b_dim - 2; }

  friend bool operator==(const ObsLayout&, const ObsLayout&) = default;
};

inline ObsLayout defender_layout(int n_defenders, bool include_boids) {
  return {std::max(0, n_defenders - 1), 2, 4, include_boids ? 8 : 0};
}

inline ObsLayout attacker_layout(int n_defenders) { return {n_defenders, 2, 2, 0}; }

/// Fixed input scaling applied when observations are flattened.
struct FeatureScaling {
  double distance = 1.0 / 60.0;
  double bearing = 1.0 / kPi;
  double f_sep = 0.05;
  double f_ali = 0.5;
  double f_coh = 0.1;
};

template <typename S>
void flatten_defender_observation(const Observation& obs, const ObsLayout& layout,
                                  std::span<S> out, const FeatureScaling& sc = {}) {
  std::fill(out.begin(), out.end(), S(0));
  const int count = std::min<int>(static_cast<int>(obs.teammates.size()), layout.max_items);
  out[0] = static_cast<S>(count);
  for (int k = 0; k < count; ++k) {
    out[static_cast<std::size_t>(1 + 2 * k)] = static_cast<S>(obs.teammates[static_cast<std::size_t>(k)].bearing * sc.bearing);
    out[static_cast<std::size_t>(2 + 2 * k)] = static_cast<S>(obs.teammates[static_cast<std::size_t>(k)].distance * sc.distance);
  }
  auto a = out.subspan(static_cast<std::size_t>(layout.a_offset()), 4);
  const auto& at = obs.attacker_target;
  a[0] = static_cast<S>(at.phi_a * sc.bearing);
  a[1] = static_cast<S>(at.d_a * sc.distance);
  a[2] = static_cast<S>(at.phi_t * sc.bearing);
  a[3] = static_cast<S>(at.d_t * sc.distance);
  if (layout.b_dim == 8) {
    auto b = out.subspan(static_cast<std::size_t>(layout.b_offset()), 8);
    const auto& bo = obs.boids;
    b[0] = static_cast<S>(bo.f_sep.x() * sc.f_sep);
    b[1] = static_cast<S>(bo.f_sep.y() * sc.f_sep);
    b[2] = static_cast<S>(bo.f_ali.x() * sc.f_ali);
    b[3] = static_cast<S>(bo.f_ali.y() * sc.f_ali);
    b[4] = static_cast<S>(bo.f_coh.x() * sc.f_coh);
    b[5] = static_cast<S>(bo.f_coh.y() * sc.f_coh);
    b[6] = static_cast<S>(bo.a_boids.a_left);
    b[7] = static_cast<S>(bo.a_boids.a_right);
  }
}

template <typename S>
void flatten_attacker_observation(const AttackerObservation& obs, const ObsLayout& layout,
                                  std::span<S> out, const FeatureScaling& sc = {}) {
  std::fill(out.begin(), out.end(), S(0));
  const int count = std::min<int>(static_cast<int>(obs.defenders.size()), layout.max_items);
  out[0] = static_cast<S>(count);
  for (int k = 0; k < count; ++k) {
    out[static_cast<std::size_t>(1 + 2 * k)] = static_cast<S>(obs.defenders[static_cast<std::size_t>(k)].bearing * sc.bearing);
    out[static_cast<std::size_t>(2 + 2 * k)] = static_cast<S>(obs.defenders[static_cast<std::size_t>(k)].distance * sc.distance);
  }
  auto a = out.subspan(static_cast<std::size_t>(layout.a_offset()), 2);
  a[0] = static_cast<S>(obs.phi_t * sc.bearing);
  a[1] = static_cast<S>(obs.d_t * sc.distance);
}

struct NetworkShape {
  int embed_dim = 64;
  int width = 256;
  int depth = 3;
  int adapter_hidden = 64;
  /// Decision hidden layer fed to the adapter; -1 selects the last one
  /// (the layer just below the policy head).
  int adapter_feature_layer = -1;

  int feature_layer() const { return adapter_feature_layer < 0 ? depth - 1 : adapter_feature_layer; }
  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

namespace detail {

template <typename S>
struct EmbeddingIds {
  int set = -1, a = -1, b = -1, action = -1;
};

/// Splits a flat observation batch into its blocks.
template <typename S>
struct ObsBlocks {
  std::vector<int> counts;
  nn::Matrix<S> items;  // item_dim x (B * max_items)
  nn::Matrix<S> a;
  nn::Matrix<S> b;
};

template <typename S>
ObsBlocks<S> split_obs(const ObsLayout& L, const nn::Matrix<S>& obs) {
  if (obs.rows() != L.flat_dim())
    throw RuntimeError("observation dim " + std::to_string(obs.rows()) + " does not match layout dim " +
                       std::to_string(L.flat_dim()));
  const Eigen::Index batch = obs.cols();
  ObsBlocks<S> blk;
  blk.counts.resize(static_cast<std::size_t>(batch));
  blk.items.resize(L.item_dim, batch * L.max_items);
  for (Eigen::Index c = 0; c < batch; ++c) {
    blk.counts[static_cast<std::size_t>(c)] =
        std::clamp(static_cast<int>(std::lround(static_cast<double>(obs(0, c)))), 0, L.max_items);
    for (int k = 0; k < L.max_items; ++k)
      blk.items.col(c * L.max_items + k) = obs.block(L.items_offset() + k * L.item_dim, c, L.item_dim, 1);
  }
  blk.a = obs.middleRows(L.a_offset(), L.a_dim);
  if (L.b_dim > 0) blk.b = obs.middleRows(L.b_offset(), L.b_dim);
  return blk;
}

template <typename S>
struct EmbedCache {
  nn::MeanEmbedCache<S> set;
  nn::DenseCache<S> a, b, action;
  int set_rows = 0, a_rows = 0, b_rows = 0, action_rows = 0;
};

template <typename S>
nn::Matrix<S> embed_forward(const nn::ParameterSet<S>& p, const EmbeddingIds<S>& ids, const ObsLayout& L,
                            const nn::Matrix<S>& obs, const nn::Matrix<S>* action, EmbedCache<S>& c) {
  const auto blk = split_obs(L, obs);
  const nn::Matrix<S> e_set = nn::mean_embed_forward(p.layer(ids.set), blk.items, blk.counts, L.max_items, c.set);
  const nn::Matrix<S>& e_a = nn::dense_forward(p.layer(ids.a), blk.a, c.a);
  const int E = p.layer(ids.set).spec.out_dim;
  int rows = 2 * E;
  if (ids.b >= 0) rows += p.layer(ids.b).spec.out_dim;
  if (ids.action >= 0) rows += p.layer(ids.action).spec.out_dim;
  nn::Matrix<S> cat(rows, obs.cols());
  int r = 0;
  cat.middleRows(r, E) = e_set;
  c.set_rows = E;
  r += E;
  cat.middleRows(r, e_a.rows()) = e_a;
  c.a_rows = static_cast<int>(e_a.rows());
  r += c.a_rows;
  if (ids.b >= 0) {
    const nn::Matrix<S>& e_b = nn::dense_forward(p.layer(ids.b), blk.b, c.b);
    cat.middleRows(r, e_b.rows()) = e_b;
    c.b_rows = static_cast<int>(e_b.rows());
    r += c.b_rows;
  }
  if (ids.action >= 0) {
    const nn::Matrix<S>& e_act = nn::dense_forward(p.layer(ids.action), *action, c.action);
    cat.middleRows(r, e_act.rows()) = e_act;
    c.action_rows = static_cast<int>(e_act.rows());
  }
  return cat;
}

/// Returns the gradient w.r.t. the action input when an action embedding exists.
template <typename S>
nn::Matrix<S> embed_backward(const nn::ParameterSet<S>& p, const EmbeddingIds<S>& ids, const EmbedCache<S>& c,
                             const nn::Matrix<S>& dcat, nn::ParameterSet<S>* grads) {
  int r = 0;
  auto g = [&](int id) { return grads ? &grads->layer(id) : nullptr; };
  if (grads) nn::mean_embed_backward(p.layer(ids.set), c.set, dcat.middleRows(r, c.set_rows).eval(), g(ids.set));
  r += c.set_rows;
  if (grads)
    nn::dense_backward(p.layer(ids.a), c.a, dcat.middleRows(r, c.a_rows).eval(), g(ids.a),
                       static_cast<nn::Matrix<S>*>(nullptr));
  r += c.a_rows;
  if (ids.b >= 0) {
    if (grads)
      nn::dense_backward(p.layer(ids.b), c.b, dcat.middleRows(r, c.b_rows).eval(), g(ids.b),
                         static_cast<nn::Matrix<S>*>(nullptr));
    r += c.b_rows;
  }
  nn::Matrix<S> d_action;
  if (ids.action >= 0)
    nn::dense_backward(p.layer(ids.action), c.action, dcat.middleRows(r, c.action_rows).eval(),
                       g(ids.action), &d_action);
  return d_action;
}

}  // namespace detail

// ---------------------------------------------------------------------------

template <typename S>
struct ActorOutput {
  nn::Matrix<S> mean;       // 2 x B
  nn::Matrix<S> log_std;    // 2 x B (clamped)
  nn::Matrix<S> action;     // 2 x B, tanh-squashed
  nn::RowVector<S> log_prob;
  nn::RowVector<S> theta;   // empty when the actor has no adapter
};

template <typename S>
struct ActorCache {
  const nn::ParameterSet<S>* owner = nullptr;
  std::uint64_t version = 0;
  detail::EmbedCache<S> embed;
  std::vector<nn::DenseCache<S>> decision;
  nn::DenseCache<S> head;
  nn::Matrix<S> noise;
  nn::Matrix<S> log_std_raw;
  bool stochastic = false;
  nn::DenseCache<S> adapter_hidden, adapter_out;
  ActorOutput<S> out;
};

/// Policy network: embedding + decision module + squashed-Gaussian head, with
/// an optional adapter producing the blend weight theta in [0, 1].
template <typename S>
class ActorNetwork {
 public:
  ActorNetwork() = default;
  ActorNetwork(ObsLayout layout, NetworkShape shape, bool adaptive)
      : layout_(layout), shape_(shape), adaptive_(adaptive) {
    using nn::Activation;
    if (adaptive && !layout.has_boids())
      throw ConfigError("adaptive actor requires the Boids observation block");
    if (shape.depth < 1) throw ConfigError("network.depth must be >= 1");
    const int E = shape.embed_dim;
    ids_.set = params_.add("embed.set", {layout.item_dim, E, Activation::leaky_relu});
    ids_.a = params_.add("embed.at", {layout.a_dim, E, Activation::leaky_relu});
    if (layout.b_dim > 0) ids_.b = params_.add("embed.boids", {layout.b_dim, E, Activation::leaky_relu});
    int in = E * (layout.b_dim > 0 ? 3 : 2);
    std::vector<int> dec;
    for (int k = 0; k < shape.depth; ++k) {
      dec.push_back(params_.add("decision." + std::to_string(k), {in, shape.width, Activation::leaky_relu}));
      in = shape.width;
    }
    decision_ = nn::Mlp<S>(dec);
    head_ = params_.add("head", {shape.width, 4, Activation::linear});
    if (adaptive) {
      if (shape.feature_layer() >= shape.depth) throw ConfigError("network.adapter_feature_layer out of range");
      adapter0_ = params_.add("adapter.hidden", {4 + shape.width, shape.adapter_hidden, Activation::leaky_relu});
      adapter1_ = params_.add("adapter.out", {shape.adapter_hidden, 1, Activation::tanh});
    }
  }

  void initialize(std::mt19937_64& rng) {
    std::vector<int> small{head_};
    if (adaptive_) small.push_back(adapter1_);
    params_.init_uniform(rng, small, 0.01);
  }

  const ObsLayout& layout() const { return layout_; }
  const NetworkShape& shape() const { return shape_; }
  bool adaptive() const { return adaptive_; }
  nn::ParameterSet<S>& params() { return params_; }
  const nn::ParameterSet<S>& params() const { return params_; }

  /// When `noise` is null the action is the deterministic tanh(mean).
  ActorOutput<S> forward(const nn::Matrix<S>& obs, const nn::Matrix<S>* noise, ActorCache<S>& c) const {
    c.owner = &params_;
    c.version = params_.version();
    const nn::Matrix<S> cat = detail::embed_forward(params_, ids_, layout_, obs, static_cast<const nn::Matrix<S>*>(nullptr), c.embed);
    const nn::Matrix<S>& h = decision_.forward(params_, cat, c.decision);
    const nn::Matrix<S>& head = nn::dense_forward(params_.layer(head_), h, c.head);
    const Eigen::Index B = obs.cols();
    ActorOutput<S>& o = c.out;
    o.mean = head.topRows(2);
    c.log_std_raw = head.bottomRows(2);
    o.log_std = c.log_std_raw.cwiseMax(static_cast<S>(nn::kLogStdMin)).cwiseMin(static_cast<S>(nn::kLogStdMax));
    c.stochastic = noise != nullptr;
    if (noise) {
      if (noise->rows() != 2 || noise->cols() != B) throw RuntimeError("actor noise must be 2 x batch");
      c.noise = *noise;
    } else {
      c.noise = nn::Matrix<S>::Zero(2, B);
    }
    auto smp = nn::squash_sample(o.mean, o.log_std, c.noise);
    o.action = std::move(smp.action);
    o.log_prob = std::move(smp.log_prob);
    if (adaptive_) {
      nn::Matrix<S> in(4 + shape_.width, B);
      in.topRows(2) = o.action;
      in.middleRows(2, 2) = obs.middleRows(layout_.boids_action_offset(), 2);
      in.bottomRows(shape_.width) = c.decision[static_cast<std::size_t>(shape_.feature_layer())].output;
      const nn::Matrix<S>& hid = nn::dense_forward(params_.layer(adapter0_), in, c.adapter_hidden);
      const nn::Matrix<S>& t = nn::dense_forward(params_.layer(adapter1_), hid, c.adapter_out);
      o.theta = t.row(0).unaryExpr([](S x) { return nn::tanh_to_unit(x); });
    } else {
      o.theta.resize(0);
    }
    return o;
  }

  /// Accumulates gradients of a loss L given dL/daction, dL/dlog_prob and
  /// dL/dtheta (ignored without an adapter).
  void backward(const ActorCache<S>& c, const nn::Matrix<S>& d_action, const nn::RowVector<S>& d_log_prob,
                const nn::RowVector<S>* d_theta, nn::ParameterSet<S>& grads) const {
    if (c.owner != &params_ || c.version != params_.version())
      throw RuntimeError("stale actor cache: parameters changed since forward()");
    const ActorOutput<S>& o = c.out;
    nn::Matrix<S> da = d_action;
    nn::Matrix<S> d_feature;
    const int fl = shape_.feature_layer();
    if (adaptive_ && d_theta) {
      // theta = (tanh(z) + 1) / 2
      nn::Matrix<S> dt = (*d_theta / S(2));
      nn::Matrix<S> d_hid, d_in;
      nn::dense_backward(params_.layer(adapter1_), c.adapter_out, dt, &grads.layer(adapter1_), &d_hid);
      nn::dense_backward(params_.layer(adapter0_), c.adapter_hidden, d_hid, &grads.layer(adapter0_), &d_in);
      da += d_in.topRows(2);
      d_feature = d_in.bottomRows(shape_.width);
    }
    nn::Matrix<S> d_mean, d_log_std;
    nn::squash_backward(o.log_std, c.noise, o.action, da, d_log_prob, d_mean, d_log_std);
    // clamp passes gradient only strictly inside the range
    for (Eigen::Index k = 0; k < d_log_std.size(); ++k) {
      const S raw = c.log_std_raw.data()[k];
      if (raw < static_cast<S>(nn::kLogStdMin) || raw > static_cast<S>(nn::kLogStdMax)) d_log_std.data()[k] = S(0);
    }
    nn::Matrix<S> d_head(4, o.mean.cols());
    d_head.topRows(2) = d_mean;
    d_head.bottomRows(2) = d_log_std;
    nn::Matrix<S> dh;
    nn::dense_backward(params_.layer(head_), c.head, d_head, &grads.layer(head_), &dh);
    const nn::Matrix<S> dcat = decision_.backward(params_, c.decision, dh, &grads,
                                                  d_feature.size() ? &d_feature : nullptr, fl);
    detail::embed_backward(params_, ids_, c.embed, dcat, &grads);
  }

 private:
  ObsLayout layout_{};
  NetworkShape shape_{};
  bool adaptive_ = false;
  nn::ParameterSet<S> params_;
  detail::EmbeddingIds<S> ids_;
  nn::Mlp<S> decision_;
  int head_ = -1;
  int adapter0_ = -1;
  int adapter1_ = -1;
};

/// theta = (tanh(z) + 1) / 2 over the adapter's concatenated inputs.
template <typename S>
S adapter_forward(const nn::Vector<S>& a_drl, const nn::Vector<S>& a_boids, const nn::Vector<S>& hidden,
                  const nn::ParameterSet<S>& adapter_params) {
  nn::Matrix<S> in(a_drl.size() + a_boids.size() + hidden.size(), 1);
  in << a_drl, a_boids, hidden;
  std::vector<int> ids(static_cast<std::size_t>(adapter_params.size()));
  for (int i = 0; i < adapter_params.size(); ++i) ids[static_cast<std::size_t>(i)] = i;
  std::vector<nn::DenseCache<S>> caches;
  const nn::Matrix<S>& t = nn::Mlp<S>(ids).forward(adapter_params, in, caches);
  return nn::tanh_to_unit(t(0, 0));
}

// ---------------------------------------------------------------------------

template <typename S>
struct CriticCache {
  const nn::ParameterSet<S>* owner = nullptr;
  std::uint64_t version = 0;
  detail::EmbedCache<S> embed;
  std::vector<nn::DenseCache<S>> decision;
};

/// Q(s, action input). The action input is [a_drl; theta] for the adaptive
/// learner and a_drl alone otherwise.
template <typename S>
class CriticNetwork {
 public:
  CriticNetwork() = default;
  CriticNetwork(ObsLayout layout, NetworkShape shape, int action_dim)
      : layout_(layout), shape_(shape), action_dim_(action_dim) {
    using nn::Activation;
    const int E = shape.embed_dim;
    ids_.set = params_.add("embed.set", {layout.item_dim, E, Activation::leaky_relu});
    ids_.a = params_.add("embed.at", {layout.a_dim, E, Activation::leaky_relu});
    if (layout.b_dim > 0) ids_.b = params_.add("embed.boids", {layout.b_dim, E, Activation::leaky_relu});
    ids_.action = params_.add("embed.action", {action_dim, E, Activation::leaky_relu});
    int in = E * (layout.b_dim > 0 ? 4 : 3);
    std::vector<int> dec;
    for (int k = 0; k < shape.depth; ++k) {
      dec.push_back(params_.add("decision." + std::to_string(k), {in, shape.width, Activation::leaky_relu}));
      in = shape.width;
    }
    dec.push_back(params_.add("q", {shape.width, 1, Activation::linear}));
    decision_ = nn::Mlp<S>(dec);
  }

  void initialize(std::mt19937_64& rng) { params_.init_uniform(rng); }

  int action_dim() const { return action_dim_; }
  const ObsLayout& layout() const { return layout_; }
  nn::ParameterSet<S>& params() { return params_; }
  const nn::ParameterSet<S>& params() const { return params_; }

  nn::RowVector<S> forward(const nn::Matrix<S>& obs, const nn::Matrix<S>& action, CriticCache<S>& c) const {
    if (action.rows() != action_dim_ || action.cols() != obs.cols())
      throw RuntimeError("critic action input has wrong shape");
    c.owner = &params_;
    c.version = params_.version();
    const nn::Matrix<S> cat = detail::embed_forward(params_, ids_, layout_, obs, &action, c.embed);
    return decision_.forward(params_, cat, c.decision).row(0);
  }

  nn::RowVector<S> forward(const nn::Matrix<S>& obs, const nn::Matrix<S>& action) const {
    CriticCache<S> c;
    return forward(obs, action, c);
  }

  /// Returns dL/d(action input); parameter gradients go to `grads` when non-null.
  nn::Matrix<S> backward(const CriticCache<S>& c, const nn::RowVector<S>& dq, nn::ParameterSet<S>* grads) const {
    if (c.owner != &params_ || c.version != params_.version())
      throw RuntimeError("stale critic cache: parameters changed since forward()");
    const nn::Matrix<S> dcat = decision_.backward(params_, c.decision, nn::Matrix<S>(dq), grads);
    return detail::embed_backward(params_, ids_, c.embed, dcat, grads);
  }

 private:
  ObsLayout layout_{};
  NetworkShape shape_{};
  int action_dim_ = 2;
  nn::ParameterSet<S> params_;
  detail::EmbeddingIds<S> ids_;
  nn::Mlp<S> decision_;
};

}  // namespace arboids
