#pragma once

// Dense-network machinery with exact reverse-mode gradients. Batches are
// stored column-wise: an (in_dim x B) matrix holds B samples.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "arboids/common.hpp"

namespace arboids::nn {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

enum class Activation { leaky_relu, tanh, linear };

inline constexpr double kLeakySlope = 0.01;

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::linear;
};

template <typename S>
struct Dense {
  std::string name;
  LayerSpec spec;
  Matrix<S> weight;  // out x in
  Vector<S> bias;    // out
};

/// Ordered collection of dense layers. Every non-const access bumps the
/// version so that forward caches taken earlier are detected as stale.
template <typename S>
class ParameterSet {
 public:
  int add(std::string name, LayerSpec spec) {
    if (spec.in_dim <= 0 || spec.out_dim <= 0)
      throw RuntimeError("layer '" + name + "' needs positive dimensions");
    Dense<S> d{std::move(name), spec, Matrix<S>::Zero(spec.out_dim, spec.in_dim),
               Vector<S>::Zero(spec.out_dim)};
    layers_.push_back(std::move(d));
    ++version_;
    return static_cast<int>(layers_.size()) - 1;
  }

  const Dense<S>& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }
  Dense<S>& layer(int i) {
    ++version_;
    return layers_.at(static_cast<std::size_t>(i));
  }
  int size() const { return static_cast<int>(layers_.size()); }
  std::uint64_t version() const { return version_; }
  void touch() { ++version_; }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  ParameterSet zeros_like() const {
    ParameterSet z;
    for (const auto& l : layers_) z.add(l.name, l.spec);
    return z;
  }

  void set_zero() {
    for (auto& l : layers_) {
      l.weight.setZero();
      l.bias.setZero();
    }
    ++version_;
  }

  /// Visits every scalar in a fixed order (layer, weight column-major, bias).
  template <typename F>
  void for_each_scalar(F&& f) {
    ++version_;
    for (auto& l : layers_) {
      for (Eigen::Index k = 0; k < l.weight.size(); ++k) f(l.weight.data()[k]);
      for (Eigen::Index k = 0; k < l.bias.size(); ++k) f(l.bias.data()[k]);
    }
  }
  template <typename F>
  void for_each_scalar(F&& f) const {
    for (const auto& l : layers_) {
      for (Eigen::Index k = 0; k < l.weight.size(); ++k) f(l.weight.data()[k]);
      for (Eigen::Index k = 0; k < l.bias.size(); ++k) f(l.bias.data()[k]);
    }
  }

  /// FNV-1a over the raw parameter bytes.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for_each_scalar([&](const S& x) {
      unsigned char bytes[sizeof(S)];
      std::memcpy(bytes, &x, sizeof(S));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    });
    return h;
  }

  template <typename T>
  ParameterSet<T> cast() const {
    ParameterSet<T> out;
    for (const auto& l : layers_) {
      const int i = out.add(l.name, l.spec);
      out.layer(i).weight = l.weight.template cast<T>();
      out.layer(i).bias = l.bias.template cast<T>();
    }
    return out;
  }

  bool same_shape(const ParameterSet& other) const {
    if (other.size() != size()) return false;
    for (int i = 0; i < size(); ++i) {
      const auto& a = layer(i).spec;
      const auto& b = other.layer(i).spec;
      if (a.in_dim != b.in_dim || a.out_dim != b.out_dim) return false;
    }
    return true;
  }

  /// Uniform fan-in initialization; layers listed in `small_init` are scaled by `small_scale`.
  void init_uniform(std::mt19937_64& rng, const std::vector<int>& small_init = {},
                    double small_scale = 0.01) {
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      auto& l = layers_[li];
      double bound = 1.0 / std::sqrt(static_cast<double>(l.spec.in_dim));
      for (int s : small_init)
        if (static_cast<std::size_t>(s) == li) bound *= small_scale;
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = static_cast<S>(dist(rng));
      for (Eigen::Index k = 0; k < l.bias.size(); ++k) l.bias.data()[k] = static_cast<S>(dist(rng));
    }
    ++version_;
  }

 private:
  std::vector<Dense<S>> layers_;
  std::uint64_t version_ = 0;
};

template <typename S>
Matrix<S> activate(const Matrix<S>& pre, Activation act) {
  switch (act) {
    case Activation::leaky_relu:
      return pre.unaryExpr([](S z) { return z > S(0) ? z : static_cast<S>(kLeakySlope) * z; });
    case Activation::tanh:
      return pre.array().tanh().matrix();
    case Activation::linear:
      break;
  }
  return pre;
}

/// d(activation)/d(pre), given both the pre-activation and the output.
template <typename S>
Matrix<S> activation_slope(const Matrix<S>& pre, const Matrix<S>& out, Activation act) {
  switch (act) {
    case Activation::leaky_relu:
      return pre.unaryExpr([](S z) { return z > S(0) ? S(1) : static_cast<S>(kLeakySlope); });
    case Activation::tanh:
      return (S(1) - out.array().square()).matrix();
    case Activation::linear:
      break;
  }
  return Matrix<S>::Ones(pre.rows(), pre.cols());
}

template <typename S>
struct DenseCache {
  Matrix<S> input;
  Matrix<S> pre;
  Matrix<S> output;
};

template <typename S>
const Matrix<S>& dense_forward(const Dense<S>& layer, const Matrix<S>& x, DenseCache<S>& cache) {
  if (x.rows() != layer.spec.in_dim)
    throw RuntimeError("layer '" + layer.name + "' expects input dim " +
                       std::to_string(layer.spec.in_dim) + ", got " + std::to_string(x.rows()));
  cache.input = x;
  cache.pre.noalias() = layer.weight * x;
  cache.pre.colwise() += layer.bias;
  cache.output = activate(cache.pre, layer.spec.activation);
  return cache.output;
}

/// Accumulates parameter gradients into `grad` (when non-null) and writes the
/// input gradient into `dinput` (when non-null).
template <typename S>
void dense_backward(const Dense<S>& layer, const DenseCache<S>& cache, const Matrix<S>& dout,
                    Dense<S>* grad, Matrix<S>* dinput) {
  Matrix<S> dpre = dout.cwiseProduct(activation_slope(cache.pre, cache.output, layer.spec.activation));
  if (grad) {
    grad->weight.noalias() += dpre * cache.input.transpose();
    grad->bias.noalias() += dpre.rowwise().sum();
  }
  if (dinput) dinput->noalias() = layer.weight.transpose() * dpre;
}

template <typename S>
struct ForwardCache {
  const ParameterSet<S>* owner = nullptr;
  std::uint64_t version = 0;
  std::vector<DenseCache<S>> layers;

  void bind(const ParameterSet<S>& params) {
    owner = &params;
    version = params.version();
  }
  void check(const ParameterSet<S>& params) const {
    if (owner != &params || version != params.version())
      throw RuntimeError("stale forward cache: parameters changed since forward()");
  }
};

/// Chain of layers addressed by index inside a ParameterSet.
template <typename S>
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> layer_ids) : ids_(std::move(layer_ids)) {}

  const std::vector<int>& layer_ids() const { return ids_; }
  int depth() const { return static_cast<int>(ids_.size()); }

  const Matrix<S>& forward(const ParameterSet<S>& params, const Matrix<S>& x,
                           std::vector<DenseCache<S>>& caches) const {
    caches.resize(ids_.size());
    const Matrix<S>* cur = &x;
    for (std::size_t k = 0; k < ids_.size(); ++k) cur = &dense_forward(params.layer(ids_[k]), *cur, caches[k]);
    return *cur;
  }

  /// Returns the input gradient. `extra_hidden_grad` optionally injects an
  /// additional gradient on the output of layer `extra_at` (0-based).
  Matrix<S> backward(const ParameterSet<S>& params, const std::vector<DenseCache<S>>& caches,
                     const Matrix<S>& upstream, ParameterSet<S>* grads,
                     const Matrix<S>* extra_hidden_grad = nullptr, int extra_at = -1) const {
    Matrix<S> g = upstream;
    Matrix<S> dx;
    for (int k = static_cast<int>(ids_.size()) - 1; k >= 0; --k) {
      if (extra_hidden_grad && k == extra_at) g += *extra_hidden_grad;
      Dense<S>* gl = grads ? &grads->layer(ids_[static_cast<std::size_t>(k)]) : nullptr;
      dense_backward(params.layer(ids_[static_cast<std::size_t>(k)]),
                     caches[static_cast<std::size_t>(k)], g, gl, &dx);
      g = std::move(dx);
    }
    return g;
  }

 private:
  std::vector<int> ids_;
};

template <typename S>
struct ForwardResult {
  Matrix<S> y;
  ForwardCache<S> cache;
};

template <typename S>
struct BackwardResult {
  ParameterSet<S> grads;
  Matrix<S> input_grad;
};

/// Plain feed-forward pass through every layer of `params` in order.
template <typename S>
ForwardResult<S> forward(const ParameterSet<S>& params, const Matrix<S>& x) {
  std::vector<int> ids(static_cast<std::size_t>(params.size()));
  for (int i = 0; i < params.size(); ++i) ids[static_cast<std::size_t>(i)] = i;
  ForwardResult<S> r;
  r.cache.bind(params);
  r.y = Mlp<S>(ids).forward(params, x, r.cache.layers);
  return r;
}

template <typename S>
BackwardResult<S> backward(const ParameterSet<S>& params, const ForwardCache<S>& cache,
                           const Matrix<S>& upstream) {
  cache.check(params);
  std::vector<int> ids(static_cast<std::size_t>(params.size()));
  for (int i = 0; i < params.size(); ++i) ids[static_cast<std::size_t>(i)] = i;
  BackwardResult<S> r{params.zeros_like(), {}};
  r.input_grad = Mlp<S>(ids).backward(params, cache.layers, upstream, &r.grads);
  return r;
}

// ---------------------------------------------------------------------------
// Mean observation embedding

template <typename S>
struct MeanEmbedCache {
  DenseCache<S> dense;
  std::vector<int> counts;
  int max_items = 0;
};

/// `items` is (item_dim x B*max_items); sample b owns columns
/// [b*max_items, b*max_items + counts[b]). Padding columns are ignored.
template <typename S>
Matrix<S> mean_embed_forward(const Dense<S>& shared, const Matrix<S>& items,
                             std::span<const int> counts, int max_items, MeanEmbedCache<S>& cache) {
  const auto batch = static_cast<Eigen::Index>(counts.size());
  cache.counts.assign(counts.begin(), counts.end());
  cache.max_items = max_items;
  Matrix<S> out = Matrix<S>::Zero(shared.spec.out_dim, batch);
  if (max_items == 0) {
    cache.dense = {};
    return out;
  }
  const Matrix<S>& h = dense_forward(shared, items, cache.dense);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int c = counts[static_cast<std::size_t>(b)];
    if (c <= 0) continue;
    // summing in sorted order makes the mean bit-identical under any item permutation
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
      std::array<S, 64> buf;
      std::vector<S> big;
      S* v = buf.data();
      if (c > static_cast<int>(buf.size())) {
        big.resize(static_cast<std::size_t>(c));
        v = big.data();
      }
      for (int k = 0; k < c; ++k) v[k] = h(r, b * max_items + k);
      std::sort(v, v + c);
      S sum = 0;
      for (int k = 0; k < c; ++k) sum += v[k];
      out(r, b) = sum / static_cast<S>(c);
    }
  }
  return out;
}

template <typename S>
void mean_embed_backward(const Dense<S>& shared, const MeanEmbedCache<S>& cache,
                         const Matrix<S>& dout, Dense<S>* grad) {
  if (cache.max_items == 0) return;
  const auto batch = static_cast<Eigen::Index>(cache.counts.size());
  Matrix<S> dh = Matrix<S>::Zero(shared.spec.out_dim, batch * cache.max_items);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int c = cache.counts[static_cast<std::size_t>(b)];
    for (int k = 0; k < c; ++k) dh.col(b * cache.max_items + k) = dout.col(b) / static_cast<S>(c);
  }
  dense_backward(shared, cache.dense, dh, grad, static_cast<Matrix<S>*>(nullptr));
}

/// Single-sample convenience form: mean of shared(item) over the list.
template <typename S>
Vector<S> mean_embed(std::span<const Vector<S>> items, const Dense<S>& shared) {
  if (items.empty()) return Vector<S>::Zero(shared.spec.out_dim);
  Matrix<S> m(shared.spec.in_dim, static_cast<Eigen::Index>(items.size()));
  for (std::size_t k = 0; k < items.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = items[k];
  const int count = static_cast<int>(items.size());
  MeanEmbedCache<S> cache;
  return mean_embed_forward(shared, m, std::span<const int>(&count, 1), count, cache).col(0);
}

// ---------------------------------------------------------------------------
// Tanh-squashed Gaussian policy head

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kSquashEps = 1e-6;

template <typename S>
struct SquashedSample {
  Matrix<S> action;    // tanh(mean + std * noise)
  RowVector<S> log_prob;
};

/// log_std must already be clamped; `noise` holds the standard-normal draws.
template <typename S>
SquashedSample<S> squash_sample(const Matrix<S>& mean, const Matrix<S>& log_std, const Matrix<S>& noise) {
  const S half_log_2pi = static_cast<S>(0.5 * std::log(2.0 * kPi));
  SquashedSample<S> out;
  const Matrix<S> u = mean + (log_std.array().exp() * noise.array()).matrix();
  out.action = u.array().tanh().matrix();
  out.log_prob = RowVector<S>::Zero(mean.cols());
  for (Eigen::Index b = 0; b < mean.cols(); ++b) {
    S lp = 0;
    for (Eigen::Index k = 0; k < mean.rows(); ++k) {
      const S a = out.action(k, b);
      lp += S(-0.5) * noise(k, b) * noise(k, b) - log_std(k, b) - half_log_2pi -
            std::log(S(1) - a * a + static_cast<S>(kSquashEps));
    }
    out.log_prob(b) = lp;
  }
  return out;
}

/// Gradients of a loss with respect to (mean, log_std) given dL/daction and
/// dL/dlog_prob, holding the noise fixed (reparameterization).
template <typename S>
void squash_backward(const Matrix<S>& log_std, const Matrix<S>& noise, const Matrix<S>& action,
                     const Matrix<S>& d_action, const RowVector<S>& d_log_prob, Matrix<S>& d_mean,
                     Matrix<S>& d_log_std) {
  d_mean.resize(action.rows(), action.cols());
  d_log_std.resize(action.rows(), action.cols());
  for (Eigen::Index b = 0; b < action.cols(); ++b) {
    for (Eigen::Index k = 0; k < action.rows(); ++k) {
      const S a = action(k, b);
      const S one_m = S(1) - a * a;
      const S sd = std::exp(log_std(k, b));
      // d log_prob / d u through the tanh correction term
      const S dlp_du = S(2) * a * one_m / (one_m + static_cast<S>(kSquashEps));
      const S du = d_action(k, b) * one_m + d_log_prob(b) * dlp_du;
      d_mean(k, b) = du;
      d_log_std(k, b) = du * sd * noise(k, b) - d_log_prob(b);
    }
  }
}

template <typename S>
struct PolicyHeadOutput {
  Matrix<S> mean;
  Matrix<S> log_std;
};

/// Draws noise from `rng` and samples the squashed Gaussian.
template <typename S>
SquashedSample<S> sample_squashed(const PolicyHeadOutput<S>& head, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix<S> noise(head.mean.rows(), head.mean.cols());
  for (Eigen::Index k = 0; k < noise.size(); ++k) noise.data()[k] = static_cast<S>(n01(rng));
  return squash_sample(head.mean, head.log_std, noise);
}

/// Maps a tanh output in [-1, 1] to a blend weight in [0, 1].
template <typename S>
S tanh_to_unit(S t) {
  return (t + S(1)) / S(2);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct AdamState {
  ParameterSet<S> m;
  ParameterSet<S> v;
  std::int64_t t = 0;

  static AdamState like(const ParameterSet<S>& p) { return {p.zeros_like(), p.zeros_like(), 0}; }
};

template <typename S>
void adam_step(ParameterSet<S>& params, const ParameterSet<S>& grads, AdamState<S>& st,
               const AdamConfig& cfg) {
  ++st.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  const S lr_t = static_cast<S>(cfg.lr * std::sqrt(bc2) / bc1);
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  const S eps = static_cast<S>(cfg.eps * std::sqrt(bc2));
  for (int i = 0; i < params.size(); ++i) {
    auto& p = params.layer(i);
    const auto& g = grads.layer(i);
    auto& m = st.m.layer(i);
    auto& v = st.v.layer(i);
    m.weight = b1 * m.weight + (S(1) - b1) * g.weight;
    v.weight = b2 * v.weight + (S(1) - b2) * g.weight.cwiseProduct(g.weight);
    p.weight.array() -= lr_t * m.weight.array() / (v.weight.array().sqrt() + eps);
    m.bias = b1 * m.bias + (S(1) - b1) * g.bias;
    v.bias = b2 * v.bias + (S(1) - b2) * g.bias.cwiseProduct(g.bias);
    p.bias.array() -= lr_t * m.bias.array() / (v.bias.array().sqrt() + eps);
  }
}

/// Scalar Adam, used for the entropy temperature.
struct ScalarAdam {
  double m = 0.0;
  double v = 0.0;
  std::int64_t t = 0;

  double step(double param, double grad, const AdamConfig& cfg) {
    ++t;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
    const double mh = m / (1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
    const double vh = v / (1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
    return param - cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
  }
};

/// target <- (1 - tau) * target + tau * online
template <typename S>
void soft_update(ParameterSet<S>& target, const ParameterSet<S>& online, double tau) {
  if (!target.same_shape(online)) throw RuntimeError("soft_update: parameter shape mismatch");
  const S t = static_cast<S>(tau);
  for (int i = 0; i < target.size(); ++i) {
    auto& d = target.layer(i);
    const auto& s = online.layer(i);
    d.weight = (S(1) - t) * d.weight + t * s.weight;
    d.bias = (S(1) - t) * d.bias + t * s.bias;
  }
}

}  // namespace arboids::nn
