#pragma once

// Checkpoint archive: the 6-byte magic "ARBD01", a u32 record count, then one
// record per tensor:
//   u32 name_len | name bytes | u32 ndim | u32 dims[ndim] | f32 data (row-major)
// All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "arboids/sac.hpp"

namespace arboids {

inline constexpr char kCheckpointMagic[6] = {'A', 'R', 'B', 'D', '0', '1'};

struct Tensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

namespace detail {

template <typename T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <typename T>
void put(std::string& out, T v) {
  v = to_le(v);
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Cursor {
 public:
  Cursor(const std::string& buf, std::string what) : buf_(buf), what_(std::move(what)) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_le(v);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError(what_ + ": truncated checkpoint");
  }
  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Ordered name -> tensor map with typed helpers for parameter sets.
class TensorArchive {
 public:
  void put(const std::string& name, Tensor t) {
    if (t.numel() != t.data.size()) throw RuntimeError("tensor '" + name + "' data does not match its shape");
    if (!tensors_.count(name)) order_.push_back(name);
    tensors_[name] = std::move(t);
  }

  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
  const std::vector<std::string>& names() const { return order_; }

  const Tensor& get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    return it->second;
  }

  void put_scalar(const std::string& name, double v) { put(name, {{1}, {static_cast<float>(v)}}); }
  double get_scalar(const std::string& name) const {
    const Tensor& t = get(name);
    if (t.data.size() != 1) throw CheckpointError("tensor '" + name + "' is not a scalar");
    return t.data[0];
  }

  /// Counters are split into two exactly representable float halves.
  void put_counter(const std::string& name, std::int64_t v) {
    if (v < 0 || v >= (std::int64_t{1} << 44)) throw RuntimeError("counter '" + name + "' out of range");
    put(name, {{2}, {static_cast<float>(v >> 20), static_cast<float>(v & ((1 << 20) - 1))}});
  }
  std::int64_t get_counter(const std::string& name) const {
    const Tensor& t = get(name);
    if (t.shape != std::vector<std::uint32_t>{2}) throw CheckpointError("tensor '" + name + "' is not a counter");
    return (static_cast<std::int64_t>(t.data[0]) << 20) + static_cast<std::int64_t>(t.data[1]);
  }

  /// A scalar stored at full precision as three 22-bit float chunks of its bit pattern.
  void put_double(const std::string& name, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    put(name, {{3},
               {static_cast<float>(bits >> 44), static_cast<float>((bits >> 22) & 0x3FFFFF),
                static_cast<float>(bits & 0x3FFFFF)}});
  }
  double get_double(const std::string& name) const {
    const Tensor& t = get(name);
    if (t.shape != std::vector<std::uint32_t>{3}) throw CheckpointError("tensor '" + name + "' is not a double");
    const std::uint64_t bits = (static_cast<std::uint64_t>(t.data[0]) << 44) |
                               (static_cast<std::uint64_t>(t.data[1]) << 22) |
                               static_cast<std::uint64_t>(t.data[2]);
    return std::bit_cast<double>(bits);
  }

  template <typename S>
  void put_params(const std::string& prefix, const nn::ParameterSet<S>& p) {
    for (int i = 0; i < p.size(); ++i) {
      const auto& l = p.layer(i);
      Tensor w{{static_cast<std::uint32_t>(l.weight.rows()), static_cast<std::uint32_t>(l.weight.cols())}, {}};
      w.data.reserve(static_cast<std::size_t>(l.weight.size()));
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.data.push_back(static_cast<float>(l.weight(r, c)));
      put(prefix + "/" + l.name + "/weight", std::move(w));
      Tensor b{{static_cast<std::uint32_t>(l.bias.size())}, {}};
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) b.data.push_back(static_cast<float>(l.bias(r)));
      put(prefix + "/" + l.name + "/bias", std::move(b));
    }
  }

  /// Fills `p` in place; every layer must be present with the exact shape.
  template <typename S>
  void get_params(const std::string& prefix, nn::ParameterSet<S>& p) const {
    for (int i = 0; i < p.size(); ++i) {
      auto& l = p.layer(i);
      const std::string wn = prefix + "/" + l.name + "/weight", bn = prefix + "/" + l.name + "/bias";
      const Tensor& w = get(wn);
      const std::vector<std::uint32_t> want{static_cast<std::uint32_t>(l.weight.rows()),
                                            static_cast<std::uint32_t>(l.weight.cols())};
      if (w.shape != want)
        throw CheckpointError("shape mismatch for '" + wn + "': checkpoint has " + shape_str(w.shape) +
                              ", network expects " + shape_str(want));
      const Tensor& b = get(bn);
      if (b.shape != std::vector<std::uint32_t>{static_cast<std::uint32_t>(l.bias.size())})
        throw CheckpointError("shape mismatch for '" + bn + "': checkpoint has " + shape_str(b.shape));
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = static_cast<S>(w.data[k++]);
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = static_cast<S>(b.data[static_cast<std::size_t>(r)]);
    }
  }

  std::string serialize() const {
    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(order_.size()));
    for (const auto& name : order_) {
      const Tensor& t = tensors_.at(name);
      detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out += name;
      detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
      for (auto d : t.shape) detail::put<std::uint32_t>(out, d);
      for (float f : t.data) detail::put<float>(out, f);
    }
    return out;
  }

  static TensorArchive deserialize(const std::string& buf, const std::string& what = "checkpoint") {
    if (buf.size() < sizeof(kCheckpointMagic) || std::memcmp(buf.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
      throw CheckpointError(what + ": bad magic (not an ARBD01 checkpoint)");
    detail::Cursor cur(buf, what);
    cur.bytes(sizeof(kCheckpointMagic));
    const auto count = cur.get<std::uint32_t>();
    TensorArchive a;
    for (std::uint32_t k = 0; k < count; ++k) {
      const auto len = cur.get<std::uint32_t>();
      std::string name = cur.bytes(len);
      Tensor t;
      const auto nd = cur.get<std::uint32_t>();
      if (nd > 8) throw CheckpointError(what + ": tensor '" + name + "' has implausible rank");
      for (std::uint32_t d = 0; d < nd; ++d) t.shape.push_back(cur.get<std::uint32_t>());
      const std::size_t n = t.numel();
      t.data.resize(n);
      for (std::size_t i = 0; i < n; ++i) t.data[i] = cur.get<float>();
      a.put(name, std::move(t));
    }
    if (!cur.done()) throw CheckpointError(what + ": trailing bytes after the last tensor");
    return a;
  }

  void write(const std::filesystem::path& path) const {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw IoError("cannot open '" + tmp.string() + "' for writing");
      const std::string buf = serialize();
      f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      if (!f) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
  }

  static TensorArchive read(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint '" + path.string() + "'");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(buf, path.string());
  }

 private:
  static std::string shape_str(const std::vector<std::uint32_t>& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
    return r + "]";
  }

  std::vector<std::string> order_;
  std::map<std::string, Tensor> tensors_;
};

/// Network description stored alongside the weights so a checkpoint can be
/// loaded without its run config.
struct PolicyHeader {
  BlendMode mode = BlendMode::arboids;
  ObsLayout layout{};
  NetworkShape shape{};
};

inline void put_header(TensorArchive& a, const std::string& prefix, const PolicyHeader& h) {
  a.put(prefix + "/meta.mode", {{1}, {static_cast<float>(static_cast<int>(h.mode))}});
  a.put(prefix + "/meta.layout",
        {{4},
         {static_cast<float>(h.layout.max_items), static_cast<float>(h.layout.item_dim),
          static_cast<float>(h.layout.a_dim), static_cast<float>(h.layout.b_dim)}});
  a.put(prefix + "/meta.shape",
        {{5},
         {static_cast<float>(h.shape.embed_dim), static_cast<float>(h.shape.width), static_cast<float>(h.shape.depth),
          static_cast<float>(h.shape.adapter_hidden), static_cast<float>(h.shape.adapter_feature_layer)}});
}

inline PolicyHeader get_header(const TensorArchive& a, const std::string& prefix) {
  const Tensor& m = a.get(prefix + "/meta.mode");
  const Tensor& l = a.get(prefix + "/meta.layout");
  const Tensor& s = a.get(prefix + "/meta.shape");
  if (m.data.size() != 1 || l.data.size() != 4 || s.data.size() != 5)
    throw CheckpointError("malformed policy header under '" + prefix + "'");
  const int mode = static_cast<int>(m.data[0]);
  if (mode < 0 || mode > 2) throw CheckpointError("unknown blend mode in checkpoint");
  PolicyHeader h;
  h.mode = static_cast<BlendMode>(mode);
  auto i = [](float f) { return static_cast<int>(f); };
  h.layout = {i(l.data[0]), i(l.data[1]), i(l.data[2]), i(l.data[3])};
  h.shape = {i(s.data[0]), i(s.data[1]), i(s.data[2]), i(s.data[3]), i(s.data[4])};
  return h;
}

template <typename S>
void put_adam(TensorArchive& a, const std::string& prefix, const nn::AdamState<S>& st) {
  a.put_params(prefix + ".m", st.m);
  a.put_params(prefix + ".v", st.v);
  a.put_counter(prefix + ".t", st.t);
}

template <typename S>
void get_adam(const TensorArchive& a, const std::string& prefix, nn::AdamState<S>& st) {
  a.get_params(prefix + ".m", st.m);
  a.get_params(prefix + ".v", st.v);
  st.t = a.get_counter(prefix + ".t");
}

/// Everything needed to resume a learner: networks, targets, optimizer
/// moments, temperature state and counters. The replay buffer is not saved.
template <typename S>
void save_learner(TensorArchive& a, const std::string& prefix, SacLearner<S>& l, std::int64_t env_step) {
  put_header(a, prefix, {l.mode(), l.layout(), l.actor().shape()});
  a.put_params(prefix + "/actor", l.actor().params());
  for (int k = 0; k < 2; ++k) {
    const std::string c = std::to_string(k + 1);
    a.put_params(prefix + "/critic" + c, l.critic(k).params());
    a.put_params(prefix + "/target" + c, l.target(k).params());
    put_adam(a, prefix + "/opt.critic" + c, l.critic_optimizer(k));
  }
  put_adam(a, prefix + "/opt.actor", l.actor_optimizer());
  a.put_double(prefix + "/log_alpha", l.log_alpha());
  const auto& ao = l.alpha_optimizer();
  a.put_double(prefix + "/opt.alpha.m", ao.m);
  a.put_double(prefix + "/opt.alpha.v", ao.v);
  a.put_counter(prefix + "/opt.alpha.t", ao.t);
  a.put_counter(prefix + "/updates", l.updates());
  a.put_counter(prefix + "/step", env_step);
}

/// Restores into an already-constructed learner; returns the saved env step.
template <typename S>
std::int64_t load_learner(const TensorArchive& a, const std::string& prefix, SacLearner<S>& l) {
  const PolicyHeader h = get_header(a, prefix);
  if (h.mode != l.mode())
    throw CheckpointError("checkpoint holds a '" + to_string(h.mode) + "' policy, expected '" + to_string(l.mode()) + "'");
  a.get_params(prefix + "/actor", l.actor().params());
  for (int k = 0; k < 2; ++k) {
    const std::string c = std::to_string(k + 1);
    a.get_params(prefix + "/critic" + c, l.critic(k).params());
    a.get_params(prefix + "/target" + c, l.target(k).params());
    get_adam(a, prefix + "/opt.critic" + c, l.critic_optimizer(k));
  }
  get_adam(a, prefix + "/opt.actor", l.actor_optimizer());
  l.set_log_alpha(a.get_double(prefix + "/log_alpha"));
  auto& ao = l.alpha_optimizer();
  ao.m = a.get_double(prefix + "/opt.alpha.m");
  ao.v = a.get_double(prefix + "/opt.alpha.v");
  ao.t = a.get_counter(prefix + "/opt.alpha.t");
  l.set_updates(a.get_counter(prefix + "/updates"));
  return a.get_counter(prefix + "/step");
}

/// Loads only the actor, rebuilt for `layout` (which may differ from the
/// training layout in the number of teammate slots).
template <typename S>
ActorNetwork<S> load_actor(const TensorArchive& a, const std::string& prefix, const ObsLayout& layout,
                           PolicyHeader* header_out = nullptr) {
  const PolicyHeader h = get_header(a, prefix);
  if (layout.item_dim != h.layout.item_dim || layout.a_dim != h.layout.a_dim || layout.b_dim != h.layout.b_dim)
    throw CheckpointError("checkpoint observation layout is incompatible with the requested one");
  ActorNetwork<S> actor(layout, h.shape, h.mode == BlendMode::arboids);
  a.get_params(prefix + "/actor", actor.params());
  if (header_out) *header_out = h;
  return actor;
}

/// FNV-1a over the serialized bytes; used to show a file did not change.
inline std::uint64_t archive_hash(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace arboids
