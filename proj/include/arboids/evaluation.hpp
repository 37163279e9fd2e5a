#pragma once

// Policies, episode rollout, trial statistics and trajectory export.

#include <cinttypes>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "arboids/checkpoint.hpp"
#include "arboids/config.hpp"

namespace arboids {

// ---------------------------------------------------------------- policies

class DefenderPolicy {
 public:
  virtual ~DefenderPolicy() = default;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<DefenderPolicy> clone() const = 0;
  /// Fills one action per defender; `theta` is resized and filled only by
  /// policies with an adaptive blend.
  virtual void act(Engagement& env, std::vector<NormalizedAction>& actions, std::vector<double>& theta) = 0;
  /// Runs before every decision step. Scripted test stubs use it to edit the state.
  virtual void intervene(EngagementState&) {}
};

class BoidsPolicy final : public DefenderPolicy {
 public:
  std::string name() const override { return "boids"; }
  std::unique_ptr<DefenderPolicy> clone() const override { return std::make_unique<BoidsPolicy>(*this); }
  void act(Engagement& env, std::vector<NormalizedAction>& actions, std::vector<double>& theta) override {
    theta.clear();
    const int n = static_cast<int>(env.state().defenders.size());
    actions.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) actions[static_cast<std::size_t>(i)] = env.boids(i).action;
  }
};

/// Zero thrust on both motors; defenders starting at rest stay put.
class StationaryPolicy final : public DefenderPolicy {
 public:
  std::string name() const override { return "stationary"; }
  std::unique_ptr<DefenderPolicy> clone() const override { return std::make_unique<StationaryPolicy>(*this); }
  void act(Engagement& env, std::vector<NormalizedAction>& actions, std::vector<double>& theta) override {
    theta.clear();
    const auto& b = env.config().defender_bounds();
    const double a0 = 2.0 * (0.0 - b.tau_min) / (b.tau_max - b.tau_min) - 1.0;
    actions.assign(env.state().defenders.size(), NormalizedAction{a0, a0});
  }
};

/// Shared-parameter learned defender, rebuilt for whatever team size the
/// engagement has. Always deterministic.
class LearnedDefender final : public DefenderPolicy {
 public:
  LearnedDefender(BlendMode mode, NetworkShape shape, nn::ParameterSet<float> params)
      : mode_(mode), shape_(shape), params_(std::move(params)) {}

  static LearnedDefender from_archive(const TensorArchive& a, const std::string& prefix = "defender") {
    const PolicyHeader h = get_header(a, prefix);
    ActorNetwork<float> actor = load_actor<float>(a, prefix, h.layout);
    return LearnedDefender(h.mode, h.shape, actor.params());
  }

  static LearnedDefender from_file(const std::filesystem::path& path) {
    return from_archive(TensorArchive::read(path));
  }

  std::string name() const override { return to_string(mode_); }
  std::unique_ptr<DefenderPolicy> clone() const override {
    return std::make_unique<LearnedDefender>(mode_, shape_, params_);
  }
  BlendMode mode() const { return mode_; }
  const nn::ParameterSet<float>& params() const { return params_; }

  void act(Engagement& env, std::vector<NormalizedAction>& actions, std::vector<double>& theta) override {
    const int n = static_cast<int>(env.state().defenders.size());
    ensure_actor(n);
    const ObsLayout& L = actor_->layout();
    obs_.resize(L.flat_dim(), n);
    boids_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Observation o = env.observe(i, false);
      boids_[static_cast<std::size_t>(i)] = o.boids.a_boids;
      flatten_defender_observation<float>(o, L, std::span<float>(obs_.col(i).data(), static_cast<std::size_t>(L.flat_dim())));
    }
    const auto choice = select_actions<float>(*actor_, mode_, obs_, boids_, ActMode::eval, rng_, 0.0);
    actions.resize(static_cast<std::size_t>(n));
    theta.clear();
    for (int i = 0; i < n; ++i) {
      actions[static_cast<std::size_t>(i)] = choice[static_cast<std::size_t>(i)].a_exec;
      if (mode_ == BlendMode::arboids) theta.push_back(choice[static_cast<std::size_t>(i)].theta);
    }
  }

 private:
  void ensure_actor(int n) {
    if (actor_ && actor_->layout().max_items == std::max(0, n - 1)) return;
    actor_ = std::make_shared<ActorNetwork<float>>(defender_layout(n, mode_ != BlendMode::vanilla), shape_,
                                                   mode_ == BlendMode::arboids);
    if (!actor_->params().same_shape(params_))
      throw CheckpointError("defender parameters do not fit the " + to_string(mode_) + " network shape");
    actor_->params() = params_;
  }

  BlendMode mode_;
  NetworkShape shape_;
  nn::ParameterSet<float> params_;
  std::shared_ptr<ActorNetwork<float>> actor_;
  nn::Matrix<float> obs_;
  std::vector<NormalizedAction> boids_;
  std::mt19937_64 rng_{0};  // unused in eval mode
};

class AttackerPolicy {
 public:
  virtual ~AttackerPolicy() = default;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<AttackerPolicy> clone() const = 0;
  virtual NormalizedAction act(const EngagementState& s, const EngagementConfig& c) = 0;
};

class ApfAttacker final : public AttackerPolicy {
 public:
  explicit ApfAttacker(ApfParams p = {}) : p_(p) {}
  std::string name() const override { return "apf"; }
  std::unique_ptr<AttackerPolicy> clone() const override { return std::make_unique<ApfAttacker>(*this); }
  NormalizedAction act(const EngagementState& s, const EngagementConfig&) override {
    pos_.resize(s.defenders.size());
    for (std::size_t i = 0; i < pos_.size(); ++i) pos_[i] = s.defenders[i].position();
    return apf_action(s.attacker, pos_, Vec2::Zero(), p_);
  }

 private:
  ApfParams p_;
  std::vector<Vec2> pos_;
};

/// Vanilla-SAC attacker acting deterministically on its local observation.
class LearnedAttacker final : public AttackerPolicy {
 public:
  LearnedAttacker(NetworkShape shape, nn::ParameterSet<float> params, double sensing_range)
      : shape_(shape), params_(std::move(params)), range_(sensing_range) {}

  static LearnedAttacker from_archive(const TensorArchive& a, double sensing_range, const std::string& prefix = "attacker") {
    const PolicyHeader h = get_header(a, prefix);
    if (h.mode != BlendMode::vanilla) throw CheckpointError("attacker checkpoint must hold a vanilla_sac policy");
    ActorNetwork<float> actor = load_actor<float>(a, prefix, h.layout);
    return LearnedAttacker(h.shape, actor.params(), sensing_range);
  }

  std::string name() const override { return "learned"; }
  std::unique_ptr<AttackerPolicy> clone() const override {
    return std::make_unique<LearnedAttacker>(shape_, params_, range_);
  }
  const nn::ParameterSet<float>& params() const { return params_; }

  NormalizedAction act(const EngagementState& s, const EngagementConfig&) override {
    const int n = static_cast<int>(s.defenders.size());
    if (!actor_ || actor_->layout().max_items != n) {
      actor_ = std::make_shared<ActorNetwork<float>>(attacker_layout(n), shape_, false);
      if (!actor_->params().same_shape(params_)) throw CheckpointError("attacker parameters do not fit the network shape");
      actor_->params() = params_;
    }
    const ObsLayout& L = actor_->layout();
    obs_.resize(L.flat_dim(), 1);
    flatten_attacker_observation<float>(attacker_observation(s, range_), L,
                                        std::span<float>(obs_.data(), static_cast<std::size_t>(L.flat_dim())));
    const auto c = select_actions<float>(*actor_, BlendMode::vanilla, obs_, {}, ActMode::eval, rng_, 0.0);
    return c[0].a_exec;
  }

 private:
  NetworkShape shape_;
  nn::ParameterSet<float> params_;
  double range_;
  std::shared_ptr<ActorNetwork<float>> actor_;
  nn::Matrix<float> obs_;
  std::mt19937_64 rng_{0};
};

// ---------------------------------------------------------------- episodes

struct TrajectoryRow {
  double t = 0.0;
  int agent_id = 0;
  std::string role;  ///< "defender" or "attacker"
  VesselState s;
  ThrustCommand tau;
  std::optional<double> theta;
};

struct EpisodeRecord {
  std::vector<TrajectoryRow> rows;
  std::string outcome;
  double t_end = 0.0;
};

struct EpisodeResult {
  EpisodeOutcome outcome = TimeoutSuccess{};
  double t_end = 0.0;
  std::int64_t steps = 0;
};

/// Environment of one evaluation trial: the spawn sector is `sector_width`
/// wide around an axis drawn from the trial seed.
inline EngagementConfig trial_engagement(EngagementConfig base, std::uint64_t trial_seed, double sector_width) {
  std::mt19937_64 rng(mix_seed(trial_seed, 0xA715));
  std::uniform_real_distribution<double> axis_dist(-kPi, kPi);
  const double axis = axis_dist(rng);
  base.spawn_min = axis - 0.5 * sector_width;
  base.spawn_max = axis + 0.5 * sector_width;
  return base;
}

inline EpisodeResult run_episode(Engagement& env, DefenderPolicy& defender, AttackerPolicy& attacker,
                                 std::uint64_t seed, EpisodeRecord* record = nullptr) {
  env.reset(seed);
  const int n = static_cast<int>(env.state().defenders.size());
  std::vector<NormalizedAction> actions;
  std::vector<double> theta;
  EpisodeResult res;
  if (record) *record = {};
  while (true) {
    defender.intervene(env.mutable_state());
    if (auto o = check_termination(env.state(), env.config())) {
      // a stub edited the state into a terminal configuration
      env.mutable_state().terminal = *o;
      res.outcome = *o;
      break;
    }
    defender.act(env, actions, theta);
    const NormalizedAction a_att = attacker.act(env.state(), env.config());
    const EngagementState before = record ? env.state() : EngagementState{};
    const StepResult sr = env.step(actions, a_att);
    ++res.steps;
    if (record) {
      for (int i = 0; i < n; ++i) {
        TrajectoryRow r{before.t, i, "defender", before.defenders[static_cast<std::size_t>(i)],
                        sr.defender_thrusts[static_cast<std::size_t>(i)], std::nullopt};
        if (!theta.empty()) r.theta = theta[static_cast<std::size_t>(i)];
        record->rows.push_back(std::move(r));
      }
      record->rows.push_back({before.t, n, "attacker", before.attacker, sr.attacker_thrust, std::nullopt});
    }
    if (sr.outcome) {
      res.outcome = *sr.outcome;
      break;
    }
  }
  res.t_end = env.state().t;
  if (record) {
    record->outcome = outcome_name(res.outcome);
    record->t_end = res.t_end;
  }
  return res;
}

// ---------------------------------------------------------------- statistics

struct RateInterval {
  double lo = 0.0, hi = 0.0;
};

/// Wilson score interval at 95%.
inline RateInterval wilson_interval(std::int64_t successes, std::int64_t n, double z = 1.959963984540054) {
  if (n <= 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct TrialStats {
  std::int64_t n_trials = 0;
  std::int64_t captures = 0, timeouts = 0, breaches = 0, collisions = 0;
  double capture_time_sum = 0.0;
  std::uint64_t seed = 0;

  void add(const EpisodeResult& r) {
    ++n_trials;
    std::visit(
        [&](const auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, CaptureSuccess>) {
            ++captures;
            capture_time_sum += r.t_end;
          } else if constexpr (std::is_same_v<T, TimeoutSuccess>) {
            ++timeouts;
          } else if constexpr (std::is_same_v<T, BreachFailure>) {
            ++breaches;
          } else {
            ++collisions;
          }
        },
        r.outcome);
  }

  std::int64_t successes() const { return captures + timeouts; }
  double rate(std::int64_t k) const { return n_trials ? static_cast<double>(k) / static_cast<double>(n_trials) : 0.0; }
  double success_rate() const { return rate(successes()); }
  double capture_rate() const { return rate(captures); }
  double timeout_rate() const { return rate(timeouts); }
  double breach_rate() const { return rate(breaches); }
  double collision_rate() const { return rate(collisions); }
  std::optional<double> mean_time_to_capture() const {
    if (captures == 0) return std::nullopt;
    return capture_time_sum / static_cast<double>(captures);
  }
  RateInterval success_interval() const { return wilson_interval(successes(), n_trials); }
  bool partitions() const { return captures + timeouts + breaches + collisions == n_trials; }

  nlohmann::json to_json() const {
    const auto ci = success_interval();
    nlohmann::json j = {{"n_trials", n_trials},
                        {"seed", seed},
                        {"captures", captures},
                        {"timeouts", timeouts},
                        {"breaches", breaches},
                        {"collisions", collisions},
                        {"success_rate", success_rate()},
                        {"success_ci95", {ci.lo, ci.hi}},
                        {"capture_rate", capture_rate()},
                        {"timeout_rate", timeout_rate()},
                        {"breach_rate", breach_rate()},
                        {"collision_rate", collision_rate()}};
    const auto m = mean_time_to_capture();
    j["mean_time_to_capture"] = m ? nlohmann::json(*m) : nlohmann::json(nullptr);
    return j;
  }
};

struct TrialSetup {
  EngagementConfig engagement{};
  BoidsWeights weights{};
  MappingGains gains{};
  BoidsVariant variant = BoidsVariant::conventional;
  double sector_width = kPi / 2;
  int threads = 1;
};

inline TrialSetup trial_setup(const RunConfig& c) {
  TrialSetup s{c.effective_engagement(), c.boids, c.mapping, c.boids_variant, c.evaluation.sector_width, c.evaluation.threads};
  s.engagement.agility = c.evaluation.agility;
  return s;
}

/// Runs `n_trials` independent episodes. Trial k uses seed mix_seed(seed, k),
/// so results do not depend on the worker count.
inline TrialStats run_trials(const DefenderPolicy& defender, const AttackerPolicy& attacker, const TrialSetup& setup,
                             int n_trials, std::uint64_t seed, std::vector<EpisodeRecord>* records = nullptr) {
  if (n_trials < 1) throw ConfigError("number of trials must be >= 1");
  setup.engagement.validate();
  std::vector<EpisodeResult> results(static_cast<std::size_t>(n_trials));
  if (records) records->assign(static_cast<std::size_t>(n_trials), {});
  const int workers = std::max(1, std::min(setup.threads, n_trials));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  auto work = [&](int w) {
    try {
      auto d = defender.clone();
      auto a = attacker.clone();
      for (int k = w; k < n_trials; k += workers) {
        const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(k));
        Engagement env(trial_engagement(setup.engagement, s, setup.sector_width), setup.weights, setup.gains,
                       setup.variant);
        results[static_cast<std::size_t>(k)] =
            run_episode(env, *d, *a, s, records ? &(*records)[static_cast<std::size_t>(k)] : nullptr);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  TrialStats st;
  st.seed = seed;
  for (const auto& r : results) st.add(r);
  return st;
}

// ---------------------------------------------------------------- policy factory

inline std::unique_ptr<DefenderPolicy> make_defender_policy(const RunConfig& c) {
  switch (c.policy.defender) {
    case DefenderPolicyKind::boids: return std::make_unique<BoidsPolicy>();
    case DefenderPolicyKind::stationary: return std::make_unique<StationaryPolicy>();
    default: break;
  }
  if (c.policy.checkpoint.empty())
    throw ConfigError("policy '" + to_string(c.policy.defender) + "' needs policy.checkpoint (or --policy PATH)");
  auto p = std::make_unique<LearnedDefender>(LearnedDefender::from_file(c.policy.checkpoint));
  if (p->mode() != blend_mode_for(c.policy.defender))
    throw CheckpointError("checkpoint '" + c.policy.checkpoint + "' holds a " + to_string(p->mode()) +
                          " policy, config asks for " + to_string(c.policy.defender));
  return p;
}

inline std::unique_ptr<AttackerPolicy> make_attacker_policy(const RunConfig& c) {
  if (c.policy.attacker == AttackerPolicyKind::apf) return std::make_unique<ApfAttacker>(c.apf);
  const std::string path = c.policy.attacker_checkpoint.empty() ? c.policy.checkpoint : c.policy.attacker_checkpoint;
  if (path.empty()) throw ConfigError("learned attacker needs policy.attacker_checkpoint");
  return std::make_unique<LearnedAttacker>(LearnedAttacker::from_archive(TensorArchive::read(path), c.apf.sensing_range));
}

// ---------------------------------------------------------------- compare

struct ComparePolicy {
  std::string label;
  std::shared_ptr<const DefenderPolicy> policy;
};

/// SR grids: policy x agility at fixed team size, and policy x team size at
/// fixed agility. Every cell uses the same trial seeds.
inline nlohmann::json compare(const std::vector<ComparePolicy>& policies, const AttackerPolicy& attacker,
                              const TrialSetup& base, const std::vector<double>& agilities,
                              const std::vector<int>& team_sizes, double team_agility, int n_trials,
                              std::uint64_t seed) {
  nlohmann::json rep;
  rep["trials_per_cell"] = n_trials;
  rep["seed"] = seed;
  rep["agility_sweep"] = {{"n_defenders", base.engagement.n_defenders}, {"agility", agilities}, {"cells", nlohmann::json::array()}};
  rep["team_sweep"] = {{"agility", team_agility}, {"n_defenders", team_sizes}, {"cells", nlohmann::json::array()}};
  auto cell = [&](const ComparePolicy& p, double agility, int n) {
    TrialSetup s = base;
    s.engagement.agility = agility;
    s.engagement.n_defenders = n;
    const TrialStats st = run_trials(*p.policy, attacker, s, n_trials, seed);
    nlohmann::json j = st.to_json();
    j["policy"] = p.label;
    j["agility"] = agility;
    j["n_defenders"] = n;
    return j;
  };
  for (const auto& p : policies)
    for (double a : agilities) rep["agility_sweep"]["cells"].push_back(cell(p, a, base.engagement.n_defenders));
  for (const auto& p : policies)
    for (int n : team_sizes) rep["team_sweep"]["cells"].push_back(cell(p, team_agility, n));
  return rep;
}

// ---------------------------------------------------------------- trajectory CSV

inline constexpr const char* kTrajectoryHeader = "t,agent_id,role,x,y,psi,u,v,r,tau_left,tau_right,theta";

namespace detail {
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}
}  // namespace detail

/// Each episode contributes one row per agent per decision step, then a
/// footer row `t_end,-1,outcome,<name>` padded to the column count.
inline void write_trajectories(std::ostream& os, const std::vector<EpisodeRecord>& episodes) {
  using detail::fmt17;
  os << kTrajectoryHeader << '\n';
  for (const auto& ep : episodes) {
    for (const auto& r : ep.rows) {
      os << fmt17(r.t) << ',' << r.agent_id << ',' << r.role << ',' << fmt17(r.s.x) << ',' << fmt17(r.s.y) << ','
         << fmt17(r.s.psi) << ',' << fmt17(r.s.u) << ',' << fmt17(r.s.v) << ',' << fmt17(r.s.r) << ','
         << fmt17(r.tau.tau_left) << ',' << fmt17(r.tau.tau_right) << ',';
      if (r.theta) os << fmt17(*r.theta);
      os << '\n';
    }
    os << fmt17(ep.t_end) << ",-1,outcome," << ep.outcome << ",,,,,,,,\n";
  }
}

inline void write_trajectories(const std::filesystem::path& path, const std::vector<EpisodeRecord>& episodes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write trajectories to '" + path.string() + "'");
  write_trajectories(f, episodes);
  f.flush();
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline std::vector<EpisodeRecord> read_trajectories(std::istream& is, const std::string& what = "trajectory file") {
  std::string line;
  if (!std::getline(is, line) || line != kTrajectoryHeader) throw IoError(what + ": missing or wrong header");
  std::vector<EpisodeRecord> out;
  EpisodeRecord cur;
  std::size_t lineno = 1;
  auto num = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw IoError(what + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
    return v;
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 12) throw IoError(what + ":" + std::to_string(lineno) + ": expected 12 columns");
    if (f[1] == "-1") {
      if (f[2] != "outcome") throw IoError(what + ":" + std::to_string(lineno) + ": malformed footer");
      cur.t_end = num(f[0]);
      cur.outcome = f[3];
      out.push_back(std::move(cur));
      cur = {};
      continue;
    }
    TrajectoryRow r;
    r.t = num(f[0]);
    r.agent_id = static_cast<int>(num(f[1]));
    r.role = f[2];
    r.s = {num(f[3]), num(f[4]), num(f[5]), num(f[6]), num(f[7]), num(f[8])};
    r.tau = {num(f[9]), num(f[10])};
    if (!f[11].empty()) r.theta = num(f[11]);
    cur.rows.push_back(std::move(r));
  }
  if (!cur.rows.empty()) throw IoError(what + ": trailing rows without an outcome footer");
  return out;
}

inline std::vector<EpisodeRecord> read_trajectories(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return read_trajectories(f, path.string());
}

/// FNV-1a of a file's bytes.
inline std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return archive_hash(ss.str());
}

}  // namespace arboids
