#pragma once

// Target-defense episode machine. The target sits at the world origin;
// defenders start on a ring inside the protected region and a single attacker
// spawns on the sensing circle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "arboids/boids.hpp"
#include "arboids/common.hpp"
#include "arboids/dynamics.hpp"

namespace arboids {

struct EngagementConfig {
  double r_cap = 5.0;
  double r0 = 15.0;
  double rho_t = 60.0;
  double rho_a = 15.0;
  double r_collision = 3.0;
  double t_total = 60.0;
  double t_action = 0.2;
  double physics_dt = 0.02;
  int n_defenders = 3;
  double spawn_min = -kPi;  ///< attacker spawn bearing sector, rad
  double spawn_max = kPi;
  double noise_sigma_bearing = 0.02;
  double noise_sigma_distance = 0.5;
  double agility = 2.0;
  bool formation_reward = true;
  VesselParams vessel{};

  int substeps_per_action() const {
    return static_cast<int>(std::lround(t_action / physics_dt));
  }
  std::int64_t max_substeps() const {
    return static_cast<std::int64_t>(std::llround(t_total / physics_dt));
  }
  ThrustBounds defender_bounds() const { return vessel.thrust; }
  ThrustBounds attacker_bounds() const { return scale_bounds(vessel.thrust, agility); }

  void validate() const {
    if (!(r_cap > 0.0 && r_cap < r0 && r0 < rho_t))
      throw ConfigError("engagement radii must satisfy 0 < r_cap < r0 < rho_t");
    if (!(r_collision > 0.0)) throw ConfigError("engagement.r_collision must be > 0");
    if (!(rho_a > 0.0)) throw ConfigError("engagement.rho_a must be > 0");
    if (!(t_action > 0.0 && t_total > 0.0)) throw ConfigError("engagement times must be > 0");
    const double ratio = t_total / t_action;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
      throw ConfigError("engagement.t_action must divide engagement.t_total");
    if (!(physics_dt > 0.0) ||
        std::abs(t_action / physics_dt - std::round(t_action / physics_dt)) > 1e-9)
      throw ConfigError("engagement.physics_dt must divide engagement.t_action");
    if (n_defenders < 1) throw ConfigError("engagement.n_defenders must be >= 1");
    if (!(spawn_min <= spawn_max)) throw ConfigError("engagement spawn sector is empty");
    if (noise_sigma_bearing < 0 || noise_sigma_distance < 0)
      throw ConfigError("observation noise sigmas must be >= 0");
    if (!(agility > 0.0)) throw ConfigError("engagement.agility must be > 0");
    vessel.validate();
  }
};

struct CaptureSuccess {
  int defender = 0;
  friend bool operator==(const CaptureSuccess&, const CaptureSuccess&) = default;
};
struct TimeoutSuccess {
  friend bool operator==(const TimeoutSuccess&, const TimeoutSuccess&) = default;
};
struct BreachFailure {
  friend bool operator==(const BreachFailure&, const BreachFailure&) = default;
};
struct CollisionFailure {
  int first = 0;
  int second = 0;
  friend bool operator==(const CollisionFailure&, const CollisionFailure&) = default;
};

using EpisodeOutcome = std::variant<CaptureSuccess, TimeoutSuccess, BreachFailure, CollisionFailure>;

inline bool is_success(const EpisodeOutcome& o) {
  return std::holds_alternative<CaptureSuccess>(o) || std::holds_alternative<TimeoutSuccess>(o);
}

inline std::string outcome_name(const EpisodeOutcome& o) {
  struct V {
    std::string operator()(const CaptureSuccess&) const { return "capture"; }
    std::string operator()(const TimeoutSuccess&) const { return "timeout"; }
    std::string operator()(const BreachFailure&) const { return "breach"; }
    std::string operator()(const CollisionFailure&) const { return "collision"; }
  };
  return std::visit(V{}, o);
}

struct EngagementState {
  std::vector<VesselState> defenders;
  VesselState attacker;
  std::int64_t substep = 0;  ///< physics substeps elapsed; t = substep * physics_dt
  double t = 0.0;
  std::optional<EpisodeOutcome> terminal;
};

struct BearingDistance {
  double bearing = 0.0;  ///< rad, body frame of the observer, in (-pi, pi]
  double distance = 0.0;
  friend bool operator==(const BearingDistance&, const BearingDistance&) = default;
};

struct AttackerTargetObs {
  double phi_a = 0.0, d_a = 0.0, phi_t = 0.0, d_t = 0.0;
  friend bool operator==(const AttackerTargetObs&, const AttackerTargetObs&) = default;
};

/// Boids component of the observation; forces are rotated into the body frame.
struct BoidsObs {
  Vec2 f_sep = Vec2::Zero();
  Vec2 f_ali = Vec2::Zero();
  Vec2 f_coh = Vec2::Zero();
  NormalizedAction a_boids{};
};

struct Observation {
  std::vector<BearingDistance> teammates;  ///< ascending defender index, self skipped
  AttackerTargetObs attacker_target;
  BoidsObs boids;
};

/// Bearing and distance of `target` as seen from `observer`.
inline BearingDistance relative_polar(const VesselState& observer, const Vec2& target) {
  const Vec2 rel = world_to_body(target - observer.position(), observer.psi);
  return {std::atan2(rel.y(), rel.x()), rel.norm()};
}

inline EngagementState reset(const EngagementConfig& config, std::uint64_t seed) {
  config.validate();
  const int n = config.n_defenders;
  const double ring = 0.5 * config.r0;
  if (n >= 2) {
    const double chord = 2.0 * ring * std::sin(kPi / n);
    if (chord <= config.r_collision)
      throw ConfigError("defender ring spacing " + std::to_string(chord) +
                        " m violates r_collision");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> offset_dist(0.0, 2.0 * kPi / n);
  const double offset = offset_dist(rng);
  EngagementState s;
  s.defenders.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double ang = offset + 2.0 * kPi * k / n;
    auto& d = s.defenders[static_cast<std::size_t>(k)];
    d.x = ring * std::cos(ang);
    d.y = ring * std::sin(ang);
    d.psi = wrap_angle(ang);
  }
  double bearing = config.spawn_min;
  if (config.spawn_max > config.spawn_min) {
    std::uniform_real_distribution<double> spawn(config.spawn_min, config.spawn_max);
    bearing = spawn(rng);
  }
  s.attacker.x = config.rho_t * std::cos(bearing);
  s.attacker.y = config.rho_t * std::sin(bearing);
  s.attacker.psi = wrap_angle(bearing + kPi);
  return s;
}

/// Precedence: capture, collision, breach, timeout.
inline std::optional<EpisodeOutcome> check_termination(std::span<const Vec2> defenders,
                                                       const Vec2& attacker, double t,
                                                       const EngagementConfig& config) {
  int best = -1;
  double best_d = config.r_cap;
  for (std::size_t i = 0; i < defenders.size(); ++i) {
    const double d = (defenders[i] - attacker).norm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  if (best >= 0) return CaptureSuccess{best};

  int ci = -1, cj = -1;
  double closest = config.r_collision;
  for (std::size_t i = 0; i < defenders.size(); ++i)
    for (std::size_t j = i + 1; j < defenders.size(); ++j) {
      const double d = (defenders[i] - defenders[j]).norm();
      if (d <= closest) {
        closest = d;
        ci = static_cast<int>(i);
        cj = static_cast<int>(j);
      }
    }
  if (ci >= 0) return CollisionFailure{ci, cj};

  if (attacker.norm() <= config.r0) return BreachFailure{};
  if (t >= config.t_total - 1e-9) return TimeoutSuccess{};
  return std::nullopt;
}

inline std::vector<Vec2> defender_positions(const EngagementState& s) {
  std::vector<Vec2> p;
  p.reserve(s.defenders.size());
  for (const auto& d : s.defenders) p.push_back(d.position());
  return p;
}

inline std::optional<EpisodeOutcome> check_termination(const EngagementState& s,
                                                       const EngagementConfig& config) {
  const auto p = defender_positions(s);
  return check_termination(p, s.attacker.position(), s.t, config);
}

struct RewardBreakdown {
  double main = 0.0;
  double formation = 0.0;
  double collision = 0.0;
  double total() const { return main + formation + collision; }
};

/// Formation term shared by every defender; zero when the unit vectors cancel.
inline double formation_reward(std::span<const Vec2> defenders, const Vec2& attacker) {
  const int n = static_cast<int>(defenders.size());
  if (n == 0) return 0.0;
  Vec2 d_da = Vec2::Zero();
  for (const Vec2& x : defenders) d_da += unit_or_zero(attacker - x);
  const double norm = d_da.norm();
  if (norm < 1e-9) return 0.0;
  const Vec2 d_ta = unit_or_zero(attacker);
  return 0.5 * d_ta.dot(d_da / norm) - norm / n;
}

inline RewardBreakdown compute_reward(int i, const EngagementState& /*prev*/,
                                      const EngagementState& next,
                                      const std::optional<EpisodeOutcome>& outcome,
                                      const EngagementConfig& config) {
  RewardBreakdown r;
  const auto pos = defender_positions(next);
  const Vec2 xa = next.attacker.position();
  const double d_ia = (pos[static_cast<std::size_t>(i)] - xa).norm();
  if (outcome) {
    if (std::holds_alternative<BreachFailure>(*outcome)) {
      r.main = -100.0;
    } else if (const auto* cap = std::get_if<CaptureSuccess>(&*outcome)) {
      if (cap->defender == i || d_ia <= config.r_cap)
        r.main = 100.0;
      else if (d_ia <= 3.0 * config.r_cap)
        r.main = 50.0;
    } else if (std::holds_alternative<CollisionFailure>(*outcome)) {
      // Every defender in a colliding pair is penalized.
      for (std::size_t j = 0; j < pos.size(); ++j) {
        if (static_cast<int>(j) == i) continue;
        if ((pos[static_cast<std::size_t>(i)] - pos[j]).norm() <= config.r_collision) {
          r.collision = -50.0;
          break;
        }
      }
    }
  }
  if (config.formation_reward) r.formation = formation_reward(pos, xa);
  return r;
}

inline Observation compute_observation(int i, const EngagementState& s, const BoidsOutput& boids,
                                       const EngagementConfig& config, bool noise_on,
                                       std::mt19937_64* rng) {
  const auto& me = s.defenders[static_cast<std::size_t>(i)];
  Observation obs;
  obs.teammates.reserve(s.defenders.size() - 1);
  for (std::size_t j = 0; j < s.defenders.size(); ++j) {
    if (static_cast<int>(j) == i) continue;
    obs.teammates.push_back(relative_polar(me, s.defenders[j].position()));
  }
  const auto att = relative_polar(me, s.attacker.position());
  const auto tgt = relative_polar(me, Vec2::Zero());
  obs.attacker_target = {att.bearing, att.distance, tgt.bearing, tgt.distance};
  if (noise_on && rng) {
    std::normal_distribution<double> nb(0.0, config.noise_sigma_bearing);
    std::normal_distribution<double> nd(0.0, config.noise_sigma_distance);
    auto& o = obs.attacker_target;
    o.phi_a = wrap_angle(o.phi_a + nb(*rng));
    o.d_a = std::max(0.0, o.d_a + nd(*rng));
    o.phi_t = wrap_angle(o.phi_t + nb(*rng));
    o.d_t = std::max(0.0, o.d_t + nd(*rng));
  }
  obs.boids.f_sep = world_to_body(boids.forces.f_sep, me.psi);
  obs.boids.f_ali = world_to_body(boids.forces.f_ali, me.psi);
  obs.boids.f_coh = world_to_body(boids.forces.f_coh, me.psi);
  obs.boids.a_boids = boids.action;
  return obs;
}

struct StepResult {
  std::vector<RewardBreakdown> rewards;
  std::optional<EpisodeOutcome> outcome;
  std::vector<ThrustCommand> defender_thrusts;
  ThrustCommand attacker_thrust;
  int substeps_taken = 0;
};

/// Advances the engagement by one decision interval, checking termination
/// after every physics substep. The state is frozen once terminal.
inline StepResult step(EngagementState& state, std::span<const NormalizedAction> defender_actions,
                       const NormalizedAction& attacker_action, const EngagementConfig& config) {
  if (state.terminal) throw RuntimeError("step called on a terminal engagement state");
  if (defender_actions.size() != state.defenders.size())
    throw RuntimeError("expected " + std::to_string(state.defenders.size()) +
                       " defender actions, got " + std::to_string(defender_actions.size()));
  const EngagementState prev = state;
  StepResult res;
  const ThrustBounds d_bounds = config.defender_bounds();
  const ThrustBounds a_bounds = config.attacker_bounds();
  res.defender_thrusts.reserve(defender_actions.size());
  for (const auto& a : defender_actions) res.defender_thrusts.push_back(action_to_thrust(a, d_bounds));
  res.attacker_thrust = action_to_thrust(attacker_action, a_bounds);

  const int substeps = config.substeps_per_action();
  const double dt = config.physics_dt;
  std::vector<Vec2> pos(state.defenders.size());
  for (int k = 0; k < substeps; ++k) {
    for (std::size_t i = 0; i < state.defenders.size(); ++i)
      state.defenders[i] = step_dynamics(state.defenders[i], res.defender_thrusts[i], config.vessel, dt);
    state.attacker = step_dynamics(state.attacker, res.attacker_thrust, config.vessel, dt);
    ++state.substep;
    state.t = static_cast<double>(state.substep) * dt;
    ++res.substeps_taken;
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = state.defenders[i].position();
    if (auto o = check_termination(pos, state.attacker.position(), state.t, config)) {
      state.terminal = *o;
      res.outcome = *o;
      break;
    }
  }
  res.rewards.reserve(state.defenders.size());
  for (std::size_t i = 0; i < state.defenders.size(); ++i)
    res.rewards.push_back(compute_reward(static_cast<int>(i), prev, state, res.outcome, config));
  return res;
}

/// Owns one engagement plus its observation-noise stream.
class Engagement {
 public:
  explicit Engagement(EngagementConfig config, BoidsWeights weights = {}, MappingGains gains = {},
                      BoidsVariant variant = BoidsVariant::conventional)
      : config_(std::move(config)), weights_(weights), gains_(gains), variant_(variant) {
    config_.validate();
  }

  const EngagementState& reset(std::uint64_t seed) {
    state_ = arboids::reset(config_, seed);
    noise_rng_.seed(seed ^ 0x9E3779B97F4A7C15ULL);
    return state_;
  }

  BoidsOutput boids(int i) const {
    return evaluate_boids(static_cast<std::size_t>(i), state_.defenders, state_.attacker.position(),
                          weights_, gains_, variant_);
  }

  Observation observe(int i, bool noise_on) {
    return compute_observation(i, state_, boids(i), config_, noise_on, &noise_rng_);
  }

  StepResult step(std::span<const NormalizedAction> defender_actions,
                  const NormalizedAction& attacker_action) {
    return arboids::step(state_, defender_actions, attacker_action, config_);
  }

  const EngagementState& state() const { return state_; }
  EngagementState& mutable_state() { return state_; }
  const EngagementConfig& config() const { return config_; }
  EngagementConfig& mutable_config() { return config_; }
  const BoidsWeights& weights() const { return weights_; }
  const MappingGains& gains() const { return gains_; }
  BoidsVariant variant() const { return variant_; }

 private:
  EngagementConfig config_;
  BoidsWeights weights_;
  MappingGains gains_;
  BoidsVariant variant_;
  EngagementState state_;
  std::mt19937_64 noise_rng_{0};
};

}  // namespace arboids
