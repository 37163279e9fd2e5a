#pragma once

// Scripted attacker (artificial potential field) and the observation/reward
// used when the attacker is a learner instead.

#include <algorithm>
#include <span>
#include <vector>

#include "arboids/boids.hpp"
#include "arboids/engagement.hpp"

namespace arboids {

struct ApfParams {
  double k_attract = 800.0;   ///< N
  double k_repulse = 1200.0;  ///< N m^2
  double sensing_range = 15.0;
  MappingGains gains{0.00125, 0.0025};

  void validate() const {
    if (!(k_attract > 0.0 && k_repulse > 0.0)) throw ConfigError("apf gains must be > 0");
    if (!(sensing_range > 0.0)) throw ConfigError("apf.sensing_range must be > 0");
    gains.validate();
  }
};

inline constexpr double kApfDistanceEps = 1e-6;

/// Attractive pull toward the target plus Khatib-style repulsion from each
/// defender inside the sensing range.
inline Vec2 apf_force(const Vec2& attacker, std::span<const Vec2> defenders, const Vec2& target,
                      const ApfParams& p) {
  Vec2 f = p.k_attract * unit_or_zero(target - attacker);
  const double rho = p.sensing_range;
  const double cap = p.k_repulse / (kApfDistanceEps * kApfDistanceEps);
  for (const Vec2& xi : defenders) {
    const Vec2 away = attacker - xi;
    const double d = away.norm();
    if (d > rho) continue;
    const double dd = std::max(d, kApfDistanceEps);
    const double mag = std::min(p.k_repulse * (1.0 / dd - 1.0 / rho) / (dd * dd), cap);
    f += mag * unit_or_zero(away);
  }
  return f;
}

inline NormalizedAction apf_action(const VesselState& attacker, std::span<const Vec2> defenders,
                                   const Vec2& target, const ApfParams& p) {
  return force_to_action(apf_force(attacker.position(), defenders, target, p), attacker.psi, p.gains);
}

struct AttackerObservation {
  double phi_t = 0.0;
  double d_t = 0.0;
  std::vector<BearingDistance> defenders;  ///< only those within sensing range
};

inline AttackerObservation attacker_observation(const EngagementState& s, double sensing_range) {
  AttackerObservation o;
  const auto tgt = relative_polar(s.attacker, Vec2::Zero());
  o.phi_t = tgt.bearing;
  o.d_t = tgt.distance;
  for (const auto& d : s.defenders) {
    const auto bd = relative_polar(s.attacker, d.position());
    if (bd.distance <= sensing_range) o.defenders.push_back(bd);
  }
  return o;
}

struct AttackerRewardParams {
  double terminal = 100.0;
  double progress_gain = 0.1;
  double proximity_penalty = 1.0;
};

inline double attacker_reward(const EngagementState& prev, const EngagementState& next,
                              const std::optional<EpisodeOutcome>& outcome,
                              const EngagementConfig& config,
                              const AttackerRewardParams& p = {}) {
  double r = p.progress_gain * (prev.attacker.position().norm() - next.attacker.position().norm());
  for (const auto& d : next.defenders) {
    if ((d.position() - next.attacker.position()).norm() <= 2.0 * config.r_cap) {
      r -= p.proximity_penalty;
      break;
    }
  }
  if (outcome) {
    if (std::holds_alternative<BreachFailure>(*outcome)) r += p.terminal;
    if (std::holds_alternative<CaptureSuccess>(*outcome)) r -= p.terminal;
  }
  return r;
}

}  // namespace arboids
