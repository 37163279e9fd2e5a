#pragma once

// Extended Boids baseline: separation, alignment, cohesion, attraction toward
// the attacker, and the linear force-to-thrust mapping.

#include <span>
#include <vector>

#include "arboids/common.hpp"
#include "arboids/dynamics.hpp"

namespace arboids {

struct BoidsWeights {
  double k_sep = 10.0;
  double k_ali = 0.1;
  double k_coh = 0.1;
  double k_att = 0.5;

  void validate() const {
    if (k_sep < 0 || k_ali < 0 || k_coh < 0 || k_att < 0)
      throw ConfigError("boids weights must be >= 0");
  }
};

/// Linear gains from a body-frame virtual force to normalized thrust.
struct MappingGains {
  double k_sur = 1.0 / 30.0;  ///< 1/N
  double k_yaw = 1.0 / 15.0;  ///< 1/N

  void validate() const {
    if (!(k_sur > 0.0 && k_yaw > 0.0)) throw ConfigError("mapping gains must be > 0");
  }
};

/// How the self term enters alignment and cohesion.
///  conventional: k * (mean - self)
///  literal:      k * mean - self
enum class BoidsVariant { conventional, literal };

struct BoidsForces {
  Vec2 f_sep = Vec2::Zero();
  Vec2 f_ali = Vec2::Zero();
  Vec2 f_coh = Vec2::Zero();
  Vec2 f_att = Vec2::Zero();
  Vec2 f_total = Vec2::Zero();
};

/// Per-thruster command in [-1, 1], mapped linearly onto a vessel's bounds.
struct NormalizedAction {
  double a_left = 0.0;
  double a_right = 0.0;
  friend bool operator==(const NormalizedAction&, const NormalizedAction&) = default;
};

/// Counts coincident-neighbor events where the separation denominator was clamped.
struct BoidsDiagnostics {
  int degenerate_pairs = 0;
};

inline constexpr double kBoidsDistanceEps = 1e-6;

inline Vec2 separation_force(const Vec2& self_pos, std::span<const Vec2> neighbors, double k_sep,
                             BoidsDiagnostics* diag = nullptr) {
  Vec2 sum = Vec2::Zero();
  for (const Vec2& xj : neighbors) {
    const Vec2 d = xj - self_pos;
    double n = d.norm();
    if (n < kBoidsDistanceEps) {
      n = kBoidsDistanceEps;
      if (diag) ++diag->degenerate_pairs;
    }
    sum += d / n;
  }
  return -k_sep * sum;
}

namespace detail {
inline Vec2 consensus_term(const Vec2& self, std::span<const Vec2> items, double k,
                           BoidsVariant variant) {
  if (items.empty()) return Vec2::Zero();
  Vec2 mean = Vec2::Zero();
  for (const Vec2& it : items) mean += it;
  mean /= static_cast<double>(items.size());
  return variant == BoidsVariant::conventional ? Vec2(k * (mean - self)) : Vec2(k * mean - self);
}
}  // namespace detail

inline Vec2 alignment_force(const Vec2& self_vel, std::span<const Vec2> neighbor_velocities,
                            double k_ali, BoidsVariant variant = BoidsVariant::conventional) {
  return detail::consensus_term(self_vel, neighbor_velocities, k_ali, variant);
}

inline Vec2 cohesion_force(const Vec2& self_pos, std::span<const Vec2> neighbor_positions,
                           double k_coh, BoidsVariant variant = BoidsVariant::conventional) {
  return detail::consensus_term(self_pos, neighbor_positions, k_coh, variant);
}

inline Vec2 attraction_force(const Vec2& self_pos, const Vec2& attacker_pos, double k_att) {
  return k_att * (attacker_pos - self_pos);
}

inline Vec2 total_force(const BoidsForces& f) { return f.f_sep + f.f_ali + f.f_coh + f.f_att; }

inline NormalizedAction force_to_action(const Vec2& f_world, double psi, const MappingGains& gains) {
  const Vec2 fb = world_to_body(f_world, psi);
  const double common = gains.k_sur * fb.x();
  const double diff = gains.k_yaw * fb.y();
  return {clip(common - diff, -1.0, 1.0), clip(common + diff, -1.0, 1.0)};
}

/// Maps a normalized command onto [tau_min, tau_max] per thruster.
inline ThrustCommand action_to_thrust(const NormalizedAction& a, const ThrustBounds& bounds) {
  auto map = [&](double x) {
    const double c = clip(x, -1.0, 1.0);
    return bounds.tau_min + 0.5 * (c + 1.0) * (bounds.tau_max - bounds.tau_min);
  };
  return {map(a.a_left), map(a.a_right)};
}

/// Inverse of action_to_thrust.
inline NormalizedAction thrust_to_action(const ThrustCommand& t, const ThrustBounds& bounds) {
  auto inv = [&](double tau) {
    return 2.0 * (tau - bounds.tau_min) / (bounds.tau_max - bounds.tau_min) - 1.0;
  };
  return {inv(t.tau_left), inv(t.tau_right)};
}

struct BoidsOutput {
  BoidsForces forces;
  NormalizedAction action;
};

/// Full Boids evaluation for defender `self` against every other defender.
inline BoidsOutput evaluate_boids(std::size_t self, std::span<const VesselState> defenders,
                                  const Vec2& attacker_pos, const BoidsWeights& w,
                                  const MappingGains& gains,
                                  BoidsVariant variant = BoidsVariant::conventional,
                                  BoidsDiagnostics* diag = nullptr) {
  std::vector<Vec2> pos, vel;
  pos.reserve(defenders.size());
  vel.reserve(defenders.size());
  for (std::size_t j = 0; j < defenders.size(); ++j) {
    if (j == self) continue;
    pos.push_back(defenders[j].position());
    vel.push_back(body_to_world({defenders[j].u, defenders[j].v}, defenders[j].psi));
  }
  const VesselState& me = defenders[self];
  const Vec2 my_pos = me.position();
  const Vec2 my_vel = body_to_world({me.u, me.v}, me.psi);

  BoidsOutput out;
  out.forces.f_sep = separation_force(my_pos, pos, w.k_sep, diag);
  out.forces.f_ali = alignment_force(my_vel, vel, w.k_ali, variant);
  out.forces.f_coh = cohesion_force(my_pos, pos, w.k_coh, variant);
  out.forces.f_att = attraction_force(my_pos, attacker_pos, w.k_att);
  out.forces.f_total = total_force(out.forces);
  out.action = force_to_action(out.forces.f_total, me.psi, gains);
  return out;
}

}  // namespace arboids
