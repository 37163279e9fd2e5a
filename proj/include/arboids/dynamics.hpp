#pragma once

// Planar 3-DoF (surge, sway, yaw) surface-vessel model driven by two
// fixed-angle thrusters, integrated with classical RK4.

#include <array>
#include <cmath>
#include <string>

#include "arboids/common.hpp"

namespace arboids {

/// Pose in the world frame and velocities in the body frame.
struct VesselState {
  double x = 0.0;    ///< m
  double y = 0.0;    ///< m
  double psi = 0.0;  ///< rad, CCW from world +x
  double u = 0.0;    ///< m/s, surge (body +x)
  double v = 0.0;    ///< m/s, sway (body +y, port)
  double r = 0.0;    ///< rad/s, yaw rate (CCW)

  Vec2 position() const { return {x, y}; }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(psi) && std::isfinite(u) &&
           std::isfinite(v) && std::isfinite(r);
  }
  friend bool operator==(const VesselState&, const VesselState&) = default;
};

struct ThrustBounds {
  double tau_min = -500.0;  ///< N, maximum reverse thrust (negative)
  double tau_max = 1000.0;  ///< N

  void validate() const {
    if (!(tau_min < 0.0 && tau_max > 0.0) || !std::isfinite(tau_min) || !std::isfinite(tau_max))
      throw ConfigError("thrust bounds must satisfy tau_min < 0 < tau_max");
  }
  friend bool operator==(const ThrustBounds&, const ThrustBounds&) = default;
};

struct ThrustCommand {
  double tau_left = 0.0;
  double tau_right = 0.0;
  friend bool operator==(const ThrustCommand&, const ThrustCommand&) = default;
};

/// Scalar 3-DoF hydrodynamic coefficients. Defaults give a WAM-V-like
/// platform with a top speed of roughly 5 m/s at 2000 N total thrust.
struct VesselParams {
  double mass = 180.0;
  double iz = 250.0;
  double xudot = 30.0;
  double yvdot = 90.0;
  double nrdot = 60.0;
  double du1 = 70.0;
  double dv1 = 400.0;
  double dr1 = 300.0;
  double du2 = 60.0;
  double dv2 = 500.0;
  double dr2 = 200.0;
  double lever_arm = 1.2;  ///< m, half the thruster spacing
  ThrustBounds thrust{};

  void validate() const {
    if (!(mass > 0.0)) throw ConfigError("vessel.mass must be > 0");
    if (!(iz > 0.0)) throw ConfigError("vessel.iz must be > 0");
    if (!(xudot >= 0.0 && mass > xudot)) throw ConfigError("vessel.xudot must satisfy 0 <= xudot < mass");
    if (!(mass > yvdot)) throw ConfigError("vessel.yvdot must be < mass");
    if (!(iz > nrdot)) throw ConfigError("vessel.nrdot must be < iz");
    if (du1 < 0 || dv1 < 0 || dr1 < 0 || du2 < 0 || dv2 < 0 || dr2 < 0)
      throw ConfigError("vessel damping coefficients must be >= 0");
    if (!(lever_arm > 0.0)) throw ConfigError("vessel.lever_arm must be > 0");
    thrust.validate();
  }
};

inline ThrustCommand clamp_thrust(const ThrustCommand& cmd, const ThrustBounds& bounds) {
  return {clip(cmd.tau_left, bounds.tau_min, bounds.tau_max),
          clip(cmd.tau_right, bounds.tau_min, bounds.tau_max)};
}

/// Rotation by -psi.
inline Vec2 world_to_body(const Vec2& vec, double psi) {
  const double c = std::cos(psi), s = std::sin(psi);
  return {c * vec.x() + s * vec.y(), -s * vec.x() + c * vec.y()};
}

inline Vec2 body_to_world(const Vec2& vec, double psi) {
  const double c = std::cos(psi), s = std::sin(psi);
  return {c * vec.x() - s * vec.y(), s * vec.x() + c * vec.y()};
}

/// Attacker bounds as a constant multiple of the defender bounds.
inline ThrustBounds scale_bounds(const ThrustBounds& defender, double agility) {
  if (!(agility > 0.0) || !std::isfinite(agility))
    throw RuntimeError("agility must be > 0, got " + std::to_string(agility));
  return {agility * defender.tau_min, agility * defender.tau_max};
}

namespace detail {

using StateArray = std::array<double, 6>;  // x, y, psi, u, v, r

inline StateArray vessel_derivative(const StateArray& s, const ThrustCommand& cmd,
                                    const VesselParams& p) {
  const double psi = s[2], u = s[3], v = s[4], r = s[5];
  const double m_u = p.mass - p.xudot;
  const double m_v = p.mass - p.yvdot;
  const double i_r = p.iz - p.nrdot;
  const double c = std::cos(psi), sn = std::sin(psi);
  return {
      u * c - v * sn,
      u * sn + v * c,
      r,
      (cmd.tau_left + cmd.tau_right + m_v * v * r - (p.du1 + p.du2 * std::abs(u)) * u) / m_u,
      (-m_u * u * r - (p.dv1 + p.dv2 * std::abs(v)) * v) / m_v,
      (p.lever_arm * (cmd.tau_right - cmd.tau_left) - (p.dr1 + p.dr2 * std::abs(r)) * r) / i_r,
  };
}

inline StateArray to_array(const VesselState& s) { return {s.x, s.y, s.psi, s.u, s.v, s.r}; }
inline VesselState from_array(const StateArray& a) { return {a[0], a[1], a[2], a[3], a[4], a[5]}; }

}  // namespace detail

/// One RK4 step of length dt. The command must already respect the vessel's
/// bounds; psi is wrapped into (-pi, pi] on return.
inline VesselState step_dynamics(const VesselState& state, const ThrustCommand& cmd,
                                 const VesselParams& params, double dt) {
  if (!state.finite()) throw DynamicsError("non-finite vessel state");
  if (!std::isfinite(cmd.tau_left) || !std::isfinite(cmd.tau_right))
    throw DynamicsError("non-finite thrust command");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DynamicsError("dt must be finite and > 0");

  using detail::StateArray;
  const StateArray s0 = detail::to_array(state);
  auto axpy = [](const StateArray& a, const StateArray& k, double h) {
    StateArray out;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + h * k[i];
    return out;
  };
  const StateArray k1 = detail::vessel_derivative(s0, cmd, params);
  const StateArray k2 = detail::vessel_derivative(axpy(s0, k1, 0.5 * dt), cmd, params);
  const StateArray k3 = detail::vessel_derivative(axpy(s0, k2, 0.5 * dt), cmd, params);
  const StateArray k4 = detail::vessel_derivative(axpy(s0, k3, dt), cmd, params);
  StateArray s1;
  for (std::size_t i = 0; i < s1.size(); ++i)
    s1[i] = s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  s1[2] = wrap_angle(s1[2]);
  VesselState out = detail::from_array(s1);
  if (!out.finite()) throw DynamicsError("integration produced a non-finite state");
  return out;
}

}  // namespace arboids
