#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

#include <boost/numeric/odeint.hpp>

#include "arboids/dynamics.hpp"

using namespace arboids;

namespace {

// Independent restatement of the 3-DoF equations for the oracles below.
using Ode = std::array<double, 6>;

struct OracleRhs {
  VesselParams p;
  ThrustCommand cmd;
  void operator()(const Ode& s, Ode& ds, double) const {
    const double mu = p.mass - p.xudot, mv = p.mass - p.yvdot, ir = p.iz - p.nrdot;
    const double u = s[3], v = s[4], r = s[5];
    ds[0] = u * std::cos(s[2]) - v * std::sin(s[2]);
    ds[1] = u * std::sin(s[2]) + v * std::cos(s[2]);
    ds[2] = r;
    ds[3] = (cmd.tau_left + cmd.tau_right + mv * v * r - (p.du1 + p.du2 * std::fabs(u)) * u) / mu;
    ds[4] = (-mu * u * r - (p.dv1 + p.dv2 * std::fabs(v)) * v) / mv;
    ds[5] = (p.lever_arm * (cmd.tau_right - cmd.tau_left) - (p.dr1 + p.dr2 * std::fabs(r)) * r) / ir;
  }
};

Ode euler_oracle(const VesselState& s0, const ThrustCommand& cmd, const VesselParams& p, double dt, int sub) {
  Ode s{s0.x, s0.y, s0.psi, s0.u, s0.v, s0.r}, ds{};
  OracleRhs rhs{p, cmd};
  const double h = dt / sub;
  for (int k = 0; k < sub; ++k) {
    rhs(s, ds, 0.0);
    for (int i = 0; i < 6; ++i) s[i] += h * ds[i];
  }
  return s;
}

Ode dopri_oracle(const VesselState& s0, const ThrustCommand& cmd, const VesselParams& p, double dt) {
  namespace odeint = boost::numeric::odeint;
  Ode s{s0.x, s0.y, s0.psi, s0.u, s0.v, s0.r};
  odeint::integrate_adaptive(odeint::make_controlled<odeint::runge_kutta_dopri5<Ode>>(1e-14, 1e-14),
                             OracleRhs{p, cmd}, s, 0.0, dt, dt / 100.0);
  return s;
}

std::array<double, 6> fields(const VesselState& s) { return {s.x, s.y, s.psi, s.u, s.v, s.r}; }

VesselState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-50, 50), ang(-3.0, 3.0), vel(-4, 4), rate(-1, 1);
  return {pos(rng), pos(rng), ang(rng), vel(rng), vel(rng) * 0.3, rate(rng)};
}

ThrustCommand random_cmd(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(-500, 1000);
  return {t(rng), t(rng)};
}

}  // namespace

TEST(Dynamics, ZeroInputFixedPoint) {
  const VesselState rest{};
  EXPECT_EQ(step_dynamics(rest, {0, 0}, VesselParams{}, 0.02), rest);
}

TEST(Dynamics, SymmetricThrustGoesStraight) {
  const VesselState s = step_dynamics({}, {500, 500}, VesselParams{}, 0.02);
  EXPECT_GT(s.u, 0.0);
  EXPECT_EQ(s.v, 0.0);
  EXPECT_EQ(s.r, 0.0);
  EXPECT_EQ(s.y, 0.0);
}

TEST(Dynamics, MatchesFineEulerOracle) {
  std::mt19937_64 rng(7);
  const VesselParams p;
  for (int trial = 0; trial < 50; ++trial) {
    const VesselState s = random_state(rng);
    const ThrustCommand c = random_cmd(rng);
    const auto got = fields(step_dynamics(s, c, p, 0.02));
    const Ode ref = euler_oracle(s, c, p, 0.02, 1000);
    for (int i = 0; i < 6; ++i) {
      double want = ref[static_cast<std::size_t>(i)];
      if (i == 2) want = wrap_angle(want);
      EXPECT_LE(std::fabs(got[static_cast<std::size_t>(i)] - want), 1e-4 * std::max(1.0, std::fabs(want)))
          << "field " << i << " trial " << trial;
    }
  }
}

TEST(Dynamics, RK4IsFourthOrder) {
  const VesselParams p;
  const VesselState s{3.0, -2.0, 0.4, 3.0, 0.8, 0.6};
  const ThrustCommand c{900, 200};
  auto err = [&](double dt) {
    const auto got = fields(step_dynamics(s, c, p, dt));
    const Ode ref = dopri_oracle(s, c, p, dt);
    double e = 0.0;
    for (int i = 0; i < 6; ++i) e = std::max(e, std::fabs(got[static_cast<std::size_t>(i)] - ref[static_cast<std::size_t>(i)]));
    return e;
  };
  const double e1 = err(0.2), e2 = err(0.1);
  EXPECT_GT(e1 / e2, 8.0) << "e(0.2)=" << e1 << " e(0.1)=" << e2;
}

TEST(Dynamics, DampingOnlyDecay) {
  std::mt19937_64 rng(11);
  const VesselParams p;
  for (int trial = 0; trial < 100; ++trial) {
    VesselState s = random_state(rng);
    double prev = std::sqrt(s.u * s.u + s.v * s.v + s.r * s.r);
    for (int k = 0; k < 200; ++k) {
      s = step_dynamics(s, {0, 0}, p, 0.02);
      const double now = std::sqrt(s.u * s.u + s.v * s.v + s.r * s.r);
      ASSERT_LE(now, prev + 1e-12);
      prev = now;
    }
  }
}

TEST(Dynamics, MirrorSymmetry) {
  std::mt19937_64 rng(13);
  const VesselParams p;
  for (int trial = 0; trial < 50; ++trial) {
    VesselState a = random_state(rng);
    a.psi = std::uniform_real_distribution<double>(-2.5, 2.5)(rng);
    VesselState b{a.x, -a.y, -a.psi, a.u, -a.v, -a.r};
    const ThrustCommand c = random_cmd(rng);
    for (int k = 0; k < 50; ++k) {
      a = step_dynamics(a, c, p, 0.02);
      b = step_dynamics(b, {c.tau_right, c.tau_left}, p, 0.02);
    }
    EXPECT_NEAR(a.x, b.x, 1e-10);
    EXPECT_NEAR(a.y, -b.y, 1e-10);
    EXPECT_NEAR(wrap_angle(a.psi + b.psi), 0.0, 1e-10);
    EXPECT_NEAR(a.u, b.u, 1e-10);
    EXPECT_NEAR(a.v, -b.v, 1e-10);
    EXPECT_NEAR(a.r, -b.r, 1e-10);
  }
}

TEST(Dynamics, HeadingStaysWrapped) {
  VesselState s{0, 0, 3.1, 2.0, 0.0, 0.0};
  for (int k = 0; k < 500; ++k) {
    s = step_dynamics(s, {-500, 1000}, VesselParams{}, 0.02);
    ASSERT_GT(s.psi, -kPi);
    ASSERT_LE(s.psi, kPi);
  }
}

TEST(Dynamics, RejectsNonFiniteInput) {
  VesselState bad{};
  bad.u = std::nan("");
  EXPECT_THROW(step_dynamics(bad, {0, 0}, VesselParams{}, 0.02), DynamicsError);
  EXPECT_THROW(step_dynamics({}, {INFINITY, 0}, VesselParams{}, 0.02), DynamicsError);
  EXPECT_THROW(step_dynamics({}, {0, 0}, VesselParams{}, 0.0), DynamicsError);
}

TEST(Dynamics, TopSpeedIsPlausible) {
  VesselState s{};
  for (int k = 0; k < 3000; ++k) s = step_dynamics(s, {1000, 1000}, VesselParams{}, 0.02);
  EXPECT_NEAR(s.u, 5.2, 0.2);
}

TEST(ClampThrust, ClipsEachComponent) {
  const ThrustBounds b{-500, 1000};
  EXPECT_EQ(clamp_thrust({1200, -700}, b), (ThrustCommand{1000, -500}));
  EXPECT_EQ(clamp_thrust({0, 0}, b), (ThrustCommand{0, 0}));
  EXPECT_EQ(clamp_thrust({1000, -500}, b), (ThrustCommand{1000, -500}));
}

TEST(Frames, WorldToBody) {
  const Vec2 a = world_to_body({1, 0}, 0.0);
  EXPECT_DOUBLE_EQ(a.x(), 1.0);
  EXPECT_DOUBLE_EQ(a.y(), 0.0);
  const Vec2 b = world_to_body({1, 0}, kPi / 2);
  EXPECT_NEAR(b.x(), 0.0, 1e-15);
  EXPECT_NEAR(b.y(), -1.0, 1e-15);
}

TEST(Frames, RoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-100, 100), ang(-kPi, kPi);
  for (int k = 0; k < 100; ++k) {
    const Vec2 v(d(rng), d(rng));
    const double psi = ang(rng);
    const Vec2 back = body_to_world(world_to_body(v, psi), psi);
    EXPECT_NEAR(back.x(), v.x(), 1e-12);
    EXPECT_NEAR(back.y(), v.y(), 1e-12);
  }
}

TEST(ScaleBounds, Agility) {
  const ThrustBounds d{-500, 1000};
  EXPECT_EQ(scale_bounds(d, 2.0), (ThrustBounds{-1000, 2000}));
  EXPECT_EQ(scale_bounds(d, 1.0), d);
  EXPECT_EQ(scale_bounds(d, 2.25), (ThrustBounds{-1125, 2250}));
  EXPECT_THROW(scale_bounds(d, 0.0), RuntimeError);
  EXPECT_THROW(scale_bounds(d, -1.0), RuntimeError);
}

TEST(VesselParams, Validation) {
  EXPECT_NO_THROW(VesselParams{}.validate());
  VesselParams p;
  p.xudot = 200;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.thrust = {100, 1000};
  EXPECT_THROW(p.validate(), ConfigError);
}
