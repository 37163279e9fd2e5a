#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <variant>
#include <random>
#include <vector>

#include "arboids/apf.hpp"
#include "arboids/engagement.hpp"

using namespace arboids;

namespace {

VesselState at(double x, double y, double psi = 0.0) { return {x, y, psi, 0, 0, 0}; }

EngagementState scene(std::vector<VesselState> defenders, VesselState attacker, double t = 0.0) {
  EngagementState s;
  s.defenders = std::move(defenders);
  s.attacker = attacker;
  s.t = t;
  return s;
}

}  // namespace

TEST(EngagementConfig, DefaultsValidate) {
  EngagementConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.substeps_per_action(), 10);
  EXPECT_EQ(c.max_substeps(), 3000);
  c.r0 = 4.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.t_action = 0.7;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Reset, DeterministicForSeed) {
  EngagementConfig c;
  const auto a = reset(c, 42), b = reset(c, 42);
  ASSERT_EQ(a.defenders.size(), b.defenders.size());
  for (std::size_t i = 0; i < a.defenders.size(); ++i) EXPECT_EQ(a.defenders[i], b.defenders[i]);
  EXPECT_EQ(a.attacker, b.attacker);
  EXPECT_NE(reset(c, 43).attacker, a.attacker);
}

TEST(Reset, Geometry) {
  EngagementConfig c;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = reset(c, seed);
    EXPECT_NEAR(s.attacker.position().norm(), 60.0, 1e-12);
    EXPECT_NEAR(wrap_angle(s.attacker.psi - std::atan2(-s.attacker.y, -s.attacker.x)), 0.0, 1e-12);
    EXPECT_EQ(s.t, 0.0);
    EXPECT_FALSE(s.terminal.has_value());
    for (const auto& d : s.defenders) {
      EXPECT_NEAR(d.position().norm(), 7.5, 1e-12);
      EXPECT_NEAR(wrap_angle(d.psi - std::atan2(d.y, d.x)), 0.0, 1e-12);
      EXPECT_EQ(d.u, 0.0);
    }
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = i + 1; j < 3; ++j)
        EXPECT_NEAR((s.defenders[i].position() - s.defenders[j].position()).norm(), 2 * 7.5 * std::sin(kPi / 3), 1e-9);
  }
  EXPECT_NEAR(2 * 7.5 * std::sin(kPi / 3), 12.99, 0.01);
}

TEST(Reset, SpawnSectorRespected) {
  EngagementConfig c;
  c.spawn_min = 0.2;
  c.spawn_max = 0.5;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = reset(c, seed);
    const double b = std::atan2(s.attacker.y, s.attacker.x);
    EXPECT_GE(b, 0.2 - 1e-12);
    EXPECT_LE(b, 0.5 + 1e-12);
  }
}

TEST(Reset, RingViolatingCollisionRadiusIsRejected) {
  EngagementConfig c;
  c.n_defenders = 6;
  c.r_collision = 8.0;
  EXPECT_THROW(reset(c, 1), ConfigError);
}

TEST(Termination, SingleConditions) {
  EngagementConfig c;
  auto term = [&](std::vector<Vec2> d, Vec2 a, double t) { return check_termination(d, a, t, c); };
  EXPECT_EQ(term({{30, 0}, {0, 30}}, {34.9, 0}, 0), EpisodeOutcome(CaptureSuccess{0}));
  EXPECT_EQ(term({{0, 30}, {30, 0}}, {34.9, 0}, 0), EpisodeOutcome(CaptureSuccess{1}));
  EXPECT_EQ(term({{0, 0}}, {14, 0}, 0), EpisodeOutcome(BreachFailure{}));
  EXPECT_EQ(term({{0, 0}}, {40, 0}, 60.0), EpisodeOutcome(TimeoutSuccess{}));
  EXPECT_EQ(term({{0, 0}, {2, 0}}, {40, 0}, 0), EpisodeOutcome(CollisionFailure{0, 1}));
  EXPECT_FALSE(term({{0, 0}}, {40, 0}, 10.0).has_value());
}

TEST(Termination, Boundaries) {
  EngagementConfig c;
  auto term = [&](std::vector<Vec2> d, Vec2 a, double t) { return check_termination(d, a, t, c); };
  EXPECT_FALSE(term({{30, 0}}, {35, 0}, 0).has_value()) << "capture is strict";
  EXPECT_EQ(term({{0, 0}, {3, 0}}, {40, 0}, 0), EpisodeOutcome(CollisionFailure{0, 1})) << "collision is inclusive";
  EXPECT_EQ(term({{40, 40}}, {15, 0}, 0), EpisodeOutcome(BreachFailure{})) << "breach is inclusive";
  EXPECT_FALSE(term({{0, 0}}, {40, 0}, 59.8).has_value());
}

TEST(Termination, Precedence) {
  EngagementConfig c;
  auto term = [&](std::vector<Vec2> d, Vec2 a, double t) { return check_termination(d, a, t, c); };
  // capture beats collision, breach and timeout
  EXPECT_EQ(term({{10, 0}, {11, 0}}, {14, 0}, 60), EpisodeOutcome(CaptureSuccess{1}));
  // collision beats breach and timeout
  EXPECT_EQ(term({{30, 30}, {31, 30}}, {14, 0}, 60), EpisodeOutcome(CollisionFailure{0, 1}));
  // breach beats timeout
  EXPECT_EQ(term({{30, 30}}, {14, 0}, 60), EpisodeOutcome(BreachFailure{}));
}

TEST(Step, ActionEndpointsMapToThrustBounds) {
  EngagementConfig c;
  c.n_defenders = 1;
  auto s = scene({at(0, 0)}, at(60, 0, kPi));
  const std::vector<NormalizedAction> full{{1, 1}};
  auto r = step(s, full, {0, 0}, c);
  EXPECT_EQ(r.defender_thrusts[0], (ThrustCommand{1000, 1000}));
  EXPECT_EQ(r.attacker_thrust, (ThrustCommand{250 * 2.0, 250 * 2.0}));
  auto s2 = scene({at(0, 0)}, at(60, 0, kPi));
  const std::vector<NormalizedAction> rev{{-1, -1}};
  r = step(s2, rev, {-1, -1}, c);
  EXPECT_EQ(r.defender_thrusts[0], (ThrustCommand{-500, -500}));
  EXPECT_EQ(r.attacker_thrust, (ThrustCommand{-1000, -1000}));
  EXPECT_EQ(r.substeps_taken, 10);
  EXPECT_NEAR(s2.t, 0.2, 1e-12);
}

TEST(Step, CaptureMidDecisionStep) {
  EngagementConfig c;
  c.n_defenders = 1;
  // Travel of a full-thrust attacker from rest, substep by substep.
  std::vector<double> travel;
  VesselState probe = at(0, 0);
  const ThrustCommand full = action_to_thrust({1, 1}, c.attacker_bounds());
  for (int k = 0; k < 10; ++k) {
    probe = step_dynamics(probe, full, c.vessel, c.physics_dt);
    travel.push_back(probe.x);
  }
  const double start_gap = 5.0 + 0.5 * (travel[1] + travel[2]);
  auto s = scene({at(40, 0)}, at(40 + start_gap, 0, kPi));
  const std::vector<NormalizedAction> idle{{-1.0 / 3.0, -1.0 / 3.0}};
  const auto r = step(s, idle, {1, 1}, c);
  EXPECT_EQ(r.substeps_taken, 3);
  ASSERT_TRUE(r.outcome.has_value());
  EXPECT_EQ(*r.outcome, EpisodeOutcome(CaptureSuccess{0}));
  EXPECT_NEAR(s.t, 0.06, 1e-12);
  EXPECT_NEAR(r.rewards[0].main, 100.0, 0.0);
  EXPECT_THROW(step(s, idle, {1, 1}, c), RuntimeError);
}

TEST(Step, RejectsWrongActionCount) {
  EngagementConfig c;
  auto s = reset(c, 1);
  const std::vector<NormalizedAction> two(2);
  EXPECT_THROW(step(s, two, {}, c), RuntimeError);
}

TEST(Step, ExactlyOneOutcomePerEpisode) {
  EngagementConfig c;
  ApfParams apf;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Engagement env(c);
    env.reset(seed);
    int outcomes = 0;
    while (!env.state().terminal) {
      std::vector<NormalizedAction> acts;
      for (int i = 0; i < c.n_defenders; ++i) acts.push_back(env.boids(i).action);
      const auto pos = defender_positions(env.state());
      const auto r = env.step(acts, apf_action(env.state().attacker, pos, Vec2::Zero(), apf));
      if (r.outcome) ++outcomes;
    }
    EXPECT_EQ(outcomes, 1);
    const std::vector<NormalizedAction> acts(static_cast<std::size_t>(c.n_defenders));
    EXPECT_THROW(env.step(acts, {}), RuntimeError);
  }
}

TEST(Reward, SelfCaptureWithSingleDefender) {
  EngagementConfig c;
  c.n_defenders = 1;
  const auto s = scene({at(26, 0)}, at(30, 0));
  const auto o = check_termination(s, c);
  ASSERT_EQ(o, EpisodeOutcome(CaptureSuccess{0}));
  const auto r = compute_reward(0, s, s, o, c);
  EXPECT_EQ(r.main, 100.0);
  EXPECT_DOUBLE_EQ(r.formation, -0.5);
  EXPECT_DOUBLE_EQ(r.total(), 99.5);
}

TEST(Reward, HelperReward) {
  EngagementConfig c;
  c.n_defenders = 2;
  const auto s = scene({at(36, 0), at(40, 12)}, at(40, 0));
  const auto o = check_termination(s, c);
  ASSERT_EQ(o, EpisodeOutcome(CaptureSuccess{0}));
  EXPECT_EQ(compute_reward(1, s, s, o, c).main, 50.0);
  const auto far = scene({at(36, 0), at(40, 16)}, at(40, 0));
  EXPECT_EQ(compute_reward(1, far, far, check_termination(far, c), c).main, 0.0);
}

TEST(Reward, FormationTwoDefendersAt45Degrees) {
  EngagementConfig c;
  c.n_defenders = 2;
  const double h = 10.0 / std::sqrt(2.0);
  const auto s = scene({at(40 - h, h), at(40 - h, -h)}, at(40, 0));
  const auto r = compute_reward(0, s, s, std::nullopt, c);
  EXPECT_NEAR(r.formation, 0.5 - std::sqrt(2.0) / 2.0, 1e-12);
  EXPECT_NEAR(r.formation, -0.2071, 1e-4);
  EXPECT_EQ(r.main, 0.0);
}

TEST(Reward, DegenerateFormationIsZero) {
  EngagementConfig c;
  c.n_defenders = 2;
  const auto s = scene({at(30, 0), at(50, 0)}, at(40, 0));
  EXPECT_EQ(compute_reward(0, s, s, std::nullopt, c).formation, 0.0);
}

TEST(Reward, BreachAndCollision) {
  EngagementConfig c;
  c.n_defenders = 3;
  const auto breach = scene({at(0, 30), at(0, -30), at(-30, 0)}, at(14, 0));
  const auto ob = check_termination(breach, c);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(compute_reward(i, breach, breach, ob, c).main, -100.0);
  const auto coll = scene({at(20, 20), at(21, 20), at(-30, 0)}, at(40, 0));
  const auto oc = check_termination(coll, c);
  ASSERT_EQ(oc, EpisodeOutcome(CollisionFailure{0, 1}));
  EXPECT_EQ(compute_reward(0, coll, coll, oc, c).collision, -50.0);
  EXPECT_EQ(compute_reward(1, coll, coll, oc, c).collision, -50.0);
  EXPECT_EQ(compute_reward(2, coll, coll, oc, c).collision, 0.0);
  EXPECT_EQ(compute_reward(0, coll, coll, oc, c).main, 0.0);
}

TEST(Reward, FormationDisabledByAblation) {
  EngagementConfig c;
  c.n_defenders = 1;
  c.formation_reward = false;
  const auto s = scene({at(26, 0)}, at(30, 0));
  EXPECT_EQ(compute_reward(0, s, s, check_termination(s, c), c).total(), 100.0);
}

TEST(RewardProperties, RangesOnRandomScenes) {
  EngagementConfig c;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-60, 60);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + trial % 5;
    c.n_defenders = n;
    std::vector<VesselState> ds;
    for (int i = 0; i < n; ++i) ds.push_back(at(d(rng), d(rng)));
    const auto s = scene(ds, at(d(rng), d(rng)), 10.0);
    const auto o = check_termination(s, c);
    for (int i = 0; i < n; ++i) {
      const auto r = compute_reward(i, s, s, o, c);
      EXPECT_TRUE(r.main == -100 || r.main == 0 || r.main == 50 || r.main == 100);
      EXPECT_TRUE(r.collision == 0 || r.collision == -50);
      EXPECT_GE(r.formation, -1.5 - 1e-12);
      EXPECT_LE(r.formation, 0.5 + 1e-12);
    }
  }
}

TEST(RewardProperties, RotationInvariance) {
  EngagementConfig c;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> d(-40, 40), ang(-kPi, kPi);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<VesselState> ds;
    for (int i = 0; i < 3; ++i) ds.push_back(at(d(rng), d(rng), ang(rng)));
    const auto s = scene(ds, at(d(rng), d(rng), ang(rng)), 5.0);
    const double th = ang(rng);
    auto rot = [&](const VesselState& v) {
      const Vec2 p = body_to_world(v.position(), th);
      return VesselState{p.x(), p.y(), wrap_angle(v.psi + th), v.u, v.v, v.r};
    };
    std::vector<VesselState> rd;
    for (const auto& v : ds) rd.push_back(rot(v));
    const auto s2 = scene(rd, rot(s.attacker), 5.0);
    const auto o1 = check_termination(s, c), o2 = check_termination(s2, c);
    ASSERT_EQ(o1, o2);
    for (int i = 0; i < 3; ++i)
      EXPECT_NEAR(compute_reward(i, s, s, o1, c).total(), compute_reward(i, s2, s2, o2, c).total(), 1e-9);
  }
}

TEST(Observation, FrameConventions) {
  EngagementConfig c;
  c.n_defenders = 2;
  const auto s = scene({at(20, 0, 0.0), at(20, 8, 0.0)}, at(30, 0));
  const BoidsOutput none{};
  std::mt19937_64 rng(1);
  const auto o = compute_observation(0, s, none, c, false, &rng);
  EXPECT_NEAR(o.attacker_target.phi_a, 0.0, 1e-15);
  EXPECT_NEAR(o.attacker_target.d_a, 10.0, 1e-12);
  EXPECT_NEAR(o.attacker_target.phi_t, kPi, 1e-12);
  EXPECT_NEAR(o.attacker_target.d_t, 20.0, 1e-12);
  ASSERT_EQ(o.teammates.size(), 1u);
  EXPECT_NEAR(o.teammates[0].bearing, kPi / 2, 1e-12);
  EXPECT_NEAR(o.teammates[0].distance, 8.0, 1e-12);
}

TEST(Observation, NoiseOnlyTouchesAttackerTargetBlock) {
  EngagementConfig c;
  Engagement env(c);
  env.reset(3);
  const auto clean1 = env.observe(0, false);
  const auto clean2 = env.observe(0, false);
  EXPECT_EQ(clean1.attacker_target, clean2.attacker_target);
  EXPECT_EQ(clean1.teammates, clean2.teammates);
  const auto noisy = env.observe(0, true);
  EXPECT_NE(noisy.attacker_target, clean1.attacker_target);
  EXPECT_EQ(noisy.teammates, clean1.teammates);
  EXPECT_EQ(noisy.boids.a_boids, clean1.boids.a_boids);
  EXPECT_GE(noisy.attacker_target.d_a, 0.0);
}

TEST(Observation, TeammatePermutation) {
  EngagementConfig c;
  c.n_defenders = 4;
  const auto s = scene({at(0, 0, 0.3), at(10, 0), at(0, 12), at(-9, -9)}, at(40, 0));
  auto perm = s;
  std::swap(perm.defenders[1], perm.defenders[3]);
  const BoidsOutput none{};
  const auto a = compute_observation(0, s, none, c, false, nullptr);
  const auto b = compute_observation(0, perm, none, c, false, nullptr);
  EXPECT_EQ(a.teammates[0], b.teammates[2]);
  EXPECT_EQ(a.teammates[1], b.teammates[1]);
  EXPECT_EQ(a.teammates[2], b.teammates[0]);
  EXPECT_EQ(a.attacker_target, b.attacker_target);
}

TEST(Observation, BearingsWrapped) {
  EngagementConfig c;
  Engagement env(c);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    env.reset(seed);
    for (int i = 0; i < c.n_defenders; ++i) {
      const auto o = env.observe(i, true);
      for (const auto& t : o.teammates) {
        EXPECT_GT(t.bearing, -kPi);
        EXPECT_LE(t.bearing, kPi);
      }
      EXPECT_GT(o.attacker_target.phi_a, -kPi);
      EXPECT_LE(o.attacker_target.phi_a, kPi);
    }
  }
}

namespace {

// Raw-coordinate restatement of the per-agent reward, given the outcome.
double reward_oracle(int i, const std::vector<Vec2>& d, const Vec2& a, const std::optional<EpisodeOutcome>& o,
                     const EngagementConfig& c) {
  const int n = static_cast<int>(d.size());
  double main = 0.0, coll = 0.0;
  const double dia = std::hypot(a.x() - d[i].x(), a.y() - d[i].y());
  if (o && std::holds_alternative<BreachFailure>(*o)) main = -100.0;
  if (o && std::holds_alternative<CaptureSuccess>(*o)) {
    if (std::get<CaptureSuccess>(*o).defender == i || dia <= c.r_cap) main = 100.0;
    else if (dia <= 3.0 * c.r_cap) main = 50.0;
  }
  if (o && std::holds_alternative<CollisionFailure>(*o)) {
    for (int j = 0; j < n; ++j)
      if (j != i && std::hypot(d[i].x() - d[j].x(), d[i].y() - d[j].y()) <= c.r_collision) coll = -50.0;
  }
  double sx = 0, sy = 0;
  for (const auto& p : d) {
    const double dx = a.x() - p.x(), dy = a.y() - p.y(), nn = std::hypot(dx, dy);
    sx += dx / nn;
    sy += dy / nn;
  }
  const double sn = std::hypot(sx, sy);
  double form = 0.0;
  if (sn >= 1e-9 && c.formation_reward) {
    const double an = std::hypot(a.x(), a.y());
    form = 0.5 * (a.x() / an * sx / sn + a.y() / an * sy / sn) - sn / n;
  }
  return main + form + coll;
}

}  // namespace

TEST(RewardProperties, MatchesRawCoordinateOracle) {
  EngagementConfig c;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> d(-30, 30), near(-6, 6);
  int decisive = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + trial % 4;
    c.n_defenders = n;
    const Vec2 a(d(rng) + 20, d(rng));
    std::vector<VesselState> ds;
    for (int k = 0; k < n; ++k) {
      // cluster half of the scenes near the attacker so captures and collisions occur
      const bool close = trial % 2 == 0;
      ds.push_back(at(close ? a.x() + near(rng) * 2 : d(rng), close ? a.y() + near(rng) * 2 : d(rng)));
    }
    const auto s = scene(ds, at(a.x(), a.y()), 3.0);
    const auto o = check_termination(s, c);
    if (o) ++decisive;
    const auto pos = defender_positions(s);
    for (int i = 0; i < n; ++i)
      EXPECT_NEAR(compute_reward(i, s, s, o, c).total(), reward_oracle(i, pos, a, o, c), 1e-10);
  }
  EXPECT_GT(decisive, 200);
}
