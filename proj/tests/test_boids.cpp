#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "arboids/boids.hpp"

using namespace arboids;

namespace {

Vec2 rotate(const Vec2& v, double th) { return body_to_world(v, th); }

std::vector<Vec2> random_points(std::mt19937_64& rng, int n, double span = 30.0) {
  std::uniform_real_distribution<double> d(-span, span);
  std::vector<Vec2> out;
  for (int k = 0; k < n; ++k) out.emplace_back(d(rng), d(rng));
  return out;
}

void expect_vec_near(const Vec2& a, const Vec2& b, double tol) {
  EXPECT_NEAR(a.x(), b.x(), tol);
  EXPECT_NEAR(a.y(), b.y(), tol);
}

}  // namespace

TEST(Separation, SingleNeighbor) {
  const std::vector<Vec2> nb{{1, 0}};
  expect_vec_near(separation_force({0, 0}, nb, 10.0), {-10, 0}, 0.0);
}

TEST(Separation, OpposingNeighborsCancel) {
  const std::vector<Vec2> nb{{1, 0}, {-1, 0}};
  expect_vec_near(separation_force({0, 0}, nb, 10.0), {0, 0}, 0.0);
}

TEST(Separation, MatchesDirectSum) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto nb = random_points(rng, 5);
    const Vec2 self = random_points(rng, 1)[0];
    double sx = 0, sy = 0;
    for (const auto& p : nb) {
      const double dx = p.x() - self.x(), dy = p.y() - self.y();
      const double n = std::hypot(dx, dy);
      sx += dx / n;
      sy += dy / n;
    }
    expect_vec_near(separation_force(self, nb, 10.0), {-10 * sx, -10 * sy}, 1e-12);
  }
}

TEST(Separation, CoincidentNeighborIsClampedAndReported) {
  const std::vector<Vec2> nb{{0, 0}, {2, 0}};
  BoidsDiagnostics diag;
  const Vec2 f = separation_force({0, 0}, nb, 10.0, &diag);
  EXPECT_TRUE(f.allFinite());
  EXPECT_EQ(diag.degenerate_pairs, 1);
  expect_vec_near(f, {-10, 0}, 1e-12);
}

TEST(Alignment, Examples) {
  const std::vector<Vec2> one{{1, 0}};
  expect_vec_near(alignment_force({0, 0}, one, 0.1), {0.1, 0}, 1e-15);
  const std::vector<Vec2> two{{1, 2}, {3, 0}};
  expect_vec_near(alignment_force({2, 1}, two, 0.1), {0, 0}, 1e-15);
  expect_vec_near(alignment_force({2, 1}, std::vector<Vec2>{}, 0.1), {0, 0}, 0.0);
}

TEST(Alignment, MatchesBruteForceMean) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto v = random_points(rng, 4, 5.0);
    const Vec2 self = random_points(rng, 1, 5.0)[0];
    double mx = 0, my = 0;
    for (const auto& p : v) {
      mx += p.x() / 4.0;
      my += p.y() / 4.0;
    }
    expect_vec_near(alignment_force(self, v, 0.1), {0.1 * (mx - self.x()), 0.1 * (my - self.y())}, 1e-12);
    expect_vec_near(alignment_force(self, v, 0.1, BoidsVariant::literal),
                    {0.1 * mx - self.x(), 0.1 * my - self.y()}, 1e-12);
  }
}

TEST(Alignment, VariantsAgreeForStationarySelf) {
  const std::vector<Vec2> v{{1, 0}, {0, 2}};
  expect_vec_near(alignment_force({0, 0}, v, 0.1, BoidsVariant::conventional),
                  alignment_force({0, 0}, v, 0.1, BoidsVariant::literal), 0.0);
}

TEST(Cohesion, Examples) {
  const std::vector<Vec2> nb{{1, 1}, {3, -1}};
  expect_vec_near(cohesion_force({0, 0}, nb, 0.1), {0.2, 0}, 1e-15);
  expect_vec_near(cohesion_force({2, 0}, nb, 0.1), {0, 0}, 1e-15);
}

TEST(Cohesion, MatchesBruteForceCentroid) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto nb = random_points(rng, 3);
    const Vec2 self = random_points(rng, 1)[0];
    const double cx = (nb[0].x() + nb[1].x() + nb[2].x()) / 3.0;
    const double cy = (nb[0].y() + nb[1].y() + nb[2].y()) / 3.0;
    expect_vec_near(cohesion_force(self, nb, 0.1), {0.1 * (cx - self.x()), 0.1 * (cy - self.y())}, 1e-12);
  }
}

TEST(Attraction, Examples) {
  expect_vec_near(attraction_force({0, 0}, {10, 0}, 0.5), {5, 0}, 0.0);
  expect_vec_near(attraction_force({3, 4}, {3, 4}, 0.5), {0, 0}, 0.0);
}

TEST(Attraction, LinearInDistance) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec2 self = random_points(rng, 1)[0];
    const Vec2 dir = random_points(rng, 1)[0];
    const Vec2 f1 = attraction_force(self, self + dir, 0.5);
    const Vec2 f2 = attraction_force(self, self + 2.0 * dir, 0.5);
    expect_vec_near(f2, 2.0 * f1, 1e-12);
  }
}

TEST(TotalForce, Sum) {
  BoidsForces f;
  expect_vec_near(total_force(f), {0, 0}, 0.0);
  f.f_sep = {-10, 0};
  f.f_att = {5, 0};
  expect_vec_near(total_force(f), {-5, 0}, 0.0);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = random_points(rng, 4);
    BoidsForces g{p[0], p[1], p[2], p[3], {}};
    expect_vec_near(total_force(g), {p[0].x() + p[1].x() + p[2].x() + p[3].x(), p[0].y() + p[1].y() + p[2].y() + p[3].y()},
                    1e-12);
  }
}

TEST(ForceToAction, Examples) {
  const MappingGains g{0.001, 0.002};
  EXPECT_EQ(force_to_action({500, 0}, 0.0, g), (NormalizedAction{0.5, 0.5}));
  EXPECT_EQ(force_to_action({0, 500}, 0.0, g), (NormalizedAction{-1.0, 1.0}));
  EXPECT_EQ(force_to_action({-500, 0}, 0.0, g), (NormalizedAction{-0.5, -0.5}));
  // A world-frame force along +y is pure surge for a vessel heading +y.
  const auto a = force_to_action({0, 500}, kPi / 2, g);
  EXPECT_NEAR(a.a_left, 0.5, 1e-12);
  EXPECT_NEAR(a.a_right, 0.5, 1e-12);
}

TEST(ForceToAction, AlwaysInRange) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> f(-1e4, 1e4), ang(-kPi, kPi);
  for (int k = 0; k < 10000; ++k) {
    const auto a = force_to_action({f(rng), f(rng)}, ang(rng), MappingGains{});
    ASSERT_LE(std::abs(a.a_left), 1.0);
    ASSERT_LE(std::abs(a.a_right), 1.0);
  }
}

TEST(ActionToThrust, Endpoints) {
  const ThrustBounds b{-500, 1000};
  EXPECT_EQ(action_to_thrust({1, 1}, b), (ThrustCommand{1000, 1000}));
  EXPECT_EQ(action_to_thrust({-1, -1}, b), (ThrustCommand{-500, -500}));
  EXPECT_EQ(action_to_thrust({0, 0}, b), (ThrustCommand{250, 250}));
  const auto back = thrust_to_action({0, 0}, b);
  EXPECT_NEAR(back.a_left, -1.0 / 3.0, 1e-15);
}

TEST(BoidsProperties, PermutationInvariance) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto pos = random_points(rng, 5);
    auto vel = random_points(rng, 5, 3.0);
    const Vec2 self = random_points(rng, 1)[0];
    const Vec2 fs = separation_force(self, pos, 10), fc = cohesion_force(self, pos, 0.1);
    const Vec2 fa = alignment_force({0.5, 0.2}, vel, 0.1);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(vel.begin(), vel.end(), rng);
    expect_vec_near(separation_force(self, pos, 10), fs, 1e-12);
    expect_vec_near(cohesion_force(self, pos, 0.1), fc, 1e-12);
    expect_vec_near(alignment_force({0.5, 0.2}, vel, 0.1), fa, 1e-12);
  }
}

TEST(BoidsProperties, TranslationInvariance) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pos = random_points(rng, 4);
    const Vec2 self = random_points(rng, 1)[0], att = random_points(rng, 1)[0], shift = random_points(rng, 1)[0];
    std::vector<Vec2> moved;
    for (const auto& p : pos) moved.push_back(p + shift);
    expect_vec_near(separation_force(self + shift, moved, 10), separation_force(self, pos, 10), 1e-10);
    expect_vec_near(cohesion_force(self + shift, moved, 0.1), cohesion_force(self, pos, 0.1), 1e-10);
    expect_vec_near(attraction_force(self + shift, att + shift, 0.5), attraction_force(self, att, 0.5), 1e-10);
  }
}

TEST(BoidsProperties, RotationEquivariance) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pos = random_points(rng, 4);
    const auto vel = random_points(rng, 4, 3.0);
    const Vec2 self = random_points(rng, 1)[0], sv = random_points(rng, 1, 3.0)[0], att = random_points(rng, 1)[0];
    const double th = ang(rng);
    std::vector<Vec2> rp, rv;
    for (const auto& p : pos) rp.push_back(rotate(p, th));
    for (const auto& v : vel) rv.push_back(rotate(v, th));
    expect_vec_near(separation_force(rotate(self, th), rp, 10), rotate(separation_force(self, pos, 10), th), 1e-10);
    expect_vec_near(alignment_force(rotate(sv, th), rv, 0.1), rotate(alignment_force(sv, vel, 0.1), th), 1e-10);
    expect_vec_near(cohesion_force(rotate(self, th), rp, 0.1), rotate(cohesion_force(self, pos, 0.1), th), 1e-10);
    expect_vec_near(attraction_force(rotate(self, th), rotate(att, th), 0.5),
                    rotate(attraction_force(self, att, 0.5), th), 1e-10);
  }
}

TEST(EvaluateBoids, UsesAllOtherDefenders) {
  std::vector<VesselState> d(3);
  d[0] = {0, 0, 0, 1, 0, 0};
  d[1] = {10, 0, kPi / 2, 2, 0, 0};
  d[2] = {0, 10, 0, 0, 0, 0};
  const auto out = evaluate_boids(0, d, {30, 0}, BoidsWeights{}, MappingGains{});
  expect_vec_near(out.forces.f_sep, {-10, -10}, 1e-12);
  expect_vec_near(out.forces.f_coh, {0.5, 0.5}, 1e-12);
  // neighbor velocities in world frame: (0, 2) and (0, 0); self (1, 0)
  expect_vec_near(out.forces.f_ali, {0.1 * (0 - 1), 0.1 * (1 - 0)}, 1e-12);
  expect_vec_near(out.forces.f_att, {15, 0}, 1e-12);
  expect_vec_near(out.forces.f_total, out.forces.f_sep + out.forces.f_ali + out.forces.f_coh + out.forces.f_att, 0.0);
}
