#include <gtest/gtest.h>

#include <random>

#include "arboids/curriculum.hpp"

using namespace arboids;

TEST(Curriculum, PlateausAtIntervalBoundaries) {
  const CurriculumConfig c;
  const struct {
    std::int64_t step;
    double mean;
  } cases[] = {{0, 2.0},          {249'999, 2.0},   {250'000, 2.25}, {499'999, 2.25}, {500'000, 2.5},
               {749'999, 2.5},    {750'000, 2.75},  {999'999, 2.75}, {1'000'000, 2.75}, {50'000'000, 2.75}};
  for (const auto& k : cases) EXPECT_DOUBLE_EQ(curriculum_mean(k.step, c), k.mean) << "step " << k.step;
}

TEST(Curriculum, DisabledIsFlat) {
  CurriculumConfig c;
  c.enabled = false;
  c.initial = 1.5;
  for (std::int64_t s : {0, 300'000, 9'000'000}) EXPECT_DOUBLE_EQ(curriculum_mean(s, c), 1.5);
}

TEST(Curriculum, NegativeStepRejected) { EXPECT_THROW(curriculum_mean(-1), RuntimeError); }

TEST(Curriculum, SampledAgilityStaysInBand) {
  const CurriculumConfig c;
  std::mt19937_64 rng(11);
  for (std::int64_t step = 0; step < 1'200'000; step += 997) {
    const double m = curriculum_mean(step, c);
    for (int k = 0; k < 20; ++k) {
      const double a = sample_agility(m, rng, c.half_width);
      ASSERT_GE(a, m - 0.5);
      ASSERT_LE(a, m + 0.5);
    }
  }
}

TEST(Curriculum, SampleMomentsMatchUniform) {
  std::mt19937_64 rng(12);
  const int n = 200'000;
  double s = 0, s2 = 0;
  for (int k = 0; k < n; ++k) {
    const double a = sample_agility(2.25, rng) - 2.25;
    s += a;
    s2 += a * a;
  }
  EXPECT_NEAR(s / n, 0.0, 0.005);
  EXPECT_NEAR(s2 / n, 1.0 / 12.0, 0.002);
}

TEST(Curriculum, ZeroHalfWidthReturnsMean) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(sample_agility(1.5, rng, 0.0), 1.5);
  EXPECT_THROW(sample_agility(0.4, rng, 0.5), RuntimeError);
}

TEST(Curriculum, ValidationRejectsBadValues) {
  CurriculumConfig c;
  c.interval = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.initial = 0.5;  // lower edge hits zero
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.max_increments = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(PhaseSchedule, DefaultAlternatesDefenderFirst) {
  const auto s = PhaseSchedule::alternating(5, 500'000);
  ASSERT_EQ(s.phases.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(s.phases[k].side, k % 2 == 0 ? Side::defender : Side::attacker);
  EXPECT_EQ(s.total_steps(), 2'500'000);
}

TEST(PhaseSchedule, RepeatedSideRejected) {
  PhaseSchedule s{{{Side::defender, 10}, {Side::defender, 10}}};
  EXPECT_THROW(s.validate(), ConfigError);
  PhaseSchedule empty;
  EXPECT_THROW(empty.validate(), ConfigError);
  PhaseSchedule zero{{{Side::attacker, 0}}};
  EXPECT_THROW(zero.validate(), ConfigError);
  PhaseSchedule ok{{{Side::attacker, 3}, {Side::defender, 4}}};
  EXPECT_NO_THROW(ok.validate());
}
