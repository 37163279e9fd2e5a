#pragma once

// Attacker-agility curriculum and the phase schedule for alternating
// defender/attacker training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "arboids/common.hpp"

namespace arboids {

struct CurriculumConfig {
  bool enabled = true;
  double initial = 2.0;
  double increment = 0.25;
  std::int64_t interval = 250'000;  ///< decision steps between increments
  int max_increments = 3;
  double half_width = 0.5;

  void validate() const {
    if (!(initial > 0.0)) throw ConfigError("curriculum.initial must be > 0");
    if (interval < 1) throw ConfigError("curriculum.interval must be >= 1");
    if (max_increments < 0) throw ConfigError("curriculum.max_increments must be >= 0");
    if (half_width < 0.0) throw ConfigError("curriculum.half_width must be >= 0");
    if (!(initial - half_width > 0.0)) throw ConfigError("curriculum: sampled agility could reach zero");
  }
};

/// Piecewise-constant mean agility; flat at `initial` when disabled.
inline double curriculum_mean(std::int64_t step, const CurriculumConfig& c = {}) {
  if (step < 0) throw RuntimeError("curriculum_mean: negative step");
  if (!c.enabled) return c.initial;
  const std::int64_t k = std::min<std::int64_t>(step / c.interval, c.max_increments);
  return c.initial + c.increment * static_cast<double>(k);
}

/// Uniform draw on [mean - half_width, mean + half_width].
inline double sample_agility(double mean, std::mt19937_64& rng, double half_width = 0.5) {
  if (!(mean > half_width)) throw RuntimeError("sample_agility: mean must exceed the half width");
  if (half_width == 0.0) return mean;
  std::uniform_real_distribution<double> d(mean - half_width, mean + half_width);
  return d(rng);
}

enum class Side { defender, attacker };

inline std::string to_string(Side s) { return s == Side::defender ? "defender" : "attacker"; }

struct Phase {
  Side side = Side::defender;
  std::int64_t steps = 0;
  friend bool operator==(const Phase&, const Phase&) = default;
};

struct PhaseSchedule {
  std::vector<Phase> phases;

  std::int64_t total_steps() const {
    std::int64_t t = 0;
    for (const auto& p : phases) t += p.steps;
    return t;
  }

  void validate() const {
    if (phases.empty()) throw ConfigError("phase schedule is empty");
    for (std::size_t k = 0; k < phases.size(); ++k) {
      if (phases[k].steps < 1) throw ConfigError("phase " + std::to_string(k) + " has no steps");
      if (k > 0 && phases[k].side == phases[k - 1].side)
        throw ConfigError("phase schedule sides must alternate (phase " + std::to_string(k) + ")");
    }
  }

  /// `count` equal phases alternating sides, starting with `first`.
  static PhaseSchedule alternating(int count, std::int64_t steps_each, Side first = Side::defender) {
    PhaseSchedule s;
    Side side = first;
    for (int k = 0; k < count; ++k) {
      s.phases.push_back({side, steps_each});
      side = side == Side::defender ? Side::attacker : Side::defender;
    }
    s.validate();
    return s;
  }
};

}  // namespace arboids
