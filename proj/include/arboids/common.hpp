#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace arboids {

using Vec2 = Eigen::Vector2d;

inline constexpr double kPi = std::numbers::pi;

/// Error categories double as CLI exit codes.
enum class ErrorCategory : int { config = 2, io = 3, checkpoint = 4, runtime = 5 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};
struct CheckpointError : Error {
  explicit CheckpointError(const std::string& what) : Error(ErrorCategory::checkpoint, what) {}
};
struct RuntimeError : Error {
  explicit RuntimeError(const std::string& what) : Error(ErrorCategory::runtime, what) {}
};
struct DynamicsError : RuntimeError {
  explicit DynamicsError(const std::string& what) : RuntimeError("dynamics: " + what) {}
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

inline Vec2 unit_or_zero(const Vec2& v, double eps = 1e-12) {
  const double n = v.norm();
  return n < eps ? Vec2::Zero() : Vec2(v / n);
}

inline double clip(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

/// Batch-sized Eigen temporaries sit above glibc's default mmap threshold,
/// so every learner update would map and unmap them (mostly page-fault time).
/// Keeping them on the heap is worth ~10x in training throughput.
inline void tune_allocator() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)once;
#endif
}

/// splitmix64 finalizer; derives independent stream seeds from (base, index).
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace arboids
