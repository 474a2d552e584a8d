#pragma once

#include "stoman/errors.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>

namespace stoman {

/// Uniform grid t_k = k * step for integer k in [first, last], with 0 on the
/// grid. Times are always produced as k * step so that t = 0 is exact and
/// shifting by a grid multiple never accumulates drift.
class TimeGrid {
 public:
  /// Relative tolerance used to decide whether a time lies on the grid.
  static constexpr double kAlignTol = 1e-9;

  TimeGrid(double t_min, double t_max, double step) : step_(step) {
    if (!(step > 0.0) || !std::isfinite(step)) {
      throw ConfigurationError("time grid: step must be positive, got " + std::to_string(step));
    }
    if (!(t_min <= 0.0 && 0.0 <= t_max)) {
      throw ConfigurationError("time grid: need t_min <= 0 <= t_max");
    }
    first_ = integral_or_throw(t_min / step, "t_min");
    last_ = integral_or_throw(t_max / step, "t_max");
  }

  static TimeGrid from_indices(std::int64_t first, std::int64_t last, double step) {
    if (first > 0 || last < 0) {
      throw ConfigurationError("time grid: index window must contain 0");
    }
    TimeGrid g(0.0, 0.0, step);
    g.first_ = first;
    g.last_ = last;
    return g;
  }

  double step() const noexcept { return step_; }
  std::int64_t first_index() const noexcept { return first_; }
  std::int64_t last_index() const noexcept { return last_; }
  double t_min() const noexcept { return static_cast<double>(first_) * step_; }
  double t_max() const noexcept { return static_cast<double>(last_) * step_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(last_ - first_ + 1); }

  /// Time of the grid point with global index k.
  double time_at(std::int64_t k) const noexcept { return static_cast<double>(k) * step_; }
  /// Time of the i-th stored point (i = 0 is t_min).
  double time(std::size_t i) const noexcept { return time_at(first_ + static_cast<std::int64_t>(i)); }

  bool contains_index(std::int64_t k) const noexcept { return k >= first_ && k <= last_; }

  /// Global index of t; AlignmentError if t is not a grid multiple.
  std::int64_t index_of(double t) const { return steps_in(t, "time"); }

  /// Number of whole steps in a duration; AlignmentError otherwise.
  std::int64_t steps_in(double duration, const char* what) const {
    const double q = duration / step_;
    const double r = std::round(q);
    if (std::abs(q - r) > kAlignTol * std::max(1.0, std::abs(q))) {
      std::ostringstream os;
      os << what << " " << duration << " is not a multiple of the grid step " << step_;
      throw AlignmentError(os.str());
    }
    return static_cast<std::int64_t>(r);
  }

  /// Storage position of t; AlignmentError if off-grid, InsufficientPathError
  /// if outside [t_min, t_max].
  std::size_t position_of(double t) const {
    const std::int64_t k = index_of(t);
    if (!contains_index(k)) {
      std::ostringstream os;
      os << "time " << t << " outside grid [" << t_min() << ", " << t_max() << "]";
      throw InsufficientPathError(os.str());
    }
    return static_cast<std::size_t>(k - first_);
  }

  /// True when [other.t_min, other.t_max] lies inside this grid and both share
  /// the step.
  bool covers(const TimeGrid& other) const noexcept {
    return same_step(other) && other.first_ >= first_ && other.last_ <= last_;
  }

  bool same_step(const TimeGrid& other) const noexcept {
    return std::abs(other.step_ - step_) <= kAlignTol * step_;
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
    return a.first_ == b.first_ && a.last_ == b.last_ && a.step_ == b.step_;
  }

 private:
  std::int64_t integral_or_throw(double q, const char* what) const {
    const double r = std::round(q);
    if (std::abs(q - r) > kAlignTol * std::max(1.0, std::abs(q))) {
      throw ConfigurationError(std::string("time grid: ") + what + " is not a multiple of step");
    }
    return static_cast<std::int64_t>(r);
  }

  double step_;
  std::int64_t first_ = 0;
  std::int64_t last_ = 0;
};

}  // namespace stoman
