#pragma once

#include "stoman/errors.hpp"
#include "stoman/time_grid.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace stoman {

/// Immutable samples of a time-dependent quantity on a uniform grid.
///
/// Storage is shared: shifting (re-anchoring time 0) and coarsening
/// (keeping every f-th sample) are O(1) views, so a shifted series returns
/// bitwise the same samples as the original at corresponding times.
template <class T>
class GridSeries {
 public:
  GridSeries() : grid_(0.0, 0.0, 1.0) {}

  GridSeries(TimeGrid grid, std::vector<T> values)
      : data_(std::make_shared<const std::vector<T>>(std::move(values))),
        base_first_(grid.first_index()),
        grid_(grid) {
    if (data_->size() != grid_.size()) {
      throw ConfigurationError("grid series: " + std::to_string(data_->size()) + " samples for a grid of " +
                               std::to_string(grid_.size()) + " points");
    }
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return grid_.size(); }
  bool empty() const noexcept { return !data_; }

  const T& at_index(std::int64_t k) const {
    if (!grid_.contains_index(k)) {
      throw InsufficientPathError("grid series: index " + std::to_string(k) + " outside [" +
                                  std::to_string(grid_.first_index()) + ", " + std::to_string(grid_.last_index()) +
                                  "]");
    }
    return (*data_)[static_cast<std::size_t>(k * stride_ + offset_ - base_first_)];
  }

  const T& at(double t) const { return at_index(grid_.index_of(t)); }

  /// Position-based access, i = 0 is t_min.
  const T& operator[](std::size_t i) const { return at_index(grid_.first_index() + static_cast<std::int64_t>(i)); }

  /// Series s'(t) = s(t + m * step).
  GridSeries shifted_steps(std::int64_t m) const {
    if (!grid_.contains_index(m)) {
      throw InsufficientPathError("grid series: shift of " + std::to_string(m) + " steps leaves the sampled window");
    }
    GridSeries out = *this;
    out.offset_ = offset_ + m * stride_;
    out.grid_ = TimeGrid::from_indices(grid_.first_index() - m, grid_.last_index() - m, grid_.step());
    return out;
  }

  GridSeries shifted(double t) const { return shifted_steps(grid_.index_of(t)); }

  /// Every factor-th sample, on a grid with step * factor.
  GridSeries coarsened(int factor) const {
    if (factor < 1) throw ConfigurationError("grid series: coarsening factor must be >= 1");
    GridSeries out = *this;
    out.stride_ = stride_ * factor;
    const std::int64_t f = factor;
    const std::int64_t lo = -((-grid_.first_index()) / f);
    const std::int64_t hi = grid_.last_index() / f;
    out.grid_ = TimeGrid::from_indices(lo, hi, grid_.step() * factor);
    return out;
  }

  /// Restrict to a sub-window of the current grid (same step).
  GridSeries restricted(const TimeGrid& window) const {
    if (!grid_.covers(window)) {
      throw InsufficientPathError("grid series: requested window [" + std::to_string(window.t_min()) + ", " +
                                  std::to_string(window.t_max()) + "] not covered");
    }
    GridSeries out = *this;
    out.grid_ = TimeGrid::from_indices(window.first_index(), window.last_index(), grid_.step());
    return out;
  }

  std::vector<T> values() const {
    std::vector<T> v;
    v.reserve(size());
    for (std::int64_t k = grid_.first_index(); k <= grid_.last_index(); ++k) v.push_back(at_index(k));
    return v;
  }

 private:
  std::shared_ptr<const std::vector<T>> data_;
  std::int64_t base_first_ = 0;
  std::int64_t offset_ = 0;
  std::int64_t stride_ = 1;
  TimeGrid grid_;
};

}  // namespace stoman
