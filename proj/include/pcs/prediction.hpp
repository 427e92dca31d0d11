#pragma once

#include <cstddef>
#include <deque>
#include <span>

#include "pcs/traces.hpp"

namespace pcs {

// Exponentially weighted throughput estimator over a trailing time window.
// The recurrence is re-seeded from the first in-window observation on every
// call, so dropping stale samples cannot leak into the estimate.
struct EwmaState {
  double smoothing = 0.3;        // in (0, 1]
  double history_window_s = 30.0;
  double current_estimate = 0.0;  // last value returned, for callers to read
};

// Observations must be time-ordered. Only samples within
// [newest.ts - window, newest.ts] participate. Throws PredictionError when no
// observation falls inside the window (i.e. the span is empty).
double ewma_predict(const EwmaState& state,
                    std::span<const BwSample> observations);

// Fixed-capacity pose history, oldest first.
class FovWindow {
 public:
  explicit FovWindow(std::size_t capacity = 8);

  void push(const FovSample& sample);
  std::size_t size() const { return window_.size(); }
  std::size_t capacity() const { return capacity_; }
  const FovSample& at(std::size_t i) const { return window_.at(i); }
  const FovSample& newest() const;

 private:
  std::size_t capacity_;
  std::deque<FovSample> window_;
};

// Newest sample, restamped at newest.ts + horizon.
FovSample fov_predict_last(const FovWindow& window, double horizon_s);

// Per-dimension ordinary least squares over the window, extrapolated to
// newest.ts + horizon. Angles are unwrapped before the fit and re-wrapped
// after. Degenerate windows (fewer than 2 samples, or all timestamps equal)
// throw PredictionError unless fallback_to_last is set.
FovSample fov_predict_lr(const FovWindow& window, double horizon_s,
                         bool fallback_to_last = false);

}  // namespace pcs
