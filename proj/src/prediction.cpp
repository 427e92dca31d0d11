#include "pcs/prediction.hpp"

#include <cmath>
#include <vector>

#include "pcs/errors.hpp"

namespace pcs {

double ewma_predict(const EwmaState& state,
                    std::span<const BwSample> observations) {
  if (!(state.smoothing > 0.0 && state.smoothing <= 1.0))
    throw ConfigError("ewma smoothing must lie in (0, 1]");
  if (observations.empty())
    throw PredictionError("ewma: no throughput observations");
  double horizon_start =
      observations.back().ts_s - state.history_window_s;
  double est = 0.0;
  bool seeded = false;
  for (const auto& obs : observations) {
    if (obs.ts_s < horizon_start) continue;
    if (!seeded) {
      est = obs.mbps;
      seeded = true;
    } else {
      est = state.smoothing * obs.mbps + (1.0 - state.smoothing) * est;
    }
  }
  if (!seeded) throw PredictionError("ewma: window is empty");
  return est;
}

FovWindow::FovWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("fov window capacity must be >= 1");
}

void FovWindow::push(const FovSample& sample) {
  if (!window_.empty() && sample.ts_s < window_.back().ts_s)
    throw ValidationError("fov window samples must be time-ordered");
  window_.push_back(sample);
  if (window_.size() > capacity_) window_.pop_front();
}

const FovSample& FovWindow::newest() const {
  if (window_.empty()) throw PredictionError("fov window is empty");
  return window_.back();
}

FovSample fov_predict_last(const FovWindow& window, double horizon_s) {
  FovSample out = window.newest();
  out.ts_s += horizon_s;
  return out;
}

namespace {

struct OlsFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Plain OLS; callers guarantee a non-degenerate spread of xs.
OlsFit fit_line(std::span<const double> xs, std::span<const double> ys) {
  std::size_t n = xs.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  OlsFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

}  // namespace

FovSample fov_predict_lr(const FovWindow& window, double horizon_s,
                         bool fallback_to_last) {
  std::size_t n = window.size();
  if (n == 0) throw PredictionError("fov window is empty");
  bool degenerate = n < 2;
  if (!degenerate) {
    double first = window.at(0).ts_s;
    double spread = window.newest().ts_s - first;
    degenerate = !(spread > 0.0);
  }
  if (degenerate) {
    if (fallback_to_last) return fov_predict_last(window, horizon_s);
    throw PredictionError(
        "fov regression window is degenerate (need >= 2 spread-out samples)");
  }

  std::vector<double> ts(n);
  for (std::size_t i = 0; i < n; ++i) ts[i] = window.at(i).ts_s;
  double target = window.newest().ts_s + horizon_s;

  FovSample out;
  out.ts_s = target;
  for (int d = 0; d < 3; ++d) {
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = window.at(i).pos[d];
    OlsFit fit = fit_line(ts, ys);
    out.pos[d] = fit.intercept + fit.slope * target;
  }
  for (int d = 0; d < 3; ++d) {
    // Unwrap: accumulate shortest-arc deltas so the fit sees a continuous
    // angle track, then wrap the extrapolation back to [-180, 180].
    std::vector<double> ys(n);
    ys[0] = window.at(0).ypr[d];
    for (std::size_t i = 1; i < n; ++i)
      ys[i] = ys[i - 1] +
              wrap_angle_deg(window.at(i).ypr[d] - window.at(i - 1).ypr[d]);
    OlsFit fit = fit_line(ts, ys);
    out.ypr[d] = wrap_angle_deg(fit.intercept + fit.slope * target);
  }
  return out;
}

}  // namespace pcs
