#include <cmath>
#include <vector>

#include "doctest.h"
#include "pcs/errors.hpp"
#include "pcs/prediction.hpp"
#include "pcs/rng.hpp"

using namespace pcs;

namespace {

// Closed-form EWMA: seed with the first in-window sample, then fold the rest.
// est = (1-s)^(n-1) o_0 + sum_i s (1-s)^(n-1-i) o_i.
double ewma_oracle(double s, const std::vector<BwSample>& obs, double window) {
  const double newest = obs.back().ts_s;
  std::vector<double> in;
  for (const BwSample& o : obs) {
    if (o.ts_s >= newest - window) in.push_back(o.mbps);
  }
  const int n = static_cast<int>(in.size());
  double est = in[0] * std::pow(1.0 - s, n - 1);
  for (int i = 1; i < n; ++i) {
    est += s * std::pow(1.0 - s, n - 1 - i) * in[static_cast<std::size_t>(i)];
  }
  return est;
}

// Normal-equation OLS: slope = (n*Sxy - Sx*Sy) / (n*Sxx - Sx^2).
double ols_oracle(const std::vector<double>& t, const std::vector<double>& y,
                  double at) {
  const double n = static_cast<double>(t.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sx += t[i];
    sy += y[i];
    sxx += t[i] * t[i];
    sxy += t[i] * y[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  return intercept + slope * at;
}

FovWindow linear_window(int n, double slope_x) {
  FovWindow w(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    FovSample s;
    s.ts_s = i;
    s.pos = {slope_x * i, 0.0, 0.0};
    w.push(s);
  }
  return w;
}

}  // namespace

TEST_SUITE("prediction") {

TEST_CASE("ewma hand values") {
  EwmaState st;
  st.smoothing = 0.5;
  const std::vector<BwSample> two = {{0.0, 10.0}, {1.0, 20.0}};
  CHECK(ewma_predict(st, two) == doctest::Approx(15.0).epsilon(1e-12));

  const std::vector<BwSample> constant = {
      {0.0, 10.0}, {1.0, 10.0}, {2.0, 10.0}, {3.0, 10.0}};
  CHECK(ewma_predict(st, constant) == doctest::Approx(10.0).epsilon(1e-12));

  st.smoothing = 1.0;
  const std::vector<BwSample> tail = {{0.0, 42.0}, {5.0, 7.0}};
  CHECK(ewma_predict(st, tail) == 7.0);
}

TEST_CASE("ewma drops samples older than the window") {
  EwmaState st;
  st.smoothing = 0.5;
  st.history_window_s = 30.0;
  const std::vector<BwSample> obs = {{0.0, 1000.0}, {100.0, 10.0}};
  CHECK(ewma_predict(st, obs) == 10.0);  // the stale sample never seeds

  const std::vector<BwSample> edge = {{70.0, 40.0}, {100.0, 10.0}};
  CHECK(ewma_predict(st, edge) == 25.0);  // exactly at the window edge stays in
}

TEST_CASE("ewma errors") {
  EwmaState st;
  CHECK_THROWS_AS(ewma_predict(st, std::vector<BwSample>{}), PredictionError);
  st.smoothing = 0.0;
  CHECK_THROWS_AS(ewma_predict(st, std::vector<BwSample>{{0, 1}}), ConfigError);
  st.smoothing = 1.5;
  CHECK_THROWS_AS(ewma_predict(st, std::vector<BwSample>{{0, 1}}), ConfigError);
}

TEST_CASE("ewma matches the closed-form oracle and stays within bounds") {
  Rng rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    EwmaState st;
    st.smoothing = rng.uniform(0.05, 1.0);
    st.history_window_s = rng.uniform(5.0, 40.0);
    std::vector<BwSample> obs;
    double ts = 0.0;
    const int n = 1 + static_cast<int>(rng.uniform_int(40));
    for (int i = 0; i < n; ++i) {
      ts += rng.uniform(0.2, 4.0);
      obs.push_back({ts, rng.uniform(0.0, 500.0)});
    }
    const double got = ewma_predict(st, obs);
    const double want = ewma_oracle(st.smoothing, obs, st.history_window_s);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));

    double lo = 1e300, hi = -1e300;
    for (const BwSample& o : obs) {
      if (o.ts_s >= obs.back().ts_s - st.history_window_s) {
        lo = std::min(lo, o.mbps);
        hi = std::max(hi, o.mbps);
      }
    }
    CHECK(got >= lo - 1e-9);
    CHECK(got <= hi + 1e-9);
  }
}

TEST_CASE("fov window keeps the newest k samples in order") {
  FovWindow w(3);
  CHECK(w.capacity() == 3);
  for (int i = 0; i < 5; ++i) {
    FovSample s;
    s.ts_s = i;
    s.pos = {double(i), 0, 0};
    w.push(s);
  }
  REQUIRE(w.size() == 3);
  CHECK(w.at(0).ts_s == 2.0);
  CHECK(w.newest().ts_s == 4.0);

  FovSample stale;
  stale.ts_s = 1.0;
  CHECK_THROWS_AS(w.push(stale), ValidationError);
}

TEST_CASE("LAST predictor returns the newest pose restamped") {
  FovWindow w(8);
  FovSample s;
  s.ts_s = 2.0;
  s.pos = {1, 2, 3};
  s.ypr = {10, 20, 30};
  w.push(s);
  const FovSample p = fov_predict_last(w, 0.5);
  CHECK(p.ts_s == 2.5);
  CHECK(p.pos == s.pos);
  CHECK(p.ypr == s.ypr);

  FovWindow empty(8);
  CHECK_THROWS_AS(fov_predict_last(empty, 0.5), PredictionError);
}

TEST_CASE("LR predictor extrapolates exact lines") {
  const FovWindow w = linear_window(8, 2.0);  // x(t) = 2t, t = 1..8
  const FovSample p = fov_predict_lr(w, 1.0);
  CHECK(p.ts_s == 9.0);
  CHECK(p.pos[0] == doctest::Approx(18.0).epsilon(1e-12));
  CHECK(p.pos[1] == doctest::Approx(0.0).epsilon(1e-12));

  // Constant pose stays constant.
  FovWindow c(8);
  for (int i = 0; i < 8; ++i) {
    FovSample s;
    s.ts_s = i;
    s.pos = {4, 5, 6};
    s.ypr = {45, -30, 60};
    c.push(s);
  }
  const FovSample q = fov_predict_lr(c, 2.0);
  for (int k = 0; k < 3; ++k) {
    CHECK(q.pos[static_cast<std::size_t>(k)] ==
          doctest::Approx(c.newest().pos[static_cast<std::size_t>(k)])
              .epsilon(1e-12));
    CHECK(q.ypr[static_cast<std::size_t>(k)] ==
          doctest::Approx(c.newest().ypr[static_cast<std::size_t>(k)])
              .epsilon(1e-12));
  }
}

TEST_CASE("LR predictor handles the yaw seam by unwrapping") {
  FovWindow w(8);
  // Yaw climbs 5 deg per sample through +180: 165, 170, 175, 180, -175...
  double yaw = 160.0;
  for (int i = 0; i < 8; ++i) {
    yaw = wrap_angle_deg(yaw + 5.0);
    FovSample s;
    s.ts_s = i;
    s.ypr = {yaw, 0, 0};
    w.push(s);
  }
  // Last sample is at wrap(200) = -160; one more step of +5 -> -155.
  const FovSample p = fov_predict_lr(w, 1.0);
  CHECK(p.ypr[0] == doctest::Approx(-155.0).epsilon(1e-9));
  CHECK(p.ypr[0] >= -180.0);
  CHECK(p.ypr[0] <= 180.0);
}

TEST_CASE("LR degenerate windows error unless the caller opts into LAST") {
  FovWindow w(8);
  FovSample s;
  s.ts_s = 1.0;
  s.pos = {9, 9, 9};
  w.push(s);
  CHECK_THROWS_AS(fov_predict_lr(w, 1.0), PredictionError);
  const FovSample p = fov_predict_lr(w, 1.0, true);
  CHECK(p.pos == s.pos);
}

TEST_CASE("LR matches the normal-equation oracle on random windows") {
  Rng rng(555);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(7));
    FovWindow w(static_cast<std::size_t>(n));
    std::vector<double> ts;
    std::vector<std::vector<double>> dims(3);
    double t = 0.0;
    for (int i = 0; i < n; ++i) {
      t += rng.uniform(0.05, 1.0);
      FovSample s;
      s.ts_s = t;
      for (int k = 0; k < 3; ++k) {
        s.pos[static_cast<std::size_t>(k)] = rng.uniform(-10, 10);
        dims[static_cast<std::size_t>(k)].push_back(
            s.pos[static_cast<std::size_t>(k)]);
      }
      ts.push_back(t);
      w.push(s);
    }
    const double horizon = rng.uniform(0.0, 2.0);
    const FovSample p = fov_predict_lr(w, horizon);
    for (int k = 0; k < 3; ++k) {
      const double want =
          ols_oracle(ts, dims[static_cast<std::size_t>(k)], t + horizon);
      CHECK(p.pos[static_cast<std::size_t>(k)] ==
            doctest::Approx(want).epsilon(1e-9));
    }
  }
}

}  // TEST_SUITE
