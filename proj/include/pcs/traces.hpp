#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace pcs {

struct BwSample {
  double ts_s = 0.0;
  double mbps = 0.0;
};

// Piecewise-linear throughput over time. Outside the sampled span the first /
// last value is held constant.
struct BandwidthTrace {
  std::vector<BwSample> samples;
  std::string mobility_tag;  // free-form label carried through generators

  double span_s() const;
  double value_at(double t) const;
  // Integral of throughput over [t0, t1], in bytes.
  double bytes_over(double t0, double t1) const;
  // Smallest dt such that bytes_over(start, start + dt) == bytes. A zero-rate
  // tail is floored at a tiny rate so the result stays finite.
  double time_to_download(double start_s, double bytes) const;
};

BandwidthTrace load_bandwidth_trace(const std::filesystem::path& csv_path);
BandwidthTrace parse_bandwidth_csv(const std::string& text,
                                   const std::string& origin = "<string>");
std::string format_bandwidth_csv(const BandwidthTrace& trace);
void write_bandwidth_trace(const BandwidthTrace& trace,
                           const std::filesystem::path& csv_path);

// Gaussian jitter around a (possibly regime-switching) mean, sampled on a
// fixed interval, clipped at zero. switch_prob toggles the mean between 1x
// and low_regime_factor x once per sample.
struct BwSynthModel {
  double mean_mbps = 400.0;
  double volatility = 0.2;       // sigma as a fraction of the regime mean
  double regime_switch_prob = 0.0;
  double low_regime_factor = 0.4;
  double sample_interval_s = 1.0;
};

BandwidthTrace generate_synthetic_bandwidth(std::uint64_t seed,
                                            const BwSynthModel& model,
                                            double duration_s);

// One viewport pose: position in meters, yaw/pitch/roll in degrees wrapped to
// [-180, 180].
struct FovSample {
  double ts_s = 0.0;
  std::array<double, 3> pos = {0.0, 0.0, 0.0};
  std::array<double, 3> ypr = {0.0, 0.0, 0.0};
};

struct FovTrace {
  std::vector<FovSample> samples;

  double span_s() const;
  // Linear interpolation; angles take the shortest arc and re-wrap.
  FovSample sample_at(double t) const;
};

FovTrace load_fov_trace(const std::filesystem::path& csv_path);
FovTrace parse_fov_csv(const std::string& text,
                       const std::string& origin = "<string>");
std::string format_fov_csv(const FovTrace& trace);
void write_fov_trace(const FovTrace& trace,
                     const std::filesystem::path& csv_path);

// Mean-reverting random walk around `center`; orientation diffuses from
// start_ypr and wraps. Zero steps give a constant pose.
struct FovSynthModel {
  std::array<double, 3> center = {1.6, 0.0, 1.0};
  std::array<double, 3> start_ypr = {180.0, 0.0, 0.0};
  double pos_step_m = 0.05;
  double ang_step_deg = 2.0;
  double pull = 0.05;  // fraction of the offset recovered per sample
  double sample_interval_s = 0.1;
};

FovTrace generate_synthetic_fov(std::uint64_t seed, const FovSynthModel& model,
                                double duration_s);

// Decode capacity over time: a base value plus an optional step schedule of
// (from_ts, capacity) pairs sorted by time.
struct ComputeBudgetTrace {
  double capacity = 500.0;
  std::vector<std::pair<double, double>> schedule;

  double at(double t) const;
};

void validate_compute_budget(const ComputeBudgetTrace& budget);

double wrap_angle_deg(double deg);  // into (-180, 180]

}  // namespace pcs
