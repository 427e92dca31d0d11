#include "pcs/traces.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pcs/errors.hpp"
#include "pcs/rng.hpp"

namespace pcs {

namespace {

constexpr double kBytesPerMbpsSecond = 1e6 / 8.0;
// Floor applied to a zero-rate tail so downloads terminate; ~1 bit/s.
constexpr double kTailRateFloorMbps = 1e-6;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double_strict(const std::string& field, const std::string& origin,
                           std::size_t line) {
  try {
    std::size_t used = 0;
    double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ParseError(origin + ":" + std::to_string(line) +
                     ": bad numeric field '" + field + "'");
  }
}

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

// Time to pull `bytes` from a linear rate ramp r0 -> r1 (Mbps) lasting `dt`
// seconds, or a negative value if the segment holds fewer bytes than that.
double solve_segment(double r0, double r1, double dt, double bytes) {
  double b0 = r0 * kBytesPerMbpsSecond;
  double slope = (r1 - r0) / dt * kBytesPerMbpsSecond;  // bytes/s^2
  double capacity = (b0 + 0.5 * slope * dt) * dt;
  if (capacity < bytes) return -1.0;
  if (std::abs(slope) < 1e-12) {
    if (b0 <= 0.0) return -1.0;
    return bytes / b0;
  }
  // 0.5*slope*t^2 + b0*t - bytes = 0, smallest non-negative root.
  double disc = b0 * b0 + 2.0 * slope * bytes;
  if (disc < 0.0) return -1.0;
  double sq = std::sqrt(disc);
  double t = (slope > 0.0) ? (sq - b0) / slope : (bytes * 2.0) / (b0 + sq);
  if (t < 0.0 || t > dt) return -1.0;
  return t;
}

}  // namespace

double wrap_angle_deg(double deg) {
  double w = std::remainder(deg, 360.0);
  // remainder can yield either seam endpoint; canonicalize to (-180, 180].
  if (w <= -180.0) w = 180.0;
  return w;
}

double BandwidthTrace::span_s() const {
  if (samples.empty()) return 0.0;
  return samples.back().ts_s - samples.front().ts_s;
}

double BandwidthTrace::value_at(double t) const {
  if (samples.empty()) throw ValidationError("bandwidth trace is empty");
  if (t <= samples.front().ts_s) return samples.front().mbps;
  if (t >= samples.back().ts_s) return samples.back().mbps;
  auto it = std::upper_bound(
      samples.begin(), samples.end(), t,
      [](double v, const BwSample& s) { return v < s.ts_s; });
  const BwSample& hi = *it;
  const BwSample& lo = *(it - 1);
  double f = (t - lo.ts_s) / (hi.ts_s - lo.ts_s);
  return lo.mbps + f * (hi.mbps - lo.mbps);
}

double BandwidthTrace::bytes_over(double t0, double t1) const {
  if (t1 < t0) throw ValidationError("bytes_over: reversed interval");
  // Trapezoid over the piecewise-linear rate; integrate segment by segment.
  double total = 0.0;
  double cur = t0;
  while (cur < t1) {
    auto it = std::upper_bound(
        samples.begin(), samples.end(), cur,
        [](double v, const BwSample& s) { return v < s.ts_s; });
    double seg_end = (it == samples.end()) ? t1 : std::min(t1, it->ts_s);
    double r0 = value_at(cur);
    double r1 = value_at(seg_end);
    total += 0.5 * (r0 + r1) * (seg_end - cur) * kBytesPerMbpsSecond;
    cur = seg_end;
  }
  return total;
}

double BandwidthTrace::time_to_download(double start_s, double bytes) const {
  if (samples.empty()) throw ValidationError("bandwidth trace is empty");
  if (bytes <= 0.0) return 0.0;
  double remaining = bytes;
  double cur = start_s;
  double elapsed = 0.0;
  while (true) {
    auto it = std::upper_bound(
        samples.begin(), samples.end(), cur,
        [](double v, const BwSample& s) { return v < s.ts_s; });
    if (it == samples.end()) {
      // Constant tail beyond the last sample.
      double rate = std::max(samples.back().mbps, kTailRateFloorMbps);
      return elapsed + remaining / (rate * kBytesPerMbpsSecond);
    }
    double seg_end = it->ts_s;
    double r0 = value_at(cur);
    double r1 = it->mbps;
    double dt = seg_end - cur;
    if (dt > 0.0) {
      double t = solve_segment(r0, r1, dt, remaining);
      if (t >= 0.0) return elapsed + t;
      remaining -= 0.5 * (r0 + r1) * dt * kBytesPerMbpsSecond;
      elapsed += dt;
    }
    cur = seg_end;
  }
}

BandwidthTrace parse_bandwidth_csv(const std::string& text,
                                   const std::string& origin) {
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  BandwidthTrace trace;
  bool saw_header = false;
  while (std::getline(ss, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    if (!saw_header) {
      if (line != "ts_s,mbps")
        throw ParseError(origin + ":" + std::to_string(line_no) +
                         ": expected header 'ts_s,mbps', got '" + line + "'");
      saw_header = true;
      continue;
    }
    auto fields = split_csv_row(line);
    if (fields.size() != 2)
      throw ParseError(origin + ":" + std::to_string(line_no) +
                       ": expected 2 fields, got " +
                       std::to_string(fields.size()));
    BwSample s;
    s.ts_s = parse_double_strict(fields[0], origin, line_no);
    s.mbps = parse_double_strict(fields[1], origin, line_no);
    if (s.mbps < 0.0)
      throw ValidationError(origin + ":" + std::to_string(line_no) +
                            ": negative throughput");
    if (!trace.samples.empty() && s.ts_s <= trace.samples.back().ts_s)
      throw ValidationError(origin + ":" + std::to_string(line_no) +
                            ": timestamps must be strictly increasing");
    trace.samples.push_back(s);
  }
  if (!saw_header) throw ParseError(origin + ": missing header row");
  if (trace.samples.empty())
    throw ValidationError(origin + ": no samples");
  return trace;
}

BandwidthTrace load_bandwidth_trace(const std::filesystem::path& csv_path) {
  return parse_bandwidth_csv(read_file(csv_path), csv_path.string());
}

std::string format_bandwidth_csv(const BandwidthTrace& trace) {
  std::string out = "ts_s,mbps\n";
  for (const auto& s : trace.samples)
    out += fmt_double(s.ts_s) + "," + fmt_double(s.mbps) + "\n";
  return out;
}

void write_bandwidth_trace(const BandwidthTrace& trace,
                           const std::filesystem::path& csv_path) {
  write_file(csv_path, format_bandwidth_csv(trace));
}

BandwidthTrace generate_synthetic_bandwidth(std::uint64_t seed,
                                            const BwSynthModel& model,
                                            double duration_s) {
  if (!(model.mean_mbps > 0.0) || model.volatility < 0.0 ||
      model.regime_switch_prob < 0.0 || model.regime_switch_prob > 1.0 ||
      !(model.low_regime_factor > 0.0) || !(model.sample_interval_s > 0.0) ||
      !(duration_s >= 0.0))
    throw ConfigError("degenerate synthetic bandwidth model");
  Rng rng(seed);
  BandwidthTrace trace;
  trace.mobility_tag = "synthetic";
  int n = static_cast<int>(std::floor(duration_s / model.sample_interval_s));
  bool low_regime = false;
  for (int k = 0; k <= n; ++k) {
    if (k > 0 && rng.uniform01() < model.regime_switch_prob)
      low_regime = !low_regime;
    double mean =
        model.mean_mbps * (low_regime ? model.low_regime_factor : 1.0);
    double v = mean * (1.0 + model.volatility * rng.gaussian());
    trace.samples.push_back(
        {k * model.sample_interval_s, std::max(0.0, v)});
  }
  return trace;
}

double FovTrace::span_s() const {
  if (samples.empty()) return 0.0;
  return samples.back().ts_s - samples.front().ts_s;
}

FovSample FovTrace::sample_at(double t) const {
  if (samples.empty()) throw ValidationError("fov trace is empty");
  if (t <= samples.front().ts_s) return samples.front();
  if (t >= samples.back().ts_s) return samples.back();
  auto it = std::upper_bound(
      samples.begin(), samples.end(), t,
      [](double v, const FovSample& s) { return v < s.ts_s; });
  const FovSample& hi = *it;
  const FovSample& lo = *(it - 1);
  double f = (t - lo.ts_s) / (hi.ts_s - lo.ts_s);
  FovSample out;
  out.ts_s = t;
  for (int k = 0; k < 3; ++k) {
    out.pos[k] = lo.pos[k] + f * (hi.pos[k] - lo.pos[k]);
    double diff = wrap_angle_deg(hi.ypr[k] - lo.ypr[k]);
    out.ypr[k] = wrap_angle_deg(lo.ypr[k] + f * diff);
  }
  return out;
}

FovTrace parse_fov_csv(const std::string& text, const std::string& origin) {
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  FovTrace trace;
  bool saw_header = false;
  while (std::getline(ss, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    if (!saw_header) {
      if (line != "ts_s,x,y,z,yaw,pitch,roll")
        throw ParseError(origin + ":" + std::to_string(line_no) +
                         ": expected header 'ts_s,x,y,z,yaw,pitch,roll'");
      saw_header = true;
      continue;
    }
    auto fields = split_csv_row(line);
    if (fields.size() != 7)
      throw ParseError(origin + ":" + std::to_string(line_no) +
                       ": expected 7 fields, got " +
                       std::to_string(fields.size()));
    FovSample s;
    s.ts_s = parse_double_strict(fields[0], origin, line_no);
    for (int k = 0; k < 3; ++k)
      s.pos[k] = parse_double_strict(fields[1 + k], origin, line_no);
    for (int k = 0; k < 3; ++k) {
      s.ypr[k] = parse_double_strict(fields[4 + k], origin, line_no);
      if (s.ypr[k] < -180.0 || s.ypr[k] > 180.0)
        throw ValidationError(origin + ":" + std::to_string(line_no) +
                              ": angle outside [-180, 180]");
    }
    if (!trace.samples.empty() && s.ts_s <= trace.samples.back().ts_s)
      throw ValidationError(origin + ":" + std::to_string(line_no) +
                            ": timestamps must be strictly increasing");
    trace.samples.push_back(s);
  }
  if (!saw_header) throw ParseError(origin + ": missing header row");
  if (trace.samples.empty()) throw ValidationError(origin + ": no samples");
  return trace;
}

FovTrace load_fov_trace(const std::filesystem::path& csv_path) {
  return parse_fov_csv(read_file(csv_path), csv_path.string());
}

std::string format_fov_csv(const FovTrace& trace) {
  std::string out = "ts_s,x,y,z,yaw,pitch,roll\n";
  for (const auto& s : trace.samples) {
    out += fmt_double(s.ts_s);
    for (int k = 0; k < 3; ++k) out += "," + fmt_double(s.pos[k]);
    for (int k = 0; k < 3; ++k) out += "," + fmt_double(s.ypr[k]);
    out += "\n";
  }
  return out;
}

void write_fov_trace(const FovTrace& trace,
                     const std::filesystem::path& csv_path) {
  write_file(csv_path, format_fov_csv(trace));
}

FovTrace generate_synthetic_fov(std::uint64_t seed, const FovSynthModel& model,
                                double duration_s) {
  if (model.pos_step_m < 0.0 || model.ang_step_deg < 0.0 ||
      !(model.sample_interval_s > 0.0) || model.pull < 0.0 ||
      model.pull > 1.0 || !(duration_s >= 0.0))
    throw ConfigError("degenerate synthetic fov model");
  Rng rng(seed);
  FovTrace trace;
  FovSample s;
  s.ts_s = 0.0;
  s.pos = model.center;
  for (int k = 0; k < 3; ++k) s.ypr[k] = wrap_angle_deg(model.start_ypr[k]);
  trace.samples.push_back(s);
  int n = static_cast<int>(std::floor(duration_s / model.sample_interval_s));
  for (int k = 1; k <= n; ++k) {
    for (int d = 0; d < 3; ++d) {
      s.pos[d] += model.pull * (model.center[d] - s.pos[d]) +
                  model.pos_step_m * rng.gaussian();
      s.ypr[d] = wrap_angle_deg(s.ypr[d] + model.ang_step_deg * rng.gaussian());
    }
    s.ts_s = k * model.sample_interval_s;
    trace.samples.push_back(s);
  }
  return trace;
}

double ComputeBudgetTrace::at(double t) const {
  double cap = capacity;
  for (const auto& [from_ts, value] : schedule) {
    if (t >= from_ts) cap = value;
    else break;
  }
  return cap;
}

void validate_compute_budget(const ComputeBudgetTrace& budget) {
  if (budget.capacity < 0.0)
    throw ValidationError("compute capacity must be non-negative");
  for (std::size_t i = 0; i < budget.schedule.size(); ++i) {
    if (budget.schedule[i].second < 0.0)
      throw ValidationError("compute schedule entry " + std::to_string(i) +
                            ": capacity must be non-negative");
    if (i > 0 && budget.schedule[i].first <= budget.schedule[i - 1].first)
      throw ValidationError("compute schedule timestamps must increase");
  }
}

}  // namespace pcs
