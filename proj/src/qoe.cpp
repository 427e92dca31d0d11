#include "pcs/qoe.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "json.hpp"
#include "pcs/errors.hpp"

namespace pcs {

namespace {

constexpr std::array<QoeWeights, 3> kBuiltinTable = {{
    {1.0, 0.11, 0.61, 12.58, -0.13, 12.58},
    {2.0, 0.05, 0.12, 12.68, -0.01, 12.68},
    {3.0, 0.04, 0.10, 13.29, -0.05, 13.29},
}};

}  // namespace

double quality_score(const ChunkOutcome& outcome, const QoeWeights& w) {
  return w.alpha * outcome.fov_psnr_sum_db + w.beta * outcome.level;
}

double qoe_score(const ChunkOutcome& outcome, const QoeWeights& w) {
  return quality_score(outcome, w) - w.gamma * outcome.rebuffer_s -
         w.delta * outcome.level_change - w.epsilon * outcome.decode_penalty_s;
}

double decode_penalty(double decode_s, double chunk_duration_s) {
  return std::max(0.0, decode_s - chunk_duration_s);
}

std::span<const QoeWeights> builtin_qoe_table() {
  return {kBuiltinTable.data(), kBuiltinTable.size()};
}

QoeWeights weights_for_distance(double distance_m) {
  return weights_for_distance(distance_m, builtin_qoe_table());
}

QoeWeights weights_for_distance(double distance_m,
                                std::span<const QoeWeights> table) {
  if (table.empty()) throw ConfigError("qoe weight table is empty");
  if (!(distance_m > 0.0))
    throw ValidationError("viewing distance must be positive, got " +
                          std::to_string(distance_m));
  const QoeWeights* best = &table[0];
  double best_gap = std::abs(distance_m - table[0].distance_m);
  for (const auto& row : table.subspan(1)) {
    double gap = std::abs(distance_m - row.distance_m);
    // Strict less keeps the earlier (smaller-distance) row on a tie.
    if (gap < best_gap) {
      best = &row;
      best_gap = gap;
    }
  }
  return *best;
}

std::vector<QoeWeights> parse_qoe_weights(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("qoe weights: ") + e.what());
  }
  if (!doc.is_array())
    throw ParseError("qoe weights: expected a JSON array of rows");
  if (doc.empty())
    throw ValidationError("qoe weights: table must hold at least one row");
  std::vector<QoeWeights> table;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& row = doc[i];
    QoeWeights w;
    try {
      w.distance_m = row.at("distance_m").get<double>();
      w.alpha = row.at("alpha").get<double>();
      w.beta = row.at("beta").get<double>();
      w.gamma = row.at("gamma").get<double>();
      w.delta = row.at("delta").get<double>();
      w.epsilon = row.at("epsilon").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("qoe weights row " + std::to_string(i) + ": " +
                       e.what());
    }
    if (!(w.distance_m > 0.0))
      throw ValidationError("qoe weights row " + std::to_string(i) +
                            ": distance_m must be positive");
    table.push_back(w);
  }
  std::sort(table.begin(), table.end(),
            [](const QoeWeights& a, const QoeWeights& b) {
              return a.distance_m < b.distance_m;
            });
  for (std::size_t i = 1; i < table.size(); ++i)
    if (table[i].distance_m == table[i - 1].distance_m)
      throw ValidationError("qoe weights: duplicate distance " +
                            std::to_string(table[i].distance_m));
  return table;
}

std::string serialize_qoe_weights(std::span<const QoeWeights> table) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& w : table) {
    nlohmann::ordered_json row;
    row["distance_m"] = w.distance_m;
    row["alpha"] = w.alpha;
    row["beta"] = w.beta;
    row["gamma"] = w.gamma;
    row["delta"] = w.delta;
    row["epsilon"] = w.epsilon;
    doc.push_back(std::move(row));
  }
  return doc.dump(2) + "\n";
}

}  // namespace pcs
