#pragma once

#include <span>
#include <string>
#include <vector>

namespace pcs {

// Per-viewing-distance QoE weights. alpha scales the in-view PSNR sum, beta
// the quality level, gamma the rebuffer penalty, delta the level-change term
// and epsilon the decode-overrun penalty. delta is negative in the built-in
// table; the score applies it literally (a level change then *raises* QoE),
// matching the model this mirrors.
struct QoeWeights {
  double distance_m = 1.0;
  double alpha = 0.11;
  double beta = 0.61;
  double gamma = 12.58;
  double delta = -0.13;
  double epsilon = 12.58;
};

// What one delivered chunk looked like by the time it played out.
struct ChunkOutcome {
  double fov_psnr_sum_db = 0.0;   // sum of tile PSNRs inside the viewport
  double level = 1.0;             // quality level of the chosen variant
  double rebuffer_s = 0.0;        // stall attributable to this chunk
  double level_change = 0.0;      // |index distance| in the action space
  double decode_penalty_s = 0.0;  // decode overrun beyond one chunk duration
  double viewer_distance_m = 1.0;
};

// alpha * fov_psnr_sum + beta * level (the positive terms only).
double quality_score(const ChunkOutcome& outcome, const QoeWeights& w);

// quality_score minus gamma*rebuffer, delta*level_change, epsilon*decode
// penalty. Affine in every outcome field.
double qoe_score(const ChunkOutcome& outcome, const QoeWeights& w);

// max(0, decode_s - chunk_duration_s).
double decode_penalty(double decode_s, double chunk_duration_s);

// Built-in weights measured at 1 m / 2 m / 3 m viewing distance.
std::span<const QoeWeights> builtin_qoe_table();

// Nearest table row by |distance - row.distance|; ties go to the smaller
// distance. distance_m must be positive. The table must be non-empty and is
// expected sorted by distance (the built-in one is).
QoeWeights weights_for_distance(double distance_m);
QoeWeights weights_for_distance(double distance_m,
                                std::span<const QoeWeights> table);

// JSON array of rows: [{"distance_m":1.0,"alpha":...,"beta":...,"gamma":...,
// "delta":...,"epsilon":...}, ...]. Rows are sorted by distance on load.
std::vector<QoeWeights> parse_qoe_weights(const std::string& json_text);
std::string serialize_qoe_weights(std::span<const QoeWeights> table);

}  // namespace pcs
