#include <cmath>

#include "doctest.h"
#include "pcs/errors.hpp"
#include "pcs/qoe.hpp"
#include "pcs/rng.hpp"

using namespace pcs;

namespace {

ChunkOutcome make_outcome(double psnr, double level, double rebuffer,
                          double dl, double decode, double dist = 1.0) {
  ChunkOutcome o;
  o.fov_psnr_sum_db = psnr;
  o.level = level;
  o.rebuffer_s = rebuffer;
  o.level_change = dl;
  o.decode_penalty_s = decode;
  o.viewer_distance_m = dist;
  return o;
}

}  // namespace

TEST_SUITE("qoe") {

TEST_CASE("quality score evaluates the weighted sum") {
  const QoeWeights w = weights_for_distance(1.0);
  CHECK(quality_score(make_outcome(40.0, 5.0, 0, 0, 0), w) ==
        doctest::Approx(7.45).epsilon(1e-12));
  CHECK(quality_score(make_outcome(0.0, 0.0, 0, 0, 0), w) == 0.0);

  QoeWeights doubled = w;
  doubled.alpha *= 2.0;
  const double base = quality_score(make_outcome(40.0, 0.0, 0, 0, 0), w);
  CHECK(quality_score(make_outcome(40.0, 0.0, 0, 0, 0), doubled) == 2.0 * base);
}

TEST_CASE("qoe score subtracts the penalty terms with literal signs") {
  const QoeWeights w1 = weights_for_distance(1.0);
  CHECK(qoe_score(make_outcome(40, 5, 0, 0, 0), w1) ==
        doctest::Approx(7.45).epsilon(1e-12));
  CHECK(qoe_score(make_outcome(40, 5, 0.5, 0, 0), w1) ==
        doctest::Approx(1.16).epsilon(1e-12));
  CHECK(qoe_score(make_outcome(0, 0, 0, 0, 0), w1) == 0.0);

  // Negative delta in the built-in table means a level change adds score.
  const double still = qoe_score(make_outcome(40, 5, 0, 0, 0), w1);
  const double moved = qoe_score(make_outcome(40, 5, 0, 2, 0), w1);
  CHECK(moved - still == doctest::Approx(0.26).epsilon(1e-12));
}

TEST_CASE("2 m row hand value") {
  const QoeWeights w2 = weights_for_distance(2.0);
  CHECK(w2.alpha == 0.05);
  CHECK(w2.beta == 0.12);
  // 0.05*100 + 0.12*3 - 12.68*0.25 + 0.01*2 - 12.68*0.1
  CHECK(qoe_score(make_outcome(100, 3, 0.25, 2, 0.1, 2.0), w2) ==
        doctest::Approx(0.942).epsilon(1e-12));
}

TEST_CASE("decode penalty clamps at zero") {
  CHECK(decode_penalty(0.5, 0.33) == doctest::Approx(0.17).epsilon(1e-12));
  CHECK(decode_penalty(0.2, 0.33) == 0.0);
  CHECK(decode_penalty(0.0, 0.33) == 0.0);
}

TEST_CASE("distance rows: nearest, ties toward the smaller") {
  const QoeWeights r1 = weights_for_distance(1.0);
  CHECK(r1.alpha == 0.11);
  CHECK(r1.beta == 0.61);
  CHECK(r1.gamma == 12.58);
  CHECK(r1.delta == -0.13);
  CHECK(r1.epsilon == 12.58);

  const QoeWeights r3 = weights_for_distance(2.9);
  CHECK(r3.alpha == 0.04);
  CHECK(r3.beta == 0.10);
  CHECK(r3.gamma == 13.29);
  CHECK(r3.delta == -0.05);
  CHECK(r3.epsilon == 13.29);

  CHECK(weights_for_distance(1.5).distance_m == 1.0);  // tie rule
  CHECK(weights_for_distance(2.5).distance_m == 2.0);
  CHECK(weights_for_distance(0.1).distance_m == 1.0);
  CHECK(weights_for_distance(50.0).distance_m == 3.0);
  CHECK_THROWS_AS(weights_for_distance(0.0), ValidationError);
  CHECK_THROWS_AS(weights_for_distance(-1.0), ValidationError);
}

TEST_CASE("piecewise-constant row selection within each cell") {
  Rng rng(123);
  for (int i = 0; i < 200; ++i) {
    const double d = rng.uniform(0.01, 1.49);
    CHECK(weights_for_distance(d).distance_m == 1.0);
  }
  for (int i = 0; i < 200; ++i) {
    const double d = rng.uniform(1.51, 2.49);
    CHECK(weights_for_distance(d).distance_m == 2.0);
  }
  for (int i = 0; i < 200; ++i) {
    const double d = rng.uniform(2.51, 9.0);
    CHECK(weights_for_distance(d).distance_m == 3.0);
  }
}

TEST_CASE("score is affine in every outcome field") {
  Rng rng(99);
  for (int i = 0; i < 500; ++i) {
    QoeWeights w;
    w.distance_m = rng.uniform(0.5, 3.5);
    w.alpha = rng.uniform(-2, 2);
    w.beta = rng.uniform(-2, 2);
    w.gamma = rng.uniform(-20, 20);
    w.delta = rng.uniform(-1, 1);
    w.epsilon = rng.uniform(-20, 20);
    ChunkOutcome o = make_outcome(rng.uniform(0, 300), rng.uniform(0, 5),
                                  rng.uniform(0, 3), rng.uniform(0, 9),
                                  rng.uniform(0, 1));
    const double base = qoe_score(o, w);
    const double x = rng.uniform(0.0, 4.0);

    ChunkOutcome o2 = o;
    o2.rebuffer_s += x;
    CHECK(qoe_score(o2, w) == doctest::Approx(base - w.gamma * x).epsilon(1e-12));

    o2 = o;
    o2.level_change += x;
    CHECK(qoe_score(o2, w) == doctest::Approx(base - w.delta * x).epsilon(1e-12));

    o2 = o;
    o2.decode_penalty_s += x;
    CHECK(qoe_score(o2, w) ==
          doctest::Approx(base - w.epsilon * x).epsilon(1e-12));

    o2 = o;
    o2.fov_psnr_sum_db += x;
    CHECK(qoe_score(o2, w) == doctest::Approx(base + w.alpha * x).epsilon(1e-12));

    o2 = o;
    o2.level += x;
    CHECK(qoe_score(o2, w) == doctest::Approx(base + w.beta * x).epsilon(1e-12));
    CHECK(std::isfinite(base));
  }
}

TEST_CASE("weight table serialization round-trips and validates") {
  const auto table = builtin_qoe_table();
  REQUIRE(table.size() == 3);
  const std::string text = serialize_qoe_weights(table);
  const auto back = parse_qoe_weights(text);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].distance_m == table[i].distance_m);
    CHECK(back[i].alpha == table[i].alpha);
    CHECK(back[i].beta == table[i].beta);
    CHECK(back[i].gamma == table[i].gamma);
    CHECK(back[i].delta == table[i].delta);
    CHECK(back[i].epsilon == table[i].epsilon);
  }
  CHECK(serialize_qoe_weights(back) == text);

  // Rows arrive sorted by distance even if the document is shuffled.
  const auto shuffled = parse_qoe_weights(
      R"([{"distance_m":3.0,"alpha":1,"beta":1,"gamma":1,"delta":1,"epsilon":1},
          {"distance_m":1.0,"alpha":2,"beta":2,"gamma":2,"delta":2,"epsilon":2}])");
  REQUIRE(shuffled.size() == 2);
  CHECK(shuffled[0].distance_m == 1.0);

  CHECK_THROWS_AS(parse_qoe_weights("[]"), ValidationError);
  CHECK_THROWS_AS(parse_qoe_weights("not json"), ParseError);
  CHECK_THROWS_AS(parse_qoe_weights(
                      R"([{"distance_m":1.0,"alpha":1,"beta":1,"gamma":1,"delta":1,"epsilon":1},
                          {"distance_m":1.0,"alpha":2,"beta":2,"gamma":2,"delta":2,"epsilon":2}])"),
                  ValidationError);
}

}  // TEST_SUITE
