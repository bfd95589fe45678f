#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "know3/controller.hpp"
#include "know3/errors.hpp"

using namespace know3;

namespace {

Reliability evidence(double s, size_t verified, size_t unverifiable = 0) {
  Reliability r;
  r.score = s;
  r.verified = verified;
  r.unverifiable = unverifiable;
  return r;
}

}  // namespace

TEST_CASE("threshold_at") {
  ThresholdSchedule sched{10.0, 128.0, 2};
  CHECK(threshold_at(sched, 0) == 10.0);
  // Reference values evaluated independently in double precision.
  CHECK(threshold_at(sched, 1) == doctest::Approx(1279.8420549427376).epsilon(1e-14));
  CHECK(threshold_at({0.1, 128.0, 2}, 1) == doctest::Approx(3.6998463663999495).epsilon(1e-14));
  CHECK(threshold_at({0.37, 128.0, 2}, 0) == 0.37);
  CHECK_THROWS_AS(threshold_at(sched, -1), std::invalid_argument);
}

TEST_CASE("threshold_at grows strictly when the ratio exceeds one") {
  for (double theta0 : {10.0, 1.0, 13.0, 2.0, 0.2, 0.1, 0.02, 0.01}) {
    ThresholdSchedule sched{theta0, 128.0, 4};
    REQUIRE(sched.growth_ratio() > 1.0);
    for (int t = 0; t < 6; ++t) CHECK(threshold_at(sched, t + 1) > threshold_at(sched, t));
  }
}

TEST_CASE("schedule validation") {
  auto make = [](double theta0, double c, int max_turns) {
    return ThresholdSchedule{theta0, c, max_turns};
  };
  CHECK_NOTHROW(make(0.01, 128, 0).validate());
  CHECK_THROWS_AS(make(0.0, 128, 2).validate(), ConfigError);
  CHECK_THROWS_AS(make(-1.0, 128, 2).validate(), ConfigError);
  CHECK_THROWS_AS(make(1.0, 128, -1).validate(), ConfigError);
  CHECK_THROWS_AS(make(1.0, -5, 2).validate(), ConfigError);
  CHECK_THROWS_AS(make(1.0, INFINITY, 2).validate(), ConfigError);
}

TEST_CASE("decide") {
  // Fix theta_t = 10 at t = 0.
  ThresholdSchedule sched{10.0, 128.0, 2};

  auto below = decide(sched, 0, evidence(0.5, 2));
  CHECK(below.stop);
  CHECK(below.reason == StopReason::below_threshold);
  CHECK(below.theta_t == 10.0);

  auto at_limit = decide(sched, 2, evidence(99.0 * threshold_at(sched, 2), 3));
  CHECK(at_limit.stop);
  CHECK(at_limit.reason == StopReason::max_turns);

  auto no_evidence = decide(sched, 0, evidence(0.0, 0, 3));
  CHECK_FALSE(no_evidence.stop);
  CHECK(no_evidence.reason == StopReason::no_evidence_policy);

  auto above = decide(sched, 1, evidence(5000.0, 1));
  CHECK_FALSE(above.stop);
  CHECK(above.reason == StopReason::above_threshold);

  CHECK_THROWS_AS(decide(sched, 3, evidence(0, 0)), std::invalid_argument);
}

TEST_CASE("decide agrees with an enumeration of every branch") {
  // Oracle table over (has evidence, below threshold, at limit).
  for (int max_turns : {0, 1, 2, 3}) {
    ThresholdSchedule sched{2.0, 128.0, max_turns};
    for (int t = 0; t <= max_turns; ++t) {
      const double theta = threshold_at(sched, t);
      for (size_t verified : {0u, 1u, 4u}) {
        for (size_t unverifiable : {0u, 2u}) {
          for (double s : {0.0, theta * 0.5, theta, theta * 2.0}) {
            auto d = decide(sched, t, evidence(s, verified, unverifiable));
            const bool has = verified > 0;
            const bool below = has && s < theta;
            const bool limit = t == max_turns;
            CHECK(d.stop == (below || limit));
            if (below) {
              CHECK(d.reason == StopReason::below_threshold);
            } else if (limit) {
              CHECK(d.reason == StopReason::max_turns);
            } else {
              CHECK(d.reason == (has ? StopReason::above_threshold
                                     : StopReason::no_evidence_policy));
            }
          }
        }
      }
    }
  }
}

TEST_CASE("decide is monotone in s_t") {
  ThresholdSchedule sched{1.0, 128.0, 2};
  for (int t = 0; t <= 2; ++t) {
    bool was_stopped = false;
    // Walk s_t downward; once stopped, stays stopped.
    for (double s = 1e6; s >= 0.0; s = s > 1e-3 ? s / 3.0 : -1.0) {
      bool stop = decide(sched, t, evidence(s, 2)).stop;
      if (was_stopped) CHECK(stop);
      was_stopped = stop;
    }
  }
}

TEST_CASE("default theta0 table") {
  CHECK(default_theta0("GLM4-9b", "HotpotQA") == 10.0);
  CHECK(default_theta0("glm4_9b", "popqa") == 0.1);
  CHECK(default_theta0("Qwen2.5-32b", "2WikiMultiHopQA") == 0.2);
  CHECK(default_theta0("GPT4o-mini", "PopQA") == 0.01);
  CHECK(default_theta0("gpt-4o-mini", "2wiki") == 2.0);
  CHECK_FALSE(default_theta0("llama3-8b", "hotpotqa"));
  CHECK_FALSE(default_theta0("glm4-9b", "nq"));
}

TEST_CASE("stop reasons round trip through strings") {
  for (auto r : {StopReason::below_threshold, StopReason::max_turns,
                 StopReason::no_evidence_policy, StopReason::above_threshold}) {
    CHECK(parse_stop_reason(to_string(r)) == r);
  }
  CHECK_FALSE(parse_stop_reason("bogus"));
}
