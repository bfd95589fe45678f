#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "know3/kge.hpp"

namespace know3 {

// theta_t = theta0 * (c / (1 + e^(1 - theta0)))^t
struct ThresholdSchedule {
  double theta0 = 1.0;
  double c = 128.0;
  int max_turns = 2;

  double growth_ratio() const;
  // Throws ConfigError on theta0 <= 0, max_turns < 0, or a growth ratio that
  // is not finite and positive.
  void validate() const;
};

// Throws std::invalid_argument for t < 0.
double threshold_at(const ThresholdSchedule& sched, int t);

enum class StopReason {
  below_threshold,    // stop: evidence present and s_t < theta_t
  max_turns,          // stop: t reached the turn limit
  no_evidence_policy, // continue: nothing verifiable to judge
  above_threshold,    // continue: s_t >= theta_t
};

std::string_view to_string(StopReason r);
std::optional<StopReason> parse_stop_reason(std::string_view s);

struct StopDecision {
  bool stop = false;
  StopReason reason = StopReason::max_turns;
  double s_t = 0.0;
  double theta_t = 0.0;
};

// Answers without verifiable triples never pass the threshold test; they stop
// only at the turn limit. Throws std::invalid_argument if t > max_turns.
StopDecision decide(const ThresholdSchedule& sched, int t, const Reliability& reliability);

// Per-(QA model, dataset) theta0 defaults. Lookup is case-insensitive and
// ignores '-', '_', '.' and spaces, so "GLM4-9b" matches "glm4_9b".
std::optional<double> default_theta0(std::string_view qa_model, std::string_view dataset);

}  // namespace know3
