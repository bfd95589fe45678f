#include "know3/controller.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "know3/errors.hpp"
#include "know3/text.hpp"

namespace know3 {

double ThresholdSchedule::growth_ratio() const {
  return c / (1.0 + std::exp(1.0 - theta0));
}

void ThresholdSchedule::validate() const {
  if (!(theta0 > 0.0) || !std::isfinite(theta0)) {
    throw ConfigError("controller.theta0 must be a positive number");
  }
  if (max_turns < 0) throw ConfigError("controller.max_turns must be >= 0");
  const double ratio = growth_ratio();
  if (!std::isfinite(ratio) || !(ratio > 0.0)) {
    throw ConfigError("controller.c gives a non-positive threshold growth ratio");
  }
}

double threshold_at(const ThresholdSchedule& sched, int t) {
  if (t < 0) throw std::invalid_argument("threshold_at: negative turn");
  return sched.theta0 * std::pow(sched.growth_ratio(), t);
}

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::below_threshold: return "below_threshold";
    case StopReason::max_turns: return "max_turns";
    case StopReason::no_evidence_policy: return "no_evidence_policy";
    case StopReason::above_threshold: return "above_threshold";
  }
  return "unknown";
}

std::optional<StopReason> parse_stop_reason(std::string_view s) {
  for (auto r : {StopReason::below_threshold, StopReason::max_turns,
                 StopReason::no_evidence_policy, StopReason::above_threshold}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

StopDecision decide(const ThresholdSchedule& sched, int t, const Reliability& reliability) {
  if (t < 0 || t > sched.max_turns) {
    throw std::invalid_argument("decide: turn " + std::to_string(t) + " outside [0, " +
                                std::to_string(sched.max_turns) + "]");
  }
  StopDecision d;
  d.s_t = reliability.score;
  d.theta_t = threshold_at(sched, t);
  if (reliability.has_evidence() && d.s_t < d.theta_t) {
    d.stop = true;
    d.reason = StopReason::below_threshold;
  } else if (t == sched.max_turns) {
    d.stop = true;
    d.reason = StopReason::max_turns;
  } else {
    d.stop = false;
    d.reason = reliability.has_evidence() ? StopReason::above_threshold
                                          : StopReason::no_evidence_policy;
  }
  return d;
}

namespace {

std::string canonical_key(std::string_view s) {
  std::string out;
  for (char c : fold_case(s)) {
    if (c != '-' && c != '_' && c != '.' && c != ' ') out.push_back(c);
  }
  return out;
}

struct ThetaRow {
  const char* dataset;
  double glm4_9b, qwen25_32b, gpt4o_mini;
};

constexpr std::array<ThetaRow, 3> kThetaTable = {{
    {"hotpotqa", 10, 1, 13},
    {"2wikimultihopqa", 2, 0.2, 2},
    {"popqa", 0.1, 0.02, 0.01},
}};

}  // namespace

std::optional<double> default_theta0(std::string_view qa_model, std::string_view dataset) {
  const std::string model = canonical_key(qa_model);
  std::string data = canonical_key(dataset);
  if (data == "2wiki") data = "2wikimultihopqa";
  for (const ThetaRow& row : kThetaTable) {
    if (data != row.dataset) continue;
    if (model == "glm49b") return row.glm4_9b;
    if (model == "qwen2532b") return row.qwen25_32b;
    if (model == "gpt4omini") return row.gpt4o_mini;
  }
  return std::nullopt;
}

}  // namespace know3
