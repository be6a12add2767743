#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace hcmrisk::survival {

class SurvivalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Subject {
  double time = 0.0;  // years, > 0
  bool event = false;
  int group = 0;
};

struct KmStep {
  double time;
  double survival;
  std::size_t at_risk;
  std::size_t events;
  std::size_t censored;
};

// First step is (0, 1, n, 0, 0); then one step per distinct time. At a time
// with both events and censorings, events are counted first and censored
// subjects are still in the risk set.
struct KmCurve {
  std::vector<KmStep> steps;
  double survival_at(double t) const;
};

KmCurve kaplan_meier(std::span<const Subject> subjects);

struct LogRankResult {
  double chi2 = 0.0;
  double p_value = 1.0;
  double observed1 = 0.0;
  double expected1 = 0.0;
  double variance = 0.0;
  bool degenerate = false;  // zero variance or an empty group
};

LogRankResult log_rank(std::span<const Subject> group0, std::span<const Subject> group1);

// Convenience: split by Subject::group.
LogRankResult log_rank(std::span<const Subject> subjects);

// group = 1 iff probability >= threshold.
std::vector<int> stratify_by_prediction(std::span<const double> probabilities, double threshold);

}  // namespace hcmrisk::survival
