#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcmrisk/cohort.hpp"
#include "hcmrisk/metrics.hpp"

namespace hcmrisk::longitudinal {

class LongitudinalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrajectoryPoint {
  double t;  // years since the first exam
  double p;
};

struct RiskTrajectory {
  std::string patient_id;
  std::vector<TrajectoryPoint> points;  // strictly increasing t
  std::optional<double> slope;          // probability per year; needs >= 2 points
  std::size_t n_exams = 0;

  bool has_slope() const { return slope.has_value(); }
  double abs_slope() const;
};

using ExamPredictor = std::function<double(const cohort::PatientExam&)>;

// Exams are sorted by date; same-day exams are averaged into one point.
RiskTrajectory trajectory(const ExamPredictor& predict,
                          std::span<const cohort::PatientExam* const> exams);

// Least-squares slope sum((t - t_mean)(p - p_mean)) / sum((t - t_mean)^2).
double ols_slope(std::span<const TrajectoryPoint> points);

struct GroupSlopes {
  std::size_t n = 0;
  double mean_slope = 0.0;
  double std_slope = 0.0;  // population
  double mean_abs_slope = 0.0;
  double std_abs_slope = 0.0;
};

struct SlopeSummary {
  GroupSlopes event;
  GroupSlopes event_free;
  metrics::WelchResult slope_test;
  metrics::WelchResult abs_slope_test;
  double event_fraction_rising = 0.0;  // event patients with slope > 0
  std::size_t excluded = 0;            // trajectories without a slope or label
};

// Uses trajectories with a slope and a label. Needs >= 2 per group.
SlopeSummary slope_summary(std::span<const RiskTrajectory> trajectories,
                           const std::map<std::string, int>& labels);

}  // namespace hcmrisk::longitudinal
