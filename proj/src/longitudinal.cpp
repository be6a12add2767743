#include "hcmrisk/longitudinal.hpp"

#include <algorithm>
#include <cmath>

namespace hcmrisk::longitudinal {

double RiskTrajectory::abs_slope() const {
  if (!slope) throw LongitudinalError("trajectory of " + patient_id + " has no slope");
  return std::abs(*slope);
}

RiskTrajectory trajectory(const ExamPredictor& predict,
                          std::span<const cohort::PatientExam* const> exams) {
  if (exams.empty()) throw LongitudinalError("trajectory needs at least one exam");
  std::vector<const cohort::PatientExam*> sorted(exams.begin(), exams.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto* a, const auto* b) { return a->exam_date < b->exam_date; });

  RiskTrajectory tr;
  tr.patient_id = sorted.front()->patient_id;
  tr.n_exams = sorted.size();
  const auto origin = sorted.front()->exam_date;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    double s = 0.0;
    while (j < sorted.size() && sorted[j]->exam_date == sorted[i]->exam_date) {
      if (sorted[j]->patient_id != tr.patient_id)
        throw LongitudinalError("trajectory mixes patients " + tr.patient_id + " and " +
                                sorted[j]->patient_id);
      s += predict(*sorted[j]);
      ++j;
    }
    tr.points.push_back({cohort::years_between(origin, sorted[i]->exam_date),
                         s / static_cast<double>(j - i)});
    i = j;
  }
  if (tr.points.size() >= 2) tr.slope = ols_slope(tr.points);
  return tr;
}

double ols_slope(std::span<const TrajectoryPoint> points) {
  if (points.size() < 2) throw LongitudinalError("slope needs at least two points");
  double tm = 0.0, pm = 0.0;
  for (const auto& q : points) {
    tm += q.t;
    pm += q.p;
  }
  tm /= static_cast<double>(points.size());
  pm /= static_cast<double>(points.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& q : points) {
    sxy += (q.t - tm) * (q.p - pm);
    sxx += (q.t - tm) * (q.t - tm);
  }
  if (!(sxx > 0.0)) throw LongitudinalError("slope needs at least two distinct times");
  return sxy / sxx;
}

namespace {

GroupSlopes describe(std::vector<double>& slopes, std::vector<double>& abs_slopes) {
  // Sorted so the summary does not depend on patient order.
  std::sort(slopes.begin(), slopes.end());
  std::sort(abs_slopes.begin(), abs_slopes.end());
  GroupSlopes g;
  g.n = slopes.size();
  g.mean_slope = metrics::mean(slopes);
  g.std_slope = metrics::population_std(slopes);
  g.mean_abs_slope = metrics::mean(abs_slopes);
  g.std_abs_slope = metrics::population_std(abs_slopes);
  return g;
}

}  // namespace

SlopeSummary slope_summary(std::span<const RiskTrajectory> trajectories,
                           const std::map<std::string, int>& labels) {
  std::vector<double> s1, s0, a1, a0;
  SlopeSummary out;
  for (const auto& tr : trajectories) {
    const auto it = labels.find(tr.patient_id);
    if (!tr.slope || it == labels.end()) {
      ++out.excluded;
      continue;
    }
    auto& s = it->second == 1 ? s1 : s0;
    auto& a = it->second == 1 ? a1 : a0;
    s.push_back(*tr.slope);
    a.push_back(std::abs(*tr.slope));
  }
  if (s1.size() < 2 || s0.size() < 2)
    throw LongitudinalError("slope summary needs at least two patients with slopes per group (event " +
                            std::to_string(s1.size()) + ", event-free " + std::to_string(s0.size()) + ")");
  out.event = describe(s1, a1);
  out.event_free = describe(s0, a0);
  out.slope_test = metrics::welch_t(s1, s0);
  out.abs_slope_test = metrics::welch_t(a1, a0);
  const auto rising = std::count_if(s1.begin(), s1.end(), [](double v) { return v > 0.0; });
  out.event_fraction_rising = static_cast<double>(rising) / static_cast<double>(s1.size());
  return out;
}

}  // namespace hcmrisk::longitudinal
