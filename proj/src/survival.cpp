#include "hcmrisk/survival.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hcmrisk/metrics.hpp"

namespace hcmrisk::survival {

namespace {

struct Tally {
  std::size_t events = 0;
  std::size_t censored = 0;
};

std::map<double, Tally> tally(std::span<const Subject> subjects) {
  std::map<double, Tally> by_time;
  for (const auto& s : subjects) {
    if (!(s.time > 0.0) || !std::isfinite(s.time))
      throw SurvivalError("survival times must be positive and finite");
    auto& t = by_time[s.time];
    (s.event ? t.events : t.censored) += 1;
  }
  return by_time;
}

}  // namespace

double KmCurve::survival_at(double t) const {
  double s = 1.0;
  for (const auto& step : steps) {
    if (step.time > t) break;
    s = step.survival;
  }
  return s;
}

KmCurve kaplan_meier(std::span<const Subject> subjects) {
  if (subjects.empty()) throw SurvivalError("Kaplan-Meier needs at least one subject");
  const auto by_time = tally(subjects);
  KmCurve curve;
  std::size_t at_risk = subjects.size();
  double s = 1.0;
  curve.steps.push_back({0.0, 1.0, at_risk, 0, 0});
  for (const auto& [time, t] : by_time) {
    if (t.events > 0) s *= 1.0 - static_cast<double>(t.events) / static_cast<double>(at_risk);
    curve.steps.push_back({time, s, at_risk, t.events, t.censored});
    at_risk -= t.events + t.censored;
  }
  return curve;
}

LogRankResult log_rank(std::span<const Subject> group0, std::span<const Subject> group1) {
  LogRankResult r;
  if (group0.empty() || group1.empty()) {
    r.degenerate = true;
    return r;
  }
  const auto t0 = tally(group0);
  const auto t1 = tally(group1);
  std::map<double, std::pair<Tally, Tally>> all;
  for (const auto& [time, t] : t0) all[time].first = t;
  for (const auto& [time, t] : t1) all[time].second = t;

  double n0 = static_cast<double>(group0.size()), n1 = static_cast<double>(group1.size());
  double total_events = 0.0;
  for (const auto& [time, pair] : all) {
    const auto& [a, b] = pair;
    const double d = static_cast<double>(a.events + b.events);
    const double n = n0 + n1;
    if (d > 0.0) {
      total_events += d;
      r.observed1 += static_cast<double>(b.events);
      r.expected1 += d * n1 / n;
      if (n > 1.0) r.variance += d * (n1 / n) * (1.0 - n1 / n) * (n - d) / (n - 1.0);
    }
    n0 -= static_cast<double>(a.events + a.censored);
    n1 -= static_cast<double>(b.events + b.censored);
  }
  if (total_events == 0.0) throw SurvivalError("log-rank test needs at least one event");
  if (r.variance <= 0.0) {
    r.degenerate = true;
    return r;
  }
  const double diff = r.observed1 - r.expected1;
  r.chi2 = diff * diff / r.variance;
  if (r.chi2 < 1e-20) r.chi2 = 0.0;
  r.p_value = metrics::chi2_sf(r.chi2, 1.0);
  return r;
}

LogRankResult log_rank(std::span<const Subject> subjects) {
  std::vector<Subject> g0, g1;
  for (const auto& s : subjects) (s.group == 1 ? g1 : g0).push_back(s);
  return log_rank(g0, g1);
}

std::vector<int> stratify_by_prediction(std::span<const double> probabilities, double threshold) {
  std::vector<int> out;
  out.reserve(probabilities.size());
  for (double p : probabilities) out.push_back(p >= threshold ? 1 : 0);
  return out;
}

}  // namespace hcmrisk::survival
