#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "hcmrisk/longitudinal.hpp"

using namespace hcmrisk;
using namespace hcmrisk::longitudinal;
using cohort::parse_date;
using cohort::PatientExam;

namespace {

PatientExam exam(const std::string& id, const char* date, double v) {
  return PatientExam{id, parse_date(date), {v}};
}

RiskTrajectory with_slope(const std::string& id, double s) {
  RiskTrajectory t;
  t.patient_id = id;
  t.points = {{0.0, 0.5}, {1.0, 0.5 + s}};
  t.slope = s;
  t.n_exams = 2;
  return t;
}

}  // namespace

TEST(Ols, HandValues) {
  const std::vector<TrajectoryPoint> a{{0, 0}, {1, 1}};
  EXPECT_DOUBLE_EQ(ols_slope(a), 1.0);
  const std::vector<TrajectoryPoint> b{{0, 0.2}, {1, 0.2}, {2, 0.8}};
  EXPECT_NEAR(ols_slope(b), 0.3, 1e-15);
}

TEST(Ols, DegenerateInputThrows) {
  EXPECT_THROW(ols_slope(std::vector<TrajectoryPoint>{{1, 0.2}}), LongitudinalError);
  EXPECT_THROW(ols_slope(std::vector<TrajectoryPoint>{{1, 0.2}, {1, 0.4}}), LongitudinalError);
}

TEST(Ols, ShiftScaleAndReversal) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TrajectoryPoint> pts(2 + trial % 7);
    double t = 0.0;
    for (auto& p : pts) {
      p = {t, u(rng)};
      t += 0.5 + 1.5 * u(rng);
    }
    const double s = ols_slope(pts);
    auto shifted = pts, scaled = pts, reversed = pts;
    for (auto& p : shifted) p.p += 0.25;
    for (auto& p : scaled) p.p *= 0.5;
    for (auto& p : reversed) p.t = -p.t;
    EXPECT_NEAR(ols_slope(shifted), s, 1e-12);
    EXPECT_NEAR(ols_slope(scaled), 0.5 * s, 1e-12);
    EXPECT_EQ(ols_slope(reversed), -s);
  }
}

TEST(Trajectory, SingleExamHasNoSlope) {
  const auto e = exam("P", "2010-01-01", 0.3);
  const std::vector<const PatientExam*> ptrs{&e};
  const auto t = trajectory([](const PatientExam& x) { return x.values[0]; }, ptrs);
  EXPECT_EQ(t.points.size(), 1u);
  EXPECT_FALSE(t.has_slope());
  EXPECT_EQ(t.n_exams, 1u);
}

TEST(Trajectory, ConstantInputsGiveZeroSlope) {
  std::vector<PatientExam> ex{exam("P", "2010-01-01", 0.4), exam("P", "2011-06-01", 0.4),
                              exam("P", "2013-02-01", 0.4)};
  std::vector<const PatientExam*> ptrs;
  for (const auto& e : ex) ptrs.push_back(&e);
  const auto t = trajectory([](const PatientExam& x) { return x.values[0]; }, ptrs);
  EXPECT_EQ(*t.slope, 0.0);
  EXPECT_EQ(t.points.front().t, 0.0);
}

TEST(Trajectory, OrderOfExamsDoesNotMatter) {
  std::vector<PatientExam> ex{exam("P", "2012-03-01", 0.5), exam("P", "2010-01-01", 0.1),
                              exam("P", "2011-01-01", 0.3)};
  const ExamPredictor f = [](const PatientExam& x) { return x.values[0]; };
  std::vector<const PatientExam*> fwd{&ex[1], &ex[2], &ex[0]}, mixed{&ex[0], &ex[1], &ex[2]};
  const auto a = trajectory(f, fwd), b = trajectory(f, mixed);
  ASSERT_EQ(a.points.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.points[i].t, b.points[i].t);
    EXPECT_EQ(a.points[i].p, b.points[i].p);
  }
  EXPECT_EQ(a.slope, b.slope);
  EXPECT_EQ(a.points[0].p, 0.1);
  EXPECT_GT(*a.slope, 0.0);
}

TEST(Trajectory, SameDayExamsAreAveraged) {
  std::vector<PatientExam> ex{exam("P", "2010-01-01", 0.2), exam("P", "2010-01-01", 0.4),
                              exam("P", "2011-01-01", 0.5)};
  std::vector<const PatientExam*> ptrs{&ex[0], &ex[1], &ex[2]};
  const auto t = trajectory([](const PatientExam& x) { return x.values[0]; }, ptrs);
  ASSERT_EQ(t.points.size(), 2u);
  EXPECT_NEAR(t.points[0].p, 0.3, 1e-15);
  EXPECT_EQ(t.n_exams, 3u);
}

TEST(Trajectory, MixedPatientsRejected) {
  std::vector<PatientExam> ex{exam("P", "2010-01-01", 0.2), exam("Q", "2011-01-01", 0.4)};
  std::vector<const PatientExam*> ptrs{&ex[0], &ex[1]};
  EXPECT_THROW(trajectory([](const PatientExam& x) { return x.values[0]; }, ptrs), LongitudinalError);
  EXPECT_THROW(trajectory([](const PatientExam&) { return 0.0; }, std::vector<const PatientExam*>{}),
               LongitudinalError);
}

TEST(Summary, FlatSlopesGiveNullTest) {
  std::vector<RiskTrajectory> ts;
  std::map<std::string, int> labels;
  for (int i = 0; i < 6; ++i) {
    ts.push_back(with_slope("P" + std::to_string(i), 0.0));
    labels[ts.back().patient_id] = i % 2;
  }
  const auto s = slope_summary(ts, labels);
  EXPECT_EQ(s.slope_test.t, 0.0);
  EXPECT_EQ(s.slope_test.p_value, 1.0);
  EXPECT_EQ(s.event.n, 3u);
  EXPECT_EQ(s.event_fraction_rising, 0.0);
}

TEST(Summary, GroupStatisticsAndExclusions) {
  std::vector<RiskTrajectory> ts{with_slope("a", 0.1), with_slope("b", 0.3), with_slope("c", -0.2),
                                 with_slope("d", -0.05), with_slope("e", 0.05)};
  RiskTrajectory lone;
  lone.patient_id = "f";
  lone.points = {{0, 0.3}};
  lone.n_exams = 1;
  ts.push_back(lone);
  const std::map<std::string, int> labels{{"a", 1}, {"b", 1}, {"c", 1}, {"d", 0}, {"e", 0}, {"f", 1}};
  const auto s = slope_summary(ts, labels);
  EXPECT_EQ(s.excluded, 1u);
  EXPECT_NEAR(s.event.mean_slope, 0.2 / 3.0, 1e-15);
  EXPECT_NEAR(s.event.mean_abs_slope, 0.2, 1e-15);
  EXPECT_NEAR(s.event_free.mean_slope, 0.0, 1e-15);
  EXPECT_NEAR(s.event_free.std_slope, 0.05, 1e-15);
  EXPECT_NEAR(s.event_fraction_rising, 2.0 / 3.0, 1e-15);
  const std::vector<double> ev{0.1, 0.3, -0.2}, fr{-0.05, 0.05};
  EXPECT_NEAR(s.slope_test.t, metrics::welch_t(ev, fr).t, 1e-12);
}

TEST(Summary, OrderInvariantAndNeedsTwoPerGroup) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<RiskTrajectory> ts;
  std::map<std::string, int> labels;
  for (int i = 0; i < 40; ++i) {
    ts.push_back(with_slope("P" + std::to_string(i), 0.05 * g(rng)));
    labels[ts.back().patient_id] = i % 4 == 0;
  }
  const auto a = slope_summary(ts, labels);
  std::shuffle(ts.begin(), ts.end(), rng);
  const auto b = slope_summary(ts, labels);
  EXPECT_EQ(a.event.mean_slope, b.event.mean_slope);
  EXPECT_EQ(a.event_free.std_abs_slope, b.event_free.std_abs_slope);
  EXPECT_EQ(a.slope_test.p_value, b.slope_test.p_value);

  const std::vector<RiskTrajectory> few{with_slope("a", 0.1), with_slope("b", 0.2), with_slope("c", 0.0)};
  EXPECT_THROW(slope_summary(few, {{"a", 1}, {"b", 0}, {"c", 0}}), LongitudinalError);
}
