#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "hcmrisk/folds.hpp"
#include "hcmrisk/pipeline.hpp"
#include "hcmrisk/synth.hpp"

using namespace hcmrisk;
using namespace hcmrisk::pipeline;

namespace {

double set_score(std::span<const std::size_t> s, const std::map<std::vector<std::size_t>, double>& table) {
  std::vector<std::size_t> key(s.begin(), s.end());
  std::sort(key.begin(), key.end());
  auto it = table.find(key);
  return it == table.end() ? 0.0 : it->second;
}

// A member whose probability is p everywhere, over a single feature.
EnsembleMember constant_member(double p) {
  models::LogisticModel lr{{0.0}, std::log(p / (1.0 - p))};
  models::FittedClassifier m(models::ModelKind::Logistic, {{"lambda", 0.1}}, 0, 1, lr);
  return EnsembleMember{m, preprocess::FittedPreprocessor{{0.0}, {0.0}, {1.0}, 10}, {0}, {}};
}

const cohort::FeatureSchema& schema() {
  static const auto s = cohort::FeatureSchema::demo();
  return s;
}

cohort::Cohort synthetic(std::size_t n, std::uint64_t seed, const char* name = "florence-like") {
  auto spec = synth::preset(name, seed);
  spec.n_patients = n;
  return synth::generate_cohort(spec, schema()).cohort;
}

NestedCvOptions quick_options() {
  NestedCvOptions o;
  o.sffs_cap = 6;
  o.shap_permutations = 50;
  return o;
}

}  // namespace

TEST(Plan, Validation) {
  CvPlan p;
  EXPECT_NO_THROW(p.validate());
  p.outer_folds = 1;
  EXPECT_THROW(p.validate(), PipelineError);
  p = CvPlan{};
  p.inner_folds = 1;
  EXPECT_THROW(p.validate(), PipelineError);
}

TEST(Folds, StratifiedCountsAndPartition) {
  std::vector<int> y(1201, 0);
  for (std::size_t i = 0; i < 309; ++i) y[i * 3] = 1;
  const auto folds = stratified_folds(y, 5, 42);
  ASSERT_EQ(folds.size(), 5u);
  std::vector<int> seen(y.size(), 0);
  for (const auto& f : folds) {
    std::size_t pos = 0;
    for (auto i : f.test) {
      pos += y[i];
      ++seen[i];
    }
    EXPECT_TRUE(pos == 61 || pos == 62) << pos;
    EXPECT_EQ(f.train.size() + f.test.size(), y.size());
    EXPECT_TRUE(std::is_sorted(f.test.begin(), f.test.end()));
    std::vector<std::size_t> both;
    std::set_intersection(f.train.begin(), f.train.end(), f.test.begin(), f.test.end(), std::back_inserter(both));
    EXPECT_TRUE(both.empty());
  }
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_EQ(stratified_folds(y, 5, 42)[3].test, folds[3].test);
}

TEST(Folds, RandomLabelsStayProportional) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> y(20 + rng() % 300);
    for (auto& v : y) v = rng() % 5 == 0;
    const double total = static_cast<double>(std::count(y.begin(), y.end(), 1));
    const std::size_t k = 2 + trial % 5;
    for (const auto& f : stratified_folds(y, k, trial)) {
      double pos = 0;
      for (auto i : f.test) pos += y[i];
      EXPECT_LT(std::abs(pos - total / k), 1.0 + 1e-12);
    }
  }
}

TEST(Grid, DefaultsAndExpansion) {
  EXPECT_EQ(expand_grid(default_grid(models::ModelKind::RandomForest)).size(), 12u);
  EXPECT_EQ(expand_grid(default_grid(models::ModelKind::GradientBoosting)).size(), 8u);
  EXPECT_EQ(expand_grid(default_grid(models::ModelKind::Logistic)).size(), 3u);
  EXPECT_EQ(expand_grid(default_grid(models::ModelKind::LinearSvm)).size(), 3u);
  const Grid g{{"b", {1, 2}}, {"a", {5, 6, 7}}};
  const auto e = expand_grid(g);
  ASSERT_EQ(e.size(), 6u);
  EXPECT_EQ(e[0], (models::Hyperparams{{"a", 5}, {"b", 1}}));
  EXPECT_EQ(e[1], (models::Hyperparams{{"a", 5}, {"b", 2}}));
  EXPECT_EQ(e[5], (models::Hyperparams{{"a", 7}, {"b", 2}}));
}

TEST(Sffs, SupersetOracle) {
  const SubsetScorer score = [](std::span<const std::size_t> s) {
    const bool has1 = std::find(s.begin(), s.end(), 1) != s.end();
    const bool has3 = std::find(s.begin(), s.end(), 3) != s.end();
    return has1 && has3 ? 1.0 : 0.5 * (has1 + has3);
  };
  EXPECT_EQ(sffs(6, score, 6), (std::vector<std::size_t>{1, 3}));
}

TEST(Sffs, FloatingStepEscapesTheTrap) {
  const std::map<std::vector<std::size_t>, double> table{
      {{0}, 0.5}, {{1}, 0.5}, {{2}, 0.6}, {{0, 2}, 0.65}, {{1, 2}, 0.62}, {{0, 1}, 0.9}, {{0, 1, 2}, 0.8}};
  SffsTrace trace;
  const auto got = sffs(3, [&](std::span<const std::size_t> s) { return set_score(s, table); }, 3, &trace);
  EXPECT_EQ(got, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(trace.removals, 1u);
  ASSERT_EQ(trace.accepted.size(), 4u);
  EXPECT_EQ(trace.accepted[0], (std::vector<std::size_t>{2}));
  EXPECT_EQ(trace.accepted[1], (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(trace.accepted[2], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(trace.accepted[3], (std::vector<std::size_t>{0, 1}));
}

TEST(Sffs, CapOfOneTakesTheBestSingleton) {
  const SubsetScorer score = [](std::span<const std::size_t> s) {
    double v = 0.0;
    for (auto j : s) v += j == 4 ? 0.3 : 0.1;
    return v;
  };
  EXPECT_EQ(sffs(6, score, 1), (std::vector<std::size_t>{4}));
  EXPECT_THROW(sffs(6, score, 0), PipelineError);
}

TEST(Sffs, ScoresStrictlyIncreaseAndTiesGoLow) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> lvl(0, 20);
  for (int trial = 0; trial < 40; ++trial) {
    std::map<std::vector<std::size_t>, double> table;
    const std::size_t n = 3 + trial % 5;
    const SubsetScorer score = [&](std::span<const std::size_t> s) {
      std::vector<std::size_t> key(s.begin(), s.end());
      std::sort(key.begin(), key.end());
      auto [it, fresh] = table.emplace(key, 0.0);
      if (fresh) it->second = lvl(rng) / 20.0;
      return it->second;
    };
    SffsTrace trace;
    const auto got = sffs(n, score, n, &trace);
    for (std::size_t i = 1; i < trace.scores.size(); ++i) EXPECT_GT(trace.scores[i], trace.scores[i - 1]);
    EXPECT_EQ(score(got), trace.scores.back());
  }
  const SubsetScorer flat = [](std::span<const std::size_t> s) { return s.empty() ? 0.0 : 1.0; };
  EXPECT_EQ(sffs(5, flat, 5), (std::vector<std::size_t>{0}));
}

TEST(NestedCv, FoldsAreConsistentAndDeterministic) {
  const auto c = synthetic(300, 3);
  CvPlan plan;
  plan.seed = 11;
  const auto a = nested_cv(c, models::ModelKind::Logistic, default_grid(models::ModelKind::Logistic), plan,
                           quick_options(), Exec::Serial);
  const auto b = nested_cv(c, models::ModelKind::Logistic, default_grid(models::ModelKind::Logistic), plan,
                           quick_options(), Exec::Parallel);
  ASSERT_EQ(a.folds.size(), 5u);
  std::set<std::string> tested;
  for (std::size_t k = 0; k < 5; ++k) {
    const auto& f = a.folds[k];
    EXPECT_EQ(f.selected, b.folds[k].selected);
    EXPECT_EQ(f.test_probabilities, b.folds[k].test_probabilities);
    EXPECT_EQ(models::to_json(a.members[k].model), models::to_json(b.members[k].model));
    EXPECT_EQ(f.shap->values, b.folds[k].shap->values);
    for (auto j : f.selected) EXPECT_TRUE(std::binary_search(f.retained.begin(), f.retained.end(), j));
    EXPECT_LE(f.selected.size(), 6u);
    for (double p : f.test_probabilities) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
    for (const auto& id : f.test_patients) EXPECT_TRUE(tested.insert(id).second);
    EXPECT_EQ(f.undersampled_rows % 2, 0u);
    EXPECT_EQ(f.shap->values.cols(), f.selected.size());
  }
  EXPECT_EQ(tested.size(), 300u);
  EXPECT_GT(a.mean_roc.auc_mean, 0.7);
}

TEST(NestedCv, PoisonedTestRowLeavesTheFoldUntouched) {
  const auto c = synthetic(240, 4);
  const auto table = cohort::baseline_table(c);
  const auto names = c.schema.names();
  CvPlan plan;
  plan.seed = 2;
  const auto splits = stratified_folds(table.y, plan.outer_folds, plan.seed);
  auto opts = quick_options();
  opts.compute_shap = false;
  const auto clean = run_outer_fold(table.X, table.y, table.patient_ids, names, splits[1], 1,
                                    models::ModelKind::Logistic, default_grid(models::ModelKind::Logistic),
                                    plan, opts, Exec::Serial);
  Matrix poisoned = table.X;
  for (std::size_t j = 0; j < poisoned.cols(); ++j) poisoned(splits[1].test[0], j) = 1e9;
  const auto dirty = run_outer_fold(poisoned, table.y, table.patient_ids, names, splits[1], 1,
                                    models::ModelKind::Logistic, default_grid(models::ModelKind::Logistic),
                                    plan, opts, Exec::Serial);
  EXPECT_EQ(clean.outer_preprocessor, dirty.outer_preprocessor);
  EXPECT_EQ(clean.report.selected, dirty.report.selected);
  EXPECT_EQ(models::to_json(clean.member.model), models::to_json(dirty.member.model));
  EXPECT_NE(clean.report.test_probabilities[0], dirty.report.test_probabilities[0]);
}

TEST(Ensemble, MeanOfMembers) {
  std::vector<EnsembleMember> m;
  for (double p : {0.2, 0.4, 0.6, 0.8, 0.999999}) m.push_back(constant_member(p));
  const auto ens = build_ensemble(m, {"x"});
  EXPECT_NEAR(ensemble_predict(ens, std::vector<double>{0.3}), (0.2 + 0.4 + 0.6 + 0.8 + 0.999999) / 5, 1e-12);

  std::vector<EnsembleMember> same(5, constant_member(0.37));
  EXPECT_NEAR(ensemble_predict(build_ensemble(same, {"x"}), std::vector<double>{1.0}), 0.37, 1e-15);

  m.pop_back();
  EXPECT_THROW(build_ensemble(m, {"x"}), PipelineError);
}

TEST(Ensemble, PermutationInvariantAndBounded) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EnsembleMember> m;
    std::vector<double> ps;
    for (int k = 0; k < 5; ++k) {
      ps.push_back(u(rng));
      m.push_back(constant_member(ps.back()));
    }
    const double a = ensemble_predict(build_ensemble(m, {"x"}), std::vector<double>{0.0});
    std::shuffle(m.begin(), m.end(), rng);
    const double b = ensemble_predict(build_ensemble(m, {"x"}), std::vector<double>{0.0});
    EXPECT_EQ(a, b);
    EXPECT_GE(a, *std::min_element(ps.begin(), ps.end()));
    EXPECT_LE(a, *std::max_element(ps.begin(), ps.end()));
  }
}

TEST(Ensemble, MembersImputeWithTheirOwnMedians) {
  const auto c = synthetic(200, 6);
  CvPlan plan;
  plan.seed = 1;
  auto opts = quick_options();
  opts.compute_shap = false;
  auto res = nested_cv(c, models::ModelKind::Logistic, default_grid(models::ModelKind::Logistic), plan, opts);
  const auto ens = build_ensemble(res.members, c.schema.names());
  std::vector<double> missing(c.schema.size(), kMissing);
  double want = 0.0;
  for (const auto& m : ens.members) {
    std::vector<double> med(c.schema.size(), 0.0);
    for (std::size_t i = 0; i < m.features.size(); ++i) med[m.features[i]] = m.preprocessor.medians[i];
    want += member_predict(m, med);
  }
  EXPECT_NEAR(ensemble_predict(ens, missing), want / 5.0, 1e-15);
  EXPECT_THROW(ensemble_predict(ens, std::vector<double>(3, 0.0)), PipelineError);

  const auto back = ensemble_from_json(to_json(ens));
  EXPECT_EQ(to_json(back), to_json(ens));
  for (const auto& e : c.exams) EXPECT_NEAR(ensemble_predict(back, e), ensemble_predict(ens, e), 1e-12);
}

TEST(External, ThresholdExtremesAndShift) {
  const auto c = synthetic(400, 7);
  CvPlan plan;
  plan.seed = 3;
  auto opts = quick_options();
  opts.compute_shap = false;
  const auto res = nested_cv(c, models::ModelKind::Logistic, default_grid(models::ModelKind::Logistic), plan, opts);
  auto ens = build_ensemble(res.members, c.schema.names());

  const auto same = synthetic(400, 70);
  const auto r0 = external_validate(ens, same, 0.0);
  EXPECT_EQ(r0.metrics.sensitivity, 1.0);
  const auto r1 = external_validate(ens, same, 1.0 + 1e-9);
  EXPECT_EQ(r1.metrics.specificity, 1.0);
  double lo = 1.0, hi = 0.0;
  for (const auto& f : res.folds) {
    lo = std::min(lo, f.metrics.auc);
    hi = std::max(hi, f.metrics.auc);
  }
  EXPECT_GE(r0.metrics.auc, lo - 0.05);
  EXPECT_LE(r0.metrics.auc, hi + 0.05);

  auto shifted_spec = synth::preset("rennes-like", 8);
  const auto shifted = synth::generate_cohort(shifted_spec, schema()).cohort;
  const auto rs = external_validate(ens, shifted);
  EXPECT_GT(rs.metrics.auc, 0.5);
  EXPECT_EQ(rs.patient_ids.size(), 382u);
}
