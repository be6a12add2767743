#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hcmrisk/explain.hpp"
#include "oracles.hpp"

using namespace hcmrisk;
using namespace hcmrisk::explain;
using hcmrisk::models::DecisionTree;
using hcmrisk::models::TreeNode;

namespace {

Matrix gaussian(std::size_t n, std::size_t p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) m(i, j) = g(rng);
  return m;
}

std::vector<int> labels_from(const Matrix& X, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<int> y(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) y[i] = X(i, 0) + 0.8 * X(i, 1) + 0.7 * g(rng) > 0.3;
  return y;
}

// Interventional coalition value written out directly.
double interventional_value(const ModelFn& f, std::span<const double> x, const Matrix& bg,
                            const std::vector<bool>& s) {
  double total = 0.0;
  std::vector<double> z(x.size());
  for (std::size_t b = 0; b < bg.rows(); ++b) {
    for (std::size_t j = 0; j < x.size(); ++j) z[j] = s[j] ? x[j] : bg(b, j);
    total += f(z);
  }
  return total / bg.rows();
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double a : v) s += a;
  return s;
}

models::ClassifierSpec spec(models::ModelKind k, models::Hyperparams h = {}) {
  models::ClassifierSpec s;
  s.kind = k;
  s.hyperparams = std::move(h);
  s.seed = 3;
  return s;
}

}  // namespace

TEST(ExactShapley, AdditiveModel) {
  Matrix bg(2, 2);
  bg(0, 0) = 1;
  bg(0, 1) = -1;
  bg(1, 0) = -1;
  bg(1, 1) = 1;
  const ModelFn f = [](std::span<const double> z) { return z[0] + z[1]; };
  const auto a = exact_shapley(f, std::vector<double>{2, 4}, bg);
  EXPECT_NEAR(a.phi[0], 2.0, 1e-15);
  EXPECT_NEAR(a.phi[1], 4.0, 1e-15);
  EXPECT_NEAR(a.base, 0.0, 1e-15);
}

TEST(ExactShapley, SymmetricProduct) {
  const auto bg = gaussian(7, 2, 1);
  Matrix sym(14, 2);
  for (std::size_t i = 0; i < 7; ++i) {
    sym(i, 0) = sym(i + 7, 1) = bg(i, 0);
    sym(i, 1) = sym(i + 7, 0) = bg(i, 1);
  }
  const ModelFn f = [](std::span<const double> z) { return z[0] * z[1]; };
  const auto a = exact_shapley(f, std::vector<double>{1.7, 1.7}, sym);
  EXPECT_NEAR(a.phi[0], a.phi[1], 1e-12);
}

TEST(ExactShapley, DepthTwoTreeMatchesCoalitionTable) {
  // x0 <= 0 ? (x2 <= 0.5 ? 0.1 : 0.7) : (x1 <= -0.2 ? 0.4 : 0.9)
  const ModelFn f = [](std::span<const double> z) {
    return z[0] <= 0 ? (z[2] <= 0.5 ? 0.1 : 0.7) : (z[1] <= -0.2 ? 0.4 : 0.9);
  };
  const auto bg = gaussian(9, 3, 2);
  const std::vector<double> x{0.3, -1.0, 2.0};
  const auto a = exact_shapley(f, x, bg);
  const auto want = oracle::shapley_by_orders(
      3, [&](const std::vector<bool>& s) { return interventional_value(f, x, bg, s); });
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.phi[j], want[j], 1e-12);
  EXPECT_NEAR(a.base + sum(a.phi), f(x), 1e-12);
}

TEST(ExactShapley, RejectsTooManyFeatures) {
  const ModelFn f = [](std::span<const double>) { return 0.0; };
  EXPECT_THROW(exact_shapley(f, std::vector<double>(16, 0.0), Matrix(1, 16)), ExplainError);
  EXPECT_THROW(exact_shapley(f, std::vector<double>(2, 0.0), Matrix(0, 2)), ExplainError);
}

TEST(TreeShap, SingleLeaf) {
  TreeNode n;
  n.value = 0.37;
  n.cover = 12;
  const auto a = tree_shap(DecisionTree({n}), std::vector<double>{1, 2, 3}, 3);
  EXPECT_NEAR(a.base, 0.37, 1e-15);
  for (double p : a.phi) EXPECT_EQ(p, 0.0);
}

TEST(TreeShap, UnusedFeaturesGetExactlyZero) {
  std::vector<TreeNode> nodes(5);
  nodes[0] = {2, 0.0, 1, 2, 0.0, 30};
  nodes[1] = {-1, 0, -1, -1, 0.2, 10};
  nodes[2] = {2, 1.0, 3, 4, 0.0, 20};
  nodes[3] = {-1, 0, -1, -1, 0.5, 5};
  nodes[4] = {-1, 0, -1, -1, 0.9, 15};
  const DecisionTree t(nodes);
  for (double v : {-1.0, 0.5, 3.0}) {
    const std::vector<double> x{9.0, -9.0, v, 4.0};
    const auto a = tree_shap(t, x, 4);
    EXPECT_EQ(a.phi[0], 0.0);
    EXPECT_EQ(a.phi[1], 0.0);
    EXPECT_EQ(a.phi[3], 0.0);
    EXPECT_NEAR(a.base + a.phi[2], t.predict(x), 1e-15);
  }
}

TEST(TreeShap, MatchesPathDependentEnumeration) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t M = 2 + trial % 11;
    const auto t = oracle::random_tree(M, 2 + trial % 6, rng);
    std::vector<double> x(M);
    for (auto& v : x) v = g(rng) * 0.7;
    const auto a = tree_shap(t, x, M);
    const auto want = oracle::shapley_from_game(M, [&](const std::vector<bool>& s) { return oracle::tree_value(t, x, s); });
    for (std::size_t j = 0; j < M; ++j) EXPECT_NEAR(a.phi[j], want[j], 1e-9) << "trial " << trial;
    EXPECT_NEAR(a.base, oracle::tree_value(t, x, std::vector<bool>(M, false)), 1e-12);
  }
}

TEST(TreeShap, ForestMatchesOracleAndIsLocallyAccurate) {
  const auto X = gaussian(200, 8, 5);
  const auto y = labels_from(X, 6);
  const auto rf = models::fit_classifier(spec(models::ModelKind::RandomForest, {{"n_trees", 15}, {"max_depth", 5}}), X, y);
  const auto& forest = std::get<models::RandomForest>(rf.model());
  for (std::size_t i = 0; i < 50; ++i) {
    const auto x = X.row(i);
    const auto a = tree_shap(rf, x);
    const auto want = oracle::shapley_from_game(8, [&](const std::vector<bool>& s) {
      double v = 0.0;
      for (const auto& t : forest.trees) v += oracle::tree_value(t, x, s);
      return v / forest.trees.size();
    });
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(a.phi[j], want[j], 1e-9);
    EXPECT_NEAR(a.base + sum(a.phi), rf.predict_proba(x), 1e-9);
  }
}

TEST(TreeShap, BoostingExplainsTheMargin) {
  const auto X = gaussian(150, 5, 7);
  const auto y = labels_from(X, 8);
  const auto gb = models::fit_classifier(spec(models::ModelKind::GradientBoosting, {{"rounds", 30}}), X, y);
  const auto& m = std::get<models::GradientBoosting>(gb.model());
  for (std::size_t i = 0; i < 30; ++i) {
    const auto a = tree_shap(gb, X.row(i));
    EXPECT_NEAR(a.base + sum(a.phi), m.margin(X.row(i)), 1e-9);
  }
  const auto lr = models::fit_classifier(spec(models::ModelKind::Logistic), X, y);
  EXPECT_THROW(tree_shap(lr, X.row(0)), ExplainError);
}

TEST(Linear, CoefficientsAreTheModelWeights) {
  const auto X = gaussian(120, 3, 9);
  const auto y = labels_from(X, 10);
  const auto lr = models::fit_classifier(spec(models::ModelKind::Logistic), X, y);
  const auto lin = linear_attribution(lr);
  const auto& w = std::get<models::LogisticModel>(lr.model());
  EXPECT_EQ(lin.coefficients, w.weights);
  EXPECT_EQ(lin.intercept, w.intercept);

  const LinearAttribution zero{{0, 0, 0}, 0.3};
  const auto a = linear_shap(zero, std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 0});
  for (double p : a.phi) EXPECT_EQ(p, 0.0);

  const auto rf = models::fit_classifier(spec(models::ModelKind::RandomForest, {{"n_trees", 3}}), X, y);
  EXPECT_THROW(linear_attribution(rf), ExplainError);
}

TEST(Linear, DuplicatedFeatureSharesTheWeight) {
  const auto base = gaussian(200, 2, 11);
  Matrix X(200, 3);
  for (std::size_t i = 0; i < 200; ++i) {
    X(i, 0) = base(i, 0);
    X(i, 1) = base(i, 1);
    X(i, 2) = base(i, 0);
  }
  const auto y = labels_from(base, 12);
  const auto lin = linear_attribution(models::fit_classifier(spec(models::ModelKind::Logistic), X, y));
  EXPECT_NEAR(lin.coefficients[0], lin.coefficients[2], 1e-9);
}

TEST(Linear, ShapMatchesExactInterventional) {
  const LinearAttribution lin{{0.5, -1.2, 2.0}, 0.1};
  const auto bg = gaussian(6, 3, 13);
  std::vector<double> mu(3, 0.0);
  for (std::size_t b = 0; b < 6; ++b)
    for (std::size_t j = 0; j < 3; ++j) mu[j] += bg(b, j) / 6.0;
  const std::vector<double> x{1.0, 0.5, -0.3};
  const ModelFn margin = [&](std::span<const double> z) {
    return lin.intercept + lin.coefficients[0] * z[0] + lin.coefficients[1] * z[1] + lin.coefficients[2] * z[2];
  };
  const auto a = linear_shap(lin, x, mu);
  const auto e = exact_shapley(margin, x, bg);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.phi[j], e.phi[j], 1e-12);
  EXPECT_NEAR(a.base + sum(a.phi), margin(x), 1e-12);
}

TEST(Sampling, ConvergesToExactWithinThreeStandardErrors) {
  const ModelFn f = [](std::span<const double> z) {
    return 1.0 / (1.0 + std::exp(-(z[0] * z[1] + 0.5 * z[2] - z[3] * z[3] + 0.3 * z[4] * z[5])));
  };
  const auto bg = gaussian(40, 6, 14);
  const std::vector<double> x{1.2, -0.7, 0.4, 0.9, -1.5, 0.2};
  const auto exact = exact_shapley(f, x, bg);
  const auto est = sampling_shapley(f, x, bg, 20000, 99);
  for (std::size_t j = 0; j < 6; ++j) {
    EXPECT_GT(est.standard_error[j], 0.0);
    EXPECT_LE(std::abs(est.phi[j] - exact.phi[j]), 3.0 * est.standard_error[j]) << "feature " << j;
  }
  EXPECT_NEAR(est.base + sum(est.phi), f(x), 1e-9);
}

TEST(Sampling, AdditiveModelHasNoVariance) {
  const ModelFn f = [](std::span<const double> z) { return 2.0 * z[0] - z[1] + 0.5 * z[2]; };
  const auto bg = gaussian(1, 3, 15);
  const std::vector<double> x{1, 2, 3};
  const auto est = sampling_shapley(f, x, bg, 50, 1);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(est.standard_error[j], 0.0, 1e-12);
  EXPECT_NEAR(est.phi[0], 2.0 * (1 - bg(0, 0)), 1e-12);
}

TEST(Sampling, SeedDeterminismAndDummy) {
  const ModelFn f = [](std::span<const double> z) { return std::tanh(z[0] * z[2]); };
  const auto bg = gaussian(10, 3, 16);
  const std::vector<double> x{0.5, 7.0, -1.0};
  const auto a = sampling_shapley(f, x, bg, 300, 4);
  const auto b = sampling_shapley(f, x, bg, 300, 4);
  EXPECT_EQ(a.phi, b.phi);
  EXPECT_EQ(a.standard_error, b.standard_error);
  EXPECT_EQ(a.phi[1], 0.0);
  EXPECT_THROW(sampling_shapley(f, x, bg, 0, 4), ExplainError);
}

TEST(ExplainRows, LocalAccuracyForEveryKindAndParallelMatchesSerial) {
  const auto X = gaussian(160, 5, 17);
  const auto y = labels_from(X, 18);
  const auto bg = gaussian(30, 5, 19);
  const auto rows = gaussian(12, 5, 20);
  for (auto k : {models::ModelKind::RandomForest, models::ModelKind::GradientBoosting, models::ModelKind::Logistic,
                 models::ModelKind::LinearSvm}) {
    const auto m = models::fit_classifier(spec(k, k == models::ModelKind::RandomForest
                                                      ? models::Hyperparams{{"n_trees", 20}}
                                                      : models::Hyperparams{}),
                                          X, y);
    const ShapOptions opt{200, 5};
    const auto s = explain_rows(m, rows, bg, opt, Exec::Serial);
    const auto p = explain_rows(m, rows, bg, opt, Exec::Parallel);
    EXPECT_EQ(s.values, p.values);
    EXPECT_EQ(s.base_value, p.base_value);
    for (std::size_t i = 0; i < rows.rows(); ++i) {
      const double prob = m.predict_proba(rows.row(i));
      const double target = s.output_space == "log_odds" ? std::log(prob / (1.0 - prob)) : prob;
      double total = s.base_value;
      for (std::size_t j = 0; j < 5; ++j) total += s.values(i, j);
      EXPECT_NEAR(total, target, 1e-6) << models::to_string(k) << " row " << i;
    }
  }
}

TEST(Pooling, IdenticalFoldsAndZeroFeature) {
  ShapMatrix s;
  s.values = gaussian(20, 3, 21);
  s.feature_values = gaussian(20, 3, 22);
  for (std::size_t i = 0; i < 20; ++i) {
    s.values(i, 0) *= 3.0;
    s.values(i, 2) = s.feature_values(i, 2);
  }
  s.feature_index = {0, 2, 3};
  const std::vector<std::string> names{"a", "b", "c", "d"};
  const std::vector<ShapMatrix> one{s}, five(5, s);
  const auto r1 = pool_importance(one, names);
  const auto r5 = pool_importance(five, names);
  EXPECT_EQ(r1.order, r5.order);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(r1.importance[j], r5.importance[j], 1e-15);
  EXPECT_EQ(r1.importance[1], 0.0);
  EXPECT_EQ(r1.order.back(), 1u);
  EXPECT_EQ(r1.order.front(), 0u);
  EXPECT_EQ(r1.direction[3], 1);
  EXPECT_EQ(r1.direction[1], 0);
  EXPECT_THROW(pool_importance(std::vector<ShapMatrix>{}, names), ExplainError);
}

TEST(Pooling, InvariantUnderFoldOrder) {
  std::vector<ShapMatrix> folds(5);
  for (std::size_t k = 0; k < 5; ++k) {
    folds[k].values = gaussian(10 + k, 2, 30 + k);
    folds[k].feature_values = gaussian(10 + k, 2, 40 + k);
    folds[k].feature_index = {k % 3, 3};
  }
  const std::vector<std::string> names{"a", "b", "c", "d"};
  const auto a = pool_importance(folds, names);
  std::reverse(folds.begin(), folds.end());
  const auto b = pool_importance(folds, names);
  EXPECT_EQ(a.order, b.order);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(a.importance[j], b.importance[j], 1e-12);
  EXPECT_EQ(a.direction, b.direction);
}

TEST(Pooling, SignalFeaturesRankFirst) {
  const auto X = gaussian(400, 6, 50);
  const auto y = labels_from(X, 51);
  std::vector<ShapMatrix> folds;
  for (std::uint64_t k = 0; k < 5; ++k) {
    auto sp = spec(models::ModelKind::RandomForest, {{"n_trees", 30}, {"max_depth", 4}});
    sp.seed = k;
    const auto m = models::fit_classifier(sp, X, y);
    folds.push_back(explain_rows(m, gaussian(40, 6, 60 + k), X, ShapOptions{}));
  }
  const std::vector<std::string> names{"f0", "f1", "f2", "f3", "f4", "f5"};
  const auto r = pool_importance(folds, names);
  std::vector<std::size_t> top(r.order.begin(), r.order.begin() + 2);
  std::sort(top.begin(), top.end());
  EXPECT_EQ(top, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(r.direction[0], 1);
  EXPECT_EQ(r.direction[1], 1);
}
