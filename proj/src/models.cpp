#include "hcmrisk/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "hcmrisk/folds.hpp"
#include "hcmrisk/rng.hpp"

namespace hcmrisk::models {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log1pexp(double z) {
  if (z > 35.0) return z;
  if (z < -35.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::RandomForest: return "rf";
    case ModelKind::GradientBoosting: return "gb";
    case ModelKind::Logistic: return "lr";
    case ModelKind::LinearSvm: return "svm";
  }
  return "rf";
}

ModelKind parse_model_kind(std::string_view s) {
  if (s == "rf") return ModelKind::RandomForest;
  if (s == "gb") return ModelKind::GradientBoosting;
  if (s == "lr") return ModelKind::Logistic;
  if (s == "svm") return ModelKind::LinearSvm;
  throw ModelError("unknown model kind '" + std::string(s) + "' (expected rf, gb, lr or svm)");
}

const Hyperparams& default_hyperparams(ModelKind kind) {
  static const Hyperparams rf{
      {"n_trees", 100}, {"max_depth", 8}, {"min_leaf", 5}, {"mtry", 0}, {"bootstrap", 1}};
  static const Hyperparams gb{{"rounds", 100}, {"shrinkage", 0.1}, {"max_depth", 2}, {"min_leaf", 5}};
  static const Hyperparams lr{{"lambda", 0.1}};
  static const Hyperparams svm{{"C", 1.0}, {"max_epochs", 1000}, {"platt_folds", 3}};
  switch (kind) {
    case ModelKind::RandomForest: return rf;
    case ModelKind::GradientBoosting: return gb;
    case ModelKind::Logistic: return lr;
    case ModelKind::LinearSvm: return svm;
  }
  return rf;
}

double ClassifierSpec::get(const std::string& name) const {
  if (auto it = hyperparams.find(name); it != hyperparams.end()) return it->second;
  const auto& d = default_hyperparams(kind);
  if (auto it = d.find(name); it != d.end()) return it->second;
  throw ModelError("hyperparameter '" + name + "' is not defined for " + std::string(to_string(kind)));
}

void ClassifierSpec::validate() const {
  const auto& d = default_hyperparams(kind);
  for (const auto& [name, v] : hyperparams) {
    if (!d.contains(name))
      throw ModelError("hyperparameter '" + name + "' is not valid for " + std::string(to_string(kind)));
    if (!std::isfinite(v)) throw ModelError("hyperparameter '" + name + "' must be finite");
  }
  auto integral = [this](const char* n, double lo) {
    const double v = get(n);
    if (v != std::floor(v) || v < lo)
      throw ModelError(std::string("hyperparameter '") + n + "' must be an integer >= " +
                       std::to_string(static_cast<long>(lo)));
  };
  switch (kind) {
    case ModelKind::RandomForest:
      integral("n_trees", 1);
      integral("max_depth", -1);
      integral("min_leaf", 1);
      integral("mtry", 0);
      integral("bootstrap", 0);
      break;
    case ModelKind::GradientBoosting:
      integral("rounds", 0);
      integral("max_depth", -1);
      integral("min_leaf", 1);
      if (!(get("shrinkage") > 0.0 && get("shrinkage") <= 1.0))
        throw ModelError("shrinkage must be in (0, 1]");
      break;
    case ModelKind::Logistic:
      if (!(get("lambda") > 0.0)) throw ModelError("lambda must be positive");
      break;
    case ModelKind::LinearSvm:
      if (!(get("C") > 0.0)) throw ModelError("C must be positive");
      integral("max_epochs", 1);
      integral("platt_folds", 2);
      break;
  }
}

// --- random forest ---------------------------------------------------------

double RandomForest::predict(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& t : trees) s += t.predict(x);
  return s / static_cast<double>(trees.size());
}

RandomForest fit_forest(const Matrix& X, std::span<const int> y, const ForestParams& params,
                        std::uint64_t seed, Exec exec) {
  if (params.n_trees == 0) throw ModelError("forest needs at least one tree");
  const std::size_t n = X.rows();
  const std::size_t p = X.cols();
  TreeParams tp;
  tp.max_depth = params.max_depth;
  tp.min_leaf = params.min_leaf;
  tp.mtry = params.mtry == 0 ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))))
                             : params.mtry;
  tp.criterion = SplitCriterion::Gini;
  const std::vector<double> target(y.begin(), y.end());

  RandomForest forest;
  forest.trees.resize(params.n_trees);
  auto grow_one = [&](std::size_t t) {
    auto rng = make_rng(seed, {0x74726565, t});
    std::vector<std::size_t> rows(n);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& r : rows) r = pick(rng);
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    forest.trees[t] = grow_tree(X, target, rows, tp, rng);
  };

  const auto count = static_cast<long>(params.n_trees);
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (long t = 0; t < count; ++t) grow_one(static_cast<std::size_t>(t));
  } else {
    for (long t = 0; t < count; ++t) grow_one(static_cast<std::size_t>(t));
  }
  return forest;
}

// --- gradient boosting -----------------------------------------------------

double GradientBoosting::margin(std::span<const double> x) const {
  double m = base_margin;
  for (const auto& t : trees) m += t.predict(x);
  return m;
}

double GradientBoosting::predict(std::span<const double> x) const { return sigmoid(margin(x)); }

namespace {

double mean_log_loss(std::span<const double> margins, std::span<const int> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += log1pexp(margins[i]) - y[i] * margins[i];
  return s / static_cast<double>(y.size());
}

}  // namespace

GradientBoosting fit_boosting(const Matrix& X, std::span<const int> y, const BoostParams& params,
                              std::vector<double>* loss_trace) {
  const std::size_t n = X.rows();
  const double prevalence =
      static_cast<double>(std::accumulate(y.begin(), y.end(), 0)) / static_cast<double>(n);
  if (prevalence <= 0.0 || prevalence >= 1.0) throw ModelError("boosting needs both classes");

  GradientBoosting gb;
  gb.shrinkage = params.shrinkage;
  gb.base_margin = std::log(prevalence / (1.0 - prevalence));

  std::vector<double> margin(n, gb.base_margin);
  std::vector<double> residual(n);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  TreeParams tp;
  tp.max_depth = params.max_depth;
  tp.min_leaf = params.min_leaf;
  tp.criterion = SplitCriterion::SquaredError;
  Rng unused(0);

  if (loss_trace) loss_trace->assign(1, mean_log_loss(margin, y));

  std::vector<std::vector<std::size_t>> leaf_rows;
  for (std::size_t round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - sigmoid(margin[i]);
    DecisionTree tree = grow_tree(X, residual, rows, tp, unused);
    auto& nodes = tree.mutable_nodes();

    leaf_rows.assign(nodes.size(), {});
    std::vector<std::size_t> leaf_of(n);
    for (std::size_t i = 0; i < n; ++i) {
      leaf_of[i] = tree.leaf_index(X.row(i));
      leaf_rows[leaf_of[i]].push_back(i);
    }
    for (std::size_t l = 0; l < nodes.size(); ++l) {
      if (!nodes[l].is_leaf()) continue;
      double g = 0.0, h = 0.0;
      for (auto i : leaf_rows[l]) {
        const double prob = sigmoid(margin[i]);
        g += y[i] - prob;
        h += prob * (1.0 - prob);
      }
      auto leaf_loss = [&](double step) {
        double s = 0.0;
        for (auto i : leaf_rows[l]) s += log1pexp(margin[i] + step) - y[i] * (margin[i] + step);
        return s;
      };
      // Damped Newton step; halved until the leaf's loss does not increase.
      double step = params.shrinkage * g / std::max(h, 1e-12);
      const double base = leaf_loss(0.0);
      int halvings = 0;
      while (step != 0.0 && leaf_loss(step) > base) {
        step *= 0.5;
        if (++halvings > 60) step = 0.0;
      }
      nodes[l].value = step;
    }
    // Internal nodes keep the cover-weighted mean of their leaves so every
    // node value is an expectation of the tree output.
    for (std::size_t k = nodes.size(); k-- > 0;) {
      auto& nd = nodes[k];
      if (nd.is_leaf()) continue;
      const auto& l = nodes[nd.left];
      const auto& r = nodes[nd.right];
      nd.value = (l.value * l.cover + r.value * r.cover) / (l.cover + r.cover);
    }
    for (std::size_t i = 0; i < n; ++i) margin[i] += nodes[leaf_of[i]].value;
    gb.trees.push_back(std::move(tree));
    if (loss_trace) loss_trace->push_back(mean_log_loss(margin, y));
  }
  return gb;
}

// --- logistic regression ---------------------------------------------------

double LogisticModel::margin(std::span<const double> x) const {
  double z = intercept;
  for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
  return z;
}

double LogisticModel::predict(std::span<const double> x) const { return sigmoid(margin(x)); }

double LogisticObjective::value(std::span<const double> params) const {
  const std::size_t p = X.cols();
  double s = 0.0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    double z = params[p];
    const auto row = X.row(i);
    for (std::size_t j = 0; j < p; ++j) z += params[j] * row[j];
    s += log1pexp(z) - y[i] * z;
  }
  double reg = 0.0;
  for (std::size_t j = 0; j < p; ++j) reg += params[j] * params[j];
  return s / static_cast<double>(X.rows()) + 0.5 * lambda * reg;
}

std::vector<double> LogisticObjective::gradient(std::span<const double> params) const {
  const std::size_t p = X.cols();
  const double inv_n = 1.0 / static_cast<double>(X.rows());
  std::vector<double> g(p + 1, 0.0);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    double z = params[p];
    const auto row = X.row(i);
    for (std::size_t j = 0; j < p; ++j) z += params[j] * row[j];
    const double r = sigmoid(z) - y[i];
    for (std::size_t j = 0; j < p; ++j) g[j] += r * row[j];
    g[p] += r;
  }
  for (std::size_t j = 0; j < p; ++j) g[j] = g[j] * inv_n + lambda * params[j];
  g[p] *= inv_n;
  return g;
}

LogisticModel fit_logistic(const Matrix& X, std::span<const int> y, double lambda, double tolerance,
                           int max_iter, LogisticFitInfo* info) {
  if (!(lambda > 0.0)) throw ModelError("lambda must be positive");
  const std::size_t n = X.rows(), p = X.cols();
  LogisticObjective obj{X, y, lambda};
  std::vector<double> theta(p + 1, 0.0);
  const double prevalence =
      static_cast<double>(std::accumulate(y.begin(), y.end(), 0)) / static_cast<double>(n);
  if (prevalence > 0.0 && prevalence < 1.0) theta[p] = std::log(prevalence / (1.0 - prevalence));

  double f = obj.value(theta);
  std::vector<double> g = obj.gradient(theta);
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
  };

  int it = 0;
  for (; it < max_iter && norm(g) > tolerance; ++it) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p + 1, p + 1);
    Eigen::VectorXd xi(p + 1);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = X.row(i);
      double z = theta[p];
      for (std::size_t j = 0; j < p; ++j) {
        z += theta[j] * row[j];
        xi[j] = row[j];
      }
      xi[p] = 1.0;
      const double s = sigmoid(z);
      H.selfadjointView<Eigen::Lower>().rankUpdate(xi, s * (1.0 - s) / static_cast<double>(n));
    }
    H = H.selfadjointView<Eigen::Lower>();
    for (std::size_t j = 0; j < p; ++j) H(j, j) += lambda;
    Eigen::VectorXd gv = Eigen::Map<const Eigen::VectorXd>(g.data(), p + 1);
    Eigen::VectorXd dir = -H.ldlt().solve(gv);
    const double slope = gv.dot(dir);

    double step = 1.0;
    std::vector<double> trial(p + 1);
    double ft = f;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t j = 0; j <= p; ++j) trial[j] = theta[j] + step * dir[j];
      ft = obj.value(trial);
      if (ft <= f + 1e-4 * step * slope) break;
      step *= 0.5;
    }
    if (!(ft <= f)) {
      // Objective at floating-point floor; keep the better point.
      if (norm(obj.gradient(trial)) < norm(g)) theta = trial;
      g = obj.gradient(theta);
      break;
    }
    theta = trial;
    f = ft;
    g = obj.gradient(theta);
  }
  if (info) {
    info->iterations = it;
    info->gradient_norm = norm(g);
  }
  LogisticModel m;
  m.weights.assign(theta.begin(), theta.begin() + static_cast<long>(p));
  m.intercept = theta[p];
  return m;
}

// --- SVM ---------------------------------------------------------------------

double PlattScaling::operator()(double decision) const {
  return sigmoid(-(a * decision + b));
}

PlattScaling fit_platt(std::span<const double> dec, std::span<const int> y) {
  const std::size_t n = dec.size();
  double prior1 = 0, prior0 = 0;
  for (int v : y) (v == 1 ? prior1 : prior0) += 1.0;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = y[i] == 1 ? hi : lo;

  double A = 0.0, B = std::log((prior0 + 1.0) / (prior1 + 1.0));
  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = dec[i] * a + b;
      f += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };
  double fval = objective(A, B);
  constexpr double sigma = 1e-12;
  for (int it = 0; it < 100; ++it) {
    double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = dec[i] * A + B;
      double p, q;
      if (z >= 0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += dec[i] * dec[i] * d2;
      h22 += d2;
      h21 += dec[i] * d2;
      const double d1 = t[i] - p;
      g1 += dec[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;
    double step = 1.0;
    bool moved = false;
    while (step >= 1e-10) {
      const double nA = A + step * dA, nB = B + step * dB;
      const double nf = objective(nA, nB);
      if (nf < fval + 1e-4 * step * gd) {
        A = nA;
        B = nB;
        fval = nf;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  if (A > 0.0) {
    // Inverted ordering on the calibration data: fall back to the flat prior.
    double tbar = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(n);
    A = 0.0;
    B = std::log((1.0 - tbar) / tbar);
  }
  return {A, B};
}

double LinearSvm::decision(std::span<const double> x) const {
  double z = intercept;
  for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
  return z;
}

LinearSvm fit_svm_margin(const Matrix& X, std::span<const int> y, double C, int max_epochs,
                         std::uint64_t seed) {
  const std::size_t n = X.rows(), p = X.cols();
  std::vector<double> w(p + 1, 0.0), alpha(n, 0.0), qii(n), sign(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;  // bias column
    for (double v : X.row(i)) s += v * v;
    qii[i] = s;
    sign[i] = y[i] == 1 ? 1.0 : -1.0;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, {0x73766d});
  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double max_violation = 0.0;
    for (auto i : order) {
      const auto row = X.row(i);
      double wx = w[p];
      for (std::size_t j = 0; j < p; ++j) wx += w[j] * row[j];
      const double G = sign[i] * wx - 1.0;
      double pg = G;
      if (alpha[i] == 0.0) pg = std::min(G, 0.0);
      else if (alpha[i] == C) pg = std::max(G, 0.0);
      max_violation = std::max(max_violation, std::abs(pg));
      if (pg != 0.0) {
        const double old = alpha[i];
        alpha[i] = std::clamp(old - G / qii[i], 0.0, C);
        const double d = (alpha[i] - old) * sign[i];
        for (std::size_t j = 0; j < p; ++j) w[j] += d * row[j];
        w[p] += d;
      }
    }
    if (max_violation < 1e-3) break;
  }
  LinearSvm svm;
  svm.weights.assign(w.begin(), w.begin() + static_cast<long>(p));
  svm.intercept = w[p];
  return svm;
}

LinearSvm fit_svm(const Matrix& X, std::span<const int> y, const SvmParams& params,
                  std::uint64_t seed) {
  const std::size_t n = X.rows();
  std::vector<double> oof(n, 0.0);
  bool oof_ok = true;
  std::vector<Split> folds;
  try {
    folds = stratified_folds(y, params.platt_folds, derive_seed(seed, {0x706c6174}));
  } catch (const std::invalid_argument&) {
    oof_ok = false;
  }
  if (oof_ok) {
    for (std::size_t f = 0; f < folds.size() && oof_ok; ++f) {
      const auto& s = folds[f];
      auto ytr = gather<int>(y, s.train);
      if (std::count(ytr.begin(), ytr.end(), 1) == 0 ||
          std::count(ytr.begin(), ytr.end(), 0) == 0) {
        oof_ok = false;
        break;
      }
      auto part = fit_svm_margin(X.select_rows(s.train), ytr, params.C, params.max_epochs,
                                 derive_seed(seed, {f}));
      for (auto i : s.test) oof[i] = part.decision(X.row(i));
    }
  }
  LinearSvm svm = fit_svm_margin(X, y, params.C, params.max_epochs, seed);
  if (!oof_ok)
    for (std::size_t i = 0; i < n; ++i) oof[i] = svm.decision(X.row(i));
  svm.platt = fit_platt(oof, y);
  return svm;
}

// --- common contract -------------------------------------------------------

FittedClassifier::FittedClassifier(ModelKind kind, Hyperparams hyperparams, std::uint64_t seed,
                                   std::size_t feature_count, ModelVariant model)
    : kind_(kind),
      hyperparams_(std::move(hyperparams)),
      seed_(seed),
      feature_count_(feature_count),
      model_(std::move(model)) {}

double FittedClassifier::predict_proba(std::span<const double> x) const {
  if (x.size() != feature_count_)
    throw ModelError("expected " + std::to_string(feature_count_) + " features, got " +
                     std::to_string(x.size()));
  for (double v : x)
    if (!std::isfinite(v)) throw ModelError("non-finite feature value");
  const double p = std::visit([x](const auto& m) { return m.predict(x); }, model_);
  return std::clamp(p, 0.0, 1.0);
}

std::vector<double> FittedClassifier::predict_proba(const Matrix& X) const {
  std::vector<double> out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict_proba(X.row(i));
  return out;
}

FittedClassifier fit_classifier(const ClassifierSpec& spec, const Matrix& X, std::span<const int> y,
                                Exec exec) {
  spec.validate();
  if (X.rows() != y.size()) throw ModelError("X and y row counts differ");
  if (X.rows() == 0) throw ModelError("empty training set");
  bool has0 = false, has1 = false;
  for (int v : y) {
    if (v == 1) has1 = true;
    else if (v == 0) has0 = true;
    else throw ModelError("labels must be 0 or 1");
  }
  if (!has0 || !has1) throw ModelError("training labels contain a single class");
  for (double v : X.data())
    if (!std::isfinite(v)) throw ModelError("training matrix contains NaN or infinite values");

  Hyperparams hp = default_hyperparams(spec.kind);
  for (const auto& [k, v] : spec.hyperparams) hp[k] = v;
  auto as_size = [&hp](const char* k) { return static_cast<std::size_t>(hp.at(k)); };

  switch (spec.kind) {
    case ModelKind::RandomForest: {
      ForestParams fp;
      fp.n_trees = as_size("n_trees");
      fp.max_depth = hp.at("max_depth") <= 0 ? -1 : static_cast<int>(hp.at("max_depth"));
      fp.min_leaf = as_size("min_leaf");
      fp.mtry = as_size("mtry");
      fp.bootstrap = hp.at("bootstrap") != 0.0;
      return {spec.kind, hp, spec.seed, X.cols(), fit_forest(X, y, fp, spec.seed, exec)};
    }
    case ModelKind::GradientBoosting: {
      BoostParams bp;
      bp.rounds = as_size("rounds");
      bp.shrinkage = hp.at("shrinkage");
      bp.max_depth = hp.at("max_depth") <= 0 ? -1 : static_cast<int>(hp.at("max_depth"));
      bp.min_leaf = as_size("min_leaf");
      return {spec.kind, hp, spec.seed, X.cols(), fit_boosting(X, y, bp)};
    }
    case ModelKind::Logistic:
      return {spec.kind, hp, spec.seed, X.cols(), fit_logistic(X, y, hp.at("lambda"))};
    case ModelKind::LinearSvm: {
      SvmParams sp;
      sp.C = hp.at("C");
      sp.max_epochs = static_cast<int>(hp.at("max_epochs"));
      sp.platt_folds = as_size("platt_folds");
      return {spec.kind, hp, spec.seed, X.cols(), fit_svm(X, y, sp, spec.seed)};
    }
  }
  throw ModelError("unhandled model kind");
}

}  // namespace hcmrisk::models
