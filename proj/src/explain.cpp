#include "hcmrisk/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "hcmrisk/metrics.hpp"
#include "hcmrisk/preprocess.hpp"
#include "hcmrisk/rng.hpp"

namespace hcmrisk::explain {

std::string_view to_string(ShapMethod m) {
  switch (m) {
    case ShapMethod::TreePathDependent: return "tree_path_dependent";
    case ShapMethod::LinearInterventional: return "linear_interventional";
    case ShapMethod::SamplingInterventional: return "sampling_interventional";
  }
  return "tree_path_dependent";
}

namespace {

// Shapley weight |S|! (M-|S|-1)! / M! for every coalition size.
std::vector<double> shapley_weights(std::size_t M) {
  std::vector<double> w(M);
  for (std::size_t s = 0; s < M; ++s)
    w[s] = std::exp(std::lgamma(static_cast<double>(s) + 1.0) +
                    std::lgamma(static_cast<double>(M - s)) - std::lgamma(static_cast<double>(M) + 1.0));
  return w;
}

}  // namespace

Attribution exact_shapley(const ModelFn& f, std::span<const double> x, const Matrix& background) {
  const std::size_t M = x.size();
  if (M > kMaxExactFeatures)
    throw ExplainError("exact Shapley enumeration supports at most " +
                       std::to_string(kMaxExactFeatures) + " features");
  if (background.rows() == 0) throw ExplainError("background set is empty");
  if (background.cols() != M) throw ExplainError("background width differs from x");

  const std::size_t n_sets = std::size_t{1} << M;
  std::vector<double> v(n_sets);
  std::vector<double> z(M);
  for (std::size_t mask = 0; mask < n_sets; ++mask) {
    double s = 0.0;
    for (std::size_t b = 0; b < background.rows(); ++b) {
      const auto row = background.row(b);
      for (std::size_t j = 0; j < M; ++j) z[j] = (mask >> j) & 1U ? x[j] : row[j];
      s += f(z);
    }
    v[mask] = s / static_cast<double>(background.rows());
  }
  const auto w = shapley_weights(M);
  Attribution a;
  a.phi.assign(M, 0.0);
  a.base = v[0];
  for (std::size_t i = 0; i < M; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    double acc = 0.0;
    for (std::size_t mask = 0; mask < n_sets; ++mask) {
      if (mask & bit) continue;
      acc += w[std::popcount(mask)] * (v[mask | bit] - v[mask]);
    }
    a.phi[i] = acc;
  }
  return a;
}

namespace {

struct PathElement {
  int feature;
  double zero_fraction;
  double one_fraction;
  double weight;
};

using Path = std::vector<PathElement>;

void extend(Path& path, double zero_fraction, double one_fraction, int feature) {
  const std::size_t n = path.size();
  path.push_back({feature, zero_fraction, one_fraction, n == 0 ? 1.0 : 0.0});
  const double denom = static_cast<double>(n + 1);
  for (std::size_t i = n; i-- > 0;) {
    path[i + 1].weight += one_fraction * path[i].weight * static_cast<double>(i + 1) / denom;
    path[i].weight = zero_fraction * path[i].weight * static_cast<double>(n - i) / denom;
  }
}

void unwind(Path& path, std::size_t idx) {
  const std::size_t n = path.size() - 1;
  const double one = path[idx].one_fraction;
  const double zero = path[idx].zero_fraction;
  double next = path.back().weight;
  const double denom = static_cast<double>(n + 1);
  for (std::size_t j = n; j-- > 0;) {
    if (one != 0.0) {
      const double tmp = path[j].weight;
      path[j].weight = next * denom / (static_cast<double>(j + 1) * one);
      next = tmp - path[j].weight * zero * static_cast<double>(n - j) / denom;
    } else {
      path[j].weight = path[j].weight * denom / (zero * static_cast<double>(n - j));
    }
  }
  for (std::size_t j = idx; j < n; ++j) {
    path[j].feature = path[j + 1].feature;
    path[j].zero_fraction = path[j + 1].zero_fraction;
    path[j].one_fraction = path[j + 1].one_fraction;
  }
  path.pop_back();
}

double unwound_sum(const Path& path, std::size_t idx) {
  const std::size_t n = path.size() - 1;
  const double one = path[idx].one_fraction;
  const double zero = path[idx].zero_fraction;
  double next = path.back().weight;
  double total = 0.0;
  const double denom = static_cast<double>(n + 1);
  if (one != 0.0) {
    for (std::size_t i = n; i-- > 0;) {
      const double tmp = next / (static_cast<double>(i + 1) * one);
      total += tmp;
      next = path[i].weight - tmp * zero * static_cast<double>(n - i);
    }
  } else {
    for (std::size_t i = n; i-- > 0;) total += path[i].weight / (zero * static_cast<double>(n - i));
  }
  return total * denom;
}

struct TreeShapRun {
  const std::vector<models::TreeNode>& nodes;
  std::span<const double> x;
  std::vector<double>& phi;

  void recurse(std::size_t node, Path path, double zero_fraction, double one_fraction, int feature) {
    extend(path, zero_fraction, one_fraction, feature);
    const auto& nd = nodes[node];
    if (nd.is_leaf()) {
      for (std::size_t i = 1; i < path.size(); ++i) {
        const double w = unwound_sum(path, i);
        phi[path[i].feature] += w * (path[i].one_fraction - path[i].zero_fraction) * nd.value;
      }
      return;
    }
    const auto hot = static_cast<std::size_t>(x[nd.feature] <= nd.threshold ? nd.left : nd.right);
    const auto cold = static_cast<std::size_t>(hot == static_cast<std::size_t>(nd.left) ? nd.right : nd.left);
    double incoming_zero = 1.0, incoming_one = 1.0;
    for (std::size_t k = 1; k < path.size(); ++k) {
      if (path[k].feature == nd.feature) {
        incoming_zero = path[k].zero_fraction;
        incoming_one = path[k].one_fraction;
        unwind(path, k);
        break;
      }
    }
    const double cover = nd.cover;
    recurse(hot, path, incoming_zero * nodes[hot].cover / cover, incoming_one, nd.feature);
    const double cold_zero = incoming_zero * nodes[cold].cover / cover;
    if (cold_zero > 0.0) recurse(cold, path, cold_zero, 0.0, nd.feature);
  }
};

double expected_value(const std::vector<models::TreeNode>& nodes) {
  double s = 0.0;
  for (const auto& n : nodes)
    if (n.is_leaf()) s += n.value * n.cover;
  return s / nodes[0].cover;
}

}  // namespace

Attribution tree_shap(const models::DecisionTree& tree, std::span<const double> x,
                      std::size_t n_features) {
  Attribution a;
  a.phi.assign(n_features, 0.0);
  const auto& nodes = tree.nodes();
  if (!(nodes[0].cover > 0.0)) throw ExplainError("tree has no cover information");
  a.base = expected_value(nodes);
  if (nodes[0].is_leaf()) return a;
  if (tree.max_feature() >= static_cast<int>(n_features))
    throw ExplainError("tree uses a feature beyond the input width");
  TreeShapRun run{nodes, x, a.phi};
  run.recurse(0, Path{}, 1.0, 1.0, -1);
  return a;
}

Attribution tree_shap(const models::FittedClassifier& model, std::span<const double> x) {
  const std::size_t p = model.feature_count();
  if (x.size() != p) throw ExplainError("input width differs from the model");
  Attribution total;
  total.phi.assign(p, 0.0);
  auto accumulate_trees = [&](const std::vector<models::DecisionTree>& trees, double scale) {
    for (const auto& t : trees) {
      const auto a = tree_shap(t, x, p);
      for (std::size_t j = 0; j < p; ++j) total.phi[j] += scale * a.phi[j];
      total.base += scale * a.base;
    }
  };
  if (const auto* rf = std::get_if<models::RandomForest>(&model.model())) {
    accumulate_trees(rf->trees, 1.0 / static_cast<double>(rf->trees.size()));
  } else if (const auto* gb = std::get_if<models::GradientBoosting>(&model.model())) {
    total.base = gb->base_margin;
    accumulate_trees(gb->trees, 1.0);
  } else {
    throw ExplainError("TreeSHAP needs a random forest or gradient boosting model");
  }
  return total;
}

LinearAttribution linear_attribution(const models::FittedClassifier& model) {
  const auto* lr = std::get_if<models::LogisticModel>(&model.model());
  if (!lr) throw ExplainError("linear attribution needs a logistic regression model");
  return {lr->weights, lr->intercept};
}

Attribution linear_shap(const LinearAttribution& lin, std::span<const double> x,
                        std::span<const double> background_mean) {
  Attribution a;
  a.base = lin.intercept;
  a.phi.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    a.phi[j] = lin.coefficients[j] * (x[j] - background_mean[j]);
    a.base += lin.coefficients[j] * background_mean[j];
  }
  return a;
}

Attribution sampling_shapley(const ModelFn& f, std::span<const double> x, const Matrix& background,
                             std::size_t permutations, std::uint64_t seed) {
  if (permutations < 1) throw ExplainError("need at least one permutation");
  if (background.rows() == 0) throw ExplainError("background set is empty");
  const std::size_t M = x.size();
  if (background.cols() != M) throw ExplainError("background width differs from x");

  auto rng = make_rng(seed, {0x73616d70});
  std::vector<std::size_t> perm(M);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> sum(M, 0.0), sum_sq(M, 0.0), z(M);
  double base_sum = 0.0;
  for (std::size_t k = 0; k < permutations; ++k) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto bg = background.row(k % background.rows());
    std::copy(bg.begin(), bg.end(), z.begin());
    double prev = f(z);
    base_sum += prev;
    for (std::size_t j : perm) {
      z[j] = x[j];
      const double cur = f(z);
      const double d = cur - prev;
      sum[j] += d;
      sum_sq[j] += d * d;
      prev = cur;
    }
  }
  const double m = static_cast<double>(permutations);
  Attribution a;
  a.base = base_sum / m;
  a.phi.resize(M);
  a.standard_error.resize(M);
  for (std::size_t j = 0; j < M; ++j) {
    a.phi[j] = sum[j] / m;
    const double var = permutations > 1 ? std::max(0.0, (sum_sq[j] - m * a.phi[j] * a.phi[j]) / (m - 1.0)) : 0.0;
    a.standard_error[j] = std::sqrt(var / m);
  }
  return a;
}

ShapMatrix explain_rows(const models::FittedClassifier& model, const Matrix& X,
                        const Matrix& background, const ShapOptions& options, Exec exec) {
  const std::size_t n = X.rows(), p = X.cols();
  ShapMatrix out;
  out.values = Matrix(n, p);
  out.feature_values = X;
  std::vector<double> bases(n, 0.0);

  std::function<Attribution(std::size_t)> one;
  switch (model.kind()) {
    case models::ModelKind::RandomForest:
    case models::ModelKind::GradientBoosting:
      out.method = ShapMethod::TreePathDependent;
      out.output_space = model.kind() == models::ModelKind::RandomForest ? "probability" : "log_odds";
      one = [&](std::size_t i) { return tree_shap(model, X.row(i)); };
      break;
    case models::ModelKind::Logistic: {
      out.method = ShapMethod::LinearInterventional;
      out.output_space = "log_odds";
      auto lin = linear_attribution(model);
      std::vector<double> mu(p, 0.0);
      for (std::size_t b = 0; b < background.rows(); ++b)
        for (std::size_t j = 0; j < p; ++j) mu[j] += background(b, j);
      for (auto& m : mu) m /= std::max<std::size_t>(1, background.rows());
      one = [lin, mu, &X](std::size_t i) { return linear_shap(lin, X.row(i), mu); };
      break;
    }
    case models::ModelKind::LinearSvm: {
      out.method = ShapMethod::SamplingInterventional;
      out.output_space = "probability";
      ModelFn f = [&model](std::span<const double> z) { return model.predict_proba(z); };
      one = [f, &X, &background, &options](std::size_t i) {
        return sampling_shapley(f, X.row(i), background, options.permutations,
                                derive_seed(options.seed, {i}));
      };
      break;
    }
  }

  auto fill = [&](std::size_t i) {
    const auto a = one(i);
    std::copy(a.phi.begin(), a.phi.end(), out.values.row(i).begin());
    bases[i] = a.base;
  };
  const auto count = static_cast<long>(n);
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < count; ++i) fill(static_cast<std::size_t>(i));
  } else {
    for (long i = 0; i < count; ++i) fill(static_cast<std::size_t>(i));
  }
  out.base_value = n > 0 ? metrics::mean(bases) : 0.0;
  out.feature_index.resize(p);
  std::iota(out.feature_index.begin(), out.feature_index.end(), 0);
  return out;
}

ImportanceRanking pool_importance(std::span<const ShapMatrix> folds,
                                  std::span<const std::string> all_names) {
  if (folds.empty()) throw ExplainError("no SHAP matrices to pool");
  const std::size_t P = all_names.size();
  std::vector<double> abs_sum(P, 0.0);
  std::size_t total_rows = 0;
  std::vector<std::vector<double>> vals(P), phis(P);
  for (const auto& fold : folds) {
    total_rows += fold.values.rows();
    for (std::size_t c = 0; c < fold.feature_index.size(); ++c) {
      const std::size_t g = fold.feature_index[c];
      if (g >= P) throw ExplainError("SHAP column maps outside the feature list");
      for (std::size_t i = 0; i < fold.values.rows(); ++i) {
        abs_sum[g] += std::abs(fold.values(i, c));
        vals[g].push_back(fold.feature_values(i, c));
        phis[g].push_back(fold.values(i, c));
      }
    }
  }
  ImportanceRanking r;
  r.names.assign(all_names.begin(), all_names.end());
  r.importance.resize(P);
  r.direction.resize(P);
  for (std::size_t g = 0; g < P; ++g) {
    r.importance[g] = total_rows > 0 ? abs_sum[g] / static_cast<double>(total_rows) : 0.0;
    const double corr = vals[g].size() >= 2 ? preprocess::pairwise_pearson(vals[g], phis[g]) : 0.0;
    r.direction[g] = corr > 0 ? 1 : (corr < 0 ? -1 : 0);
  }
  r.order.resize(P);
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
    return r.importance[a] > r.importance[b];
  });
  return r;
}

}  // namespace hcmrisk::explain
