#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcmrisk/matrix.hpp"
#include "hcmrisk/models.hpp"
#include "hcmrisk/parallel.hpp"

namespace hcmrisk::explain {

class ExplainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ModelFn = std::function<double(std::span<const double>)>;

// base + sum(phi) reproduces the explained output.
struct Attribution {
  std::vector<double> phi;
  double base = 0.0;
  std::vector<double> standard_error;  // sampling estimator only
};

inline constexpr std::size_t kMaxExactFeatures = 15;

// Shapley values under the interventional value function
// v(S) = mean over background rows b of f(x_S, b_rest), by enumerating all
// 2^M coalitions.
Attribution exact_shapley(const ModelFn& f, std::span<const double> x, const Matrix& background);

// Path-dependent TreeSHAP for one tree: node covers weight the branches not
// fixed by the coalition. base is the cover-weighted mean leaf value.
Attribution tree_shap(const models::DecisionTree& tree, std::span<const double> x,
                      std::size_t n_features);

// Forest: mean over trees (probability). Boosting: sum over trees plus the
// base margin (log-odds). Throws for non-tree models.
Attribution tree_shap(const models::FittedClassifier& model, std::span<const double> x);

struct LinearAttribution {
  std::vector<double> coefficients;  // standardized feature scale
  double intercept = 0.0;
};
LinearAttribution linear_attribution(const models::FittedClassifier& model);

// Exact interventional SHAP of a linear margin: phi_j = w_j (x_j - mean_j).
Attribution linear_shap(const LinearAttribution& lin, std::span<const double> x,
                        std::span<const double> background_mean);

// Permutation-sampling estimator. Permutation k is paired with background row
// k mod |background|; base is the mean output over the paired rows, so the
// attributions sum exactly to f(x) - base.
Attribution sampling_shapley(const ModelFn& f, std::span<const double> x, const Matrix& background,
                             std::size_t permutations, std::uint64_t seed);

enum class ShapMethod { TreePathDependent, LinearInterventional, SamplingInterventional };
std::string_view to_string(ShapMethod m);

struct ShapMatrix {
  Matrix values;                       // samples x features
  Matrix feature_values;               // inputs that were explained
  double base_value = 0.0;
  std::vector<std::size_t> feature_index;  // column -> global feature index
  std::vector<std::string> feature_names;
  ShapMethod method = ShapMethod::TreePathDependent;
  std::string output_space;            // "probability" or "log_odds"
};

struct ShapOptions {
  std::size_t permutations = 2000;
  std::uint64_t seed = 0;
};

// Picks the method by model kind. Rows are explained independently; the
// parallel path matches the serial one bit for bit.
ShapMatrix explain_rows(const models::FittedClassifier& model, const Matrix& X,
                        const Matrix& background, const ShapOptions& options,
                        Exec exec = Exec::Parallel);

struct ImportanceRanking {
  std::vector<std::string> names;
  std::vector<double> importance;     // mean |phi| over pooled rows
  std::vector<int> direction;         // sign of r(feature value, phi); 0 if undefined
  std::vector<std::size_t> order;     // feature indices, most important first
};

// Rows from all folds are concatenated in the global feature space; a
// feature not selected in a fold contributes phi = 0 for that fold's rows.
ImportanceRanking pool_importance(std::span<const ShapMatrix> folds,
                                  std::span<const std::string> all_names);

}  // namespace hcmrisk::explain
