#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hcmrisk/matrix.hpp"
#include "hcmrisk/parallel.hpp"
#include "hcmrisk/tree.hpp"

namespace hcmrisk::models {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { RandomForest, GradientBoosting, Logistic, LinearSvm };

std::string_view to_string(ModelKind k);  // "rf", "gb", "lr", "svm"
ModelKind parse_model_kind(std::string_view s);

using Hyperparams = std::map<std::string, double>;

struct ClassifierSpec {
  ModelKind kind = ModelKind::RandomForest;
  Hyperparams hyperparams;  // unset names take defaults
  std::uint64_t seed = 0;

  // Rejects names that do not belong to `kind` and out-of-range values.
  void validate() const;
  double get(const std::string& name) const;  // value or the kind's default
};

// Names accepted per kind, with their defaults.
const Hyperparams& default_hyperparams(ModelKind kind);

// --- random forest ---------------------------------------------------------

struct ForestParams {
  std::size_t n_trees = 100;
  int max_depth = -1;
  std::size_t min_leaf = 1;
  std::size_t mtry = 0;  // 0: ceil(sqrt(p))
  bool bootstrap = true;
};

struct RandomForest {
  std::vector<DecisionTree> trees;
  double predict(std::span<const double> x) const;
};

// Tree t draws from its own stream derive(seed, t), so the serial and the
// OpenMP paths grow identical forests.
RandomForest fit_forest(const Matrix& X, std::span<const int> y, const ForestParams& params,
                        std::uint64_t seed, Exec exec = Exec::Parallel);

// --- gradient boosting -----------------------------------------------------

struct BoostParams {
  std::size_t rounds = 100;
  double shrinkage = 0.1;
  int max_depth = 3;
  std::size_t min_leaf = 1;
};

// margin(x) = base_margin + sum of tree outputs; leaf outputs already include
// the shrinkage factor.
struct GradientBoosting {
  double base_margin = 0.0;
  double shrinkage = 0.1;
  std::vector<DecisionTree> trees;
  double margin(std::span<const double> x) const;
  double predict(std::span<const double> x) const;
};

// `loss_trace` (optional) receives the mean training log-loss before the
// first round and after every round.
GradientBoosting fit_boosting(const Matrix& X, std::span<const int> y, const BoostParams& params,
                              std::vector<double>* loss_trace = nullptr);

// --- logistic regression ---------------------------------------------------

struct LogisticModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double margin(std::span<const double> x) const;
  double predict(std::span<const double> x) const;
};

// Mean log-loss plus (lambda/2)|w|^2, intercept unpenalized. Parameters are
// packed as [w..., b].
struct LogisticObjective {
  const Matrix& X;
  std::span<const int> y;
  double lambda;
  double value(std::span<const double> params) const;
  std::vector<double> gradient(std::span<const double> params) const;
};

struct LogisticFitInfo {
  int iterations = 0;
  double gradient_norm = 0.0;
};

LogisticModel fit_logistic(const Matrix& X, std::span<const int> y, double lambda,
                           double tolerance = 1e-8, int max_iter = 200,
                           LogisticFitInfo* info = nullptr);

// --- linear SVM with Platt calibration --------------------------------------

struct PlattScaling {
  double a = 0.0;  // p = 1 / (1 + exp(a*f + b)); a <= 0 keeps p non-decreasing in f
  double b = 0.0;
  double operator()(double decision) const;
};

PlattScaling fit_platt(std::span<const double> decision, std::span<const int> y);

struct LinearSvm {
  std::vector<double> weights;
  double intercept = 0.0;
  PlattScaling platt;
  double decision(std::span<const double> x) const;
  double predict(std::span<const double> x) const { return platt(decision(x)); }
};

struct SvmParams {
  double C = 1.0;
  int max_epochs = 1000;
  std::size_t platt_folds = 3;
};

// Hinge-loss dual coordinate descent; the calibrator is fit on out-of-fold
// decision values from `platt_folds` stratified folds.
LinearSvm fit_svm(const Matrix& X, std::span<const int> y, const SvmParams& params,
                  std::uint64_t seed);

// Hinge-loss weights only (no calibration).
LinearSvm fit_svm_margin(const Matrix& X, std::span<const int> y, double C, int max_epochs,
                         std::uint64_t seed);

// --- common contract -------------------------------------------------------

using ModelVariant = std::variant<RandomForest, GradientBoosting, LogisticModel, LinearSvm>;

class FittedClassifier {
 public:
  FittedClassifier(ModelKind kind, Hyperparams hyperparams, std::uint64_t seed,
                   std::size_t feature_count, ModelVariant model);

  ModelKind kind() const { return kind_; }
  const Hyperparams& hyperparams() const { return hyperparams_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t feature_count() const { return feature_count_; }
  const ModelVariant& model() const { return model_; }

  // Class-1 probability. Throws ModelError on dimension mismatch or NaN.
  double predict_proba(std::span<const double> x) const;
  std::vector<double> predict_proba(const Matrix& X) const;

 private:
  ModelKind kind_;
  Hyperparams hyperparams_;
  std::uint64_t seed_;
  std::size_t feature_count_;
  ModelVariant model_;
};

// Requires both classes in y and finite X.
FittedClassifier fit_classifier(const ClassifierSpec& spec, const Matrix& X, std::span<const int> y,
                                Exec exec = Exec::Parallel);

// Versioned JSON; doubles are written in shortest round-trip form.
std::string to_json(const FittedClassifier& model);
FittedClassifier classifier_from_json(std::string_view text);

double sigmoid(double z);
double log1pexp(double z);

}  // namespace hcmrisk::models
