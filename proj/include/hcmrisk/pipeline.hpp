#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcmrisk/cohort.hpp"
#include "hcmrisk/explain.hpp"
#include "hcmrisk/folds.hpp"
#include "hcmrisk/matrix.hpp"
#include "hcmrisk/metrics.hpp"
#include "hcmrisk/models.hpp"
#include "hcmrisk/parallel.hpp"
#include "hcmrisk/preprocess.hpp"

namespace hcmrisk::pipeline {

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CvPlan {
  std::size_t outer_folds = 5;
  std::size_t inner_folds = 3;
  std::uint64_t seed = 0;
  bool stratified = true;
  void validate() const;
};

using Grid = std::map<std::string, std::vector<double>>;

// RF: n_trees {100, 300}, max_depth {4, 8, unlimited}, min_leaf {1, 5};
// GB: rounds {100, 200}, shrinkage {0.05, 0.1}, max_depth {2, 3};
// LR: lambda {0.01, 0.1, 1}; SVM: C {0.1, 1, 10}.
const Grid& default_grid(models::ModelKind kind);
// Cartesian product; names vary slowest in alphabetical order.
std::vector<models::Hyperparams> expand_grid(const Grid& grid);
// Hyperparameters used while selecting features, before the grid search.
models::Hyperparams selection_defaults(models::ModelKind kind);

// --- feature selection ------------------------------------------------------
using SubsetScorer = std::function<double(std::span<const std::size_t>)>;

struct SffsTrace {
  std::vector<std::vector<std::size_t>> accepted;  // every subset the search moved to
  std::vector<double> scores;                      // strictly increasing
  std::size_t removals = 0;
  std::size_t evaluations = 0;                     // distinct subsets scored
};

// Sequential floating forward selection over features [0, n_features).
// Forward: add the feature with the best score if it beats the current
// subset. Floating: drop a feature (not the one just added) when the smaller
// subset beats both the best score recorded for its size and the current
// subset. Ties go to the lowest feature index. Returns the best subset
// visited, sorted.
std::vector<std::size_t> sffs(std::size_t n_features, const SubsetScorer& score, std::size_t cap,
                              SffsTrace* trace = nullptr);

// --- nested cross-validation ------------------------------------------------
struct NestedCvOptions {
  double correlation_threshold = 0.75;
  std::size_t sffs_cap = 25;
  bool compute_shap = true;
  std::size_t shap_background = 100;
  std::size_t shap_permutations = 2000;
  double threshold = 0.5;
};

struct EnsembleMember {
  models::FittedClassifier model;
  preprocess::FittedPreprocessor preprocessor;  // over `features`
  std::vector<std::size_t> features;            // global column indices
  std::vector<std::string> test_patients;       // outer-test ids of this fold
};

struct FoldReport {
  std::size_t fold_index = 0;
  std::vector<std::size_t> unmeasured;  // all-missing in outer-train, excluded
  std::vector<std::size_t> retained;    // after the correlation filter
  std::vector<preprocess::DroppedFeature> dropped;
  std::vector<std::size_t> selected;    // global indices, subset of retained
  double selection_score = 0.0;         // inner-CV AUC of the selected subset
  models::Hyperparams best_hyperparams;
  double grid_score = 0.0;              // inner-CV AUC of the chosen grid point
  std::size_t train_rows = 0;
  std::size_t undersampled_rows = 0;
  metrics::MetricBlock metrics;
  metrics::RocCurve roc;
  std::vector<std::string> test_patients;
  std::vector<int> test_labels;
  std::vector<double> test_probabilities;
  std::optional<explain::ShapMatrix> shap;
};

struct FoldOutcome {
  FoldReport report;
  EnsembleMember member;
  preprocess::FittedPreprocessor outer_preprocessor;  // over `retained`
};

struct NestedCvResult {
  models::ModelKind kind = models::ModelKind::RandomForest;
  std::vector<FoldReport> folds;
  std::vector<EnsembleMember> members;
  metrics::MeanRoc mean_roc;
};

// One outer fold, end to end. Outer-test rows influence nothing but the
// reported predictions.
FoldOutcome run_outer_fold(const Matrix& X, std::span<const int> y,
                           std::span<const std::string> patient_ids,
                           std::span<const std::string> feature_names, const Split& split,
                           std::size_t fold_index, models::ModelKind kind, const Grid& grid,
                           const CvPlan& plan, const NestedCvOptions& options,
                           Exec exec = Exec::Parallel);

NestedCvResult nested_cv(const Matrix& X, std::span<const int> y,
                         std::span<const std::string> patient_ids,
                         std::span<const std::string> feature_names, models::ModelKind kind,
                         const Grid& grid, const CvPlan& plan, const NestedCvOptions& options = {},
                         Exec exec = Exec::Parallel);

// Baseline exam per patient; the cohort must carry labels.
NestedCvResult nested_cv(const cohort::Cohort& cohort, models::ModelKind kind, const Grid& grid,
                         const CvPlan& plan, const NestedCvOptions& options = {},
                         Exec exec = Exec::Parallel);

// --- ensemble -----------------------------------------------------------------
inline constexpr std::size_t kEnsembleSize = 5;

struct EnsembleModel {
  models::ModelKind kind = models::ModelKind::RandomForest;
  std::vector<std::string> feature_names;  // schema the members expect
  std::vector<EnsembleMember> members;
  std::optional<double> esc_threshold;     // upper-left point of the training ESC ROC
};

EnsembleModel build_ensemble(std::vector<EnsembleMember> members,
                             std::vector<std::string> feature_names);

double member_predict(const EnsembleMember& member, std::span<const double> values);
// Mean of member probabilities; each member imputes and scales with its own
// preprocessor.
double ensemble_predict(const EnsembleModel& ens, std::span<const double> values);
double ensemble_predict(const EnsembleModel& ens, const cohort::PatientExam& exam);

std::string to_json(const EnsembleModel& ens);
EnsembleModel ensemble_from_json(std::string_view text);

struct ExternalReport {
  std::vector<std::string> patient_ids;
  std::vector<int> labels;
  std::vector<double> probabilities;
  metrics::MetricBlock metrics;
  metrics::RocCurve roc;
};

// Scores every patient's baseline exam.
ExternalReport external_validate(const EnsembleModel& ens, const cohort::Cohort& external,
                                 double threshold = 0.5);

}  // namespace hcmrisk::pipeline
