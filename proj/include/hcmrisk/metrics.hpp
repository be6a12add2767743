#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "hcmrisk/matrix.hpp"

namespace hcmrisk::metrics {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;  // predicted positive iff score >= threshold; +inf at (0,0)
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// One point per distinct score plus the (0,0) origin. The trapezoid area
// equals the Mann-Whitney statistic with ties counted as 1/2.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

struct MetricBlock {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  bool undefined_sensitivity = false;
  bool undefined_specificity = false;
  bool undefined_f1 = false;
  bool undefined_auc = false;
};

// Predicted positive iff probability >= threshold. Zero denominators give 0
// and set the matching flag.
MetricBlock confusion_metrics(std::span<const double> probabilities, std::span<const int> labels,
                              double threshold);

struct MeanRoc {
  std::vector<double> fpr;       // 0, 0.01, ..., 1
  std::vector<double> mean_tpr;
  std::vector<double> std_tpr;   // population
  double auc_mean = 0.0;
  double auc_std = 0.0;          // population
};

// TPR of a curve at `fpr` by linear interpolation; at a vertical segment the
// highest TPR is taken.
double interpolate_tpr(const RocCurve& curve, double fpr);

// Vertical averaging on a fixed FPR grid (step 0.01).
MeanRoc mean_roc(std::span<const RocCurve> curves);

// Threshold of the point closest to (0, 1); ties go to the higher threshold.
double upper_left_threshold(const RocCurve& curve);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool exact = false;
  bool degenerate = false;
};

// U of sample a (sum of a's midranks minus na(na+1)/2). Exact permutation
// distribution of the midrank sum when na*nb <= 400, otherwise the normal
// approximation with tie and continuity corrections.
TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b);

// Rows are subjects, columns treatments. Midranks within rows, tie-corrected
// chi-square with k-1 degrees of freedom.
TestResult friedman_test(const Matrix& m);

// Unequal-variance t statistic with Welch-Satterthwaite degrees of freedom.
struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};
WelchResult welch_t(std::span<const double> a, std::span<const double> b);

// Distribution tails used by the tests above.
double normal_cdf(double z);
double normal_quantile(double p);
double chi2_sf(double x, double df);
double student_t_sf(double t, double df);

// Midranks (1-based) of values.
std::vector<double> midranks(std::span<const double> values);

double mean(std::span<const double> v);
double population_std(std::span<const double> v);

}  // namespace hcmrisk::metrics
