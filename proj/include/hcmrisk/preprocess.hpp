#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcmrisk/matrix.hpp"

namespace hcmrisk::preprocess {

class PreprocessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Column statistics learned from training rows only.
struct FittedPreprocessor {
  std::vector<double> medians;
  std::vector<double> means;
  std::vector<double> stds;  // population (1/n)
  std::size_t fitted_on = 0;

  std::size_t width() const { return medians.size(); }
  friend bool operator==(const FittedPreprocessor&, const FittedPreprocessor&) = default;
};

// Medians, means and stds of the non-missing entries of each column.
// `names` (optional) is used in error messages.
FittedPreprocessor fit_preprocessor(const Matrix& X, std::span<const std::string> names = {});

// Missing -> median, then (x - mean) / std. Zero-std columns map to 0.
Matrix transform(const FittedPreprocessor& pre, const Matrix& X);
std::vector<double> transform_row(const FittedPreprocessor& pre, std::span<const double> x);

// All minority rows plus an equal-size sample (without replacement) of the
// majority rows. Returned indices are sorted.
std::vector<std::size_t> undersample(std::span<const int> y, std::uint64_t seed);

struct DroppedFeature {
  std::size_t dropped;
  std::size_t kept;
  double r;
};

struct CorrelationFilterResult {
  std::vector<std::size_t> retained;  // ascending
  std::vector<DroppedFeature> dropped;
};

// Pearson r on pairwise-complete rows; constant columns have r = 0.
double pairwise_pearson(std::span<const double> a, std::span<const double> b);

// Greedy pruning of |r| > threshold. Features are visited by (missing count,
// column index); a feature is dropped when it exceeds the threshold against an
// already-retained one.
CorrelationFilterResult correlation_filter(const Matrix& X, double threshold = 0.75,
                                           std::span<const std::size_t> missing_counts = {});

std::vector<std::size_t> missing_counts(const Matrix& X);

}  // namespace hcmrisk::preprocess
