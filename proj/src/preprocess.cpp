#include "hcmrisk/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hcmrisk/rng.hpp"

namespace hcmrisk::preprocess {

namespace {

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

}  // namespace

FittedPreprocessor fit_preprocessor(const Matrix& X, std::span<const std::string> names) {
  FittedPreprocessor pre;
  const std::size_t p = X.cols();
  pre.medians.resize(p);
  pre.means.resize(p);
  pre.stds.resize(p);
  pre.fitted_on = X.rows();

  std::vector<double> col;
  for (std::size_t j = 0; j < p; ++j) {
    col.clear();
    for (std::size_t i = 0; i < X.rows(); ++i)
      if (!is_missing(X(i, j))) col.push_back(X(i, j));
    if (col.empty()) {
      std::string label = j < names.size() ? names[j] : "column " + std::to_string(j);
      throw PreprocessError("feature " + label + " has no observed values in the fitting rows");
    }
    double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    pre.means[j] = mean;
    pre.stds[j] = std::sqrt(ss / static_cast<double>(col.size()));
    pre.medians[j] = median_of(std::move(col));
    col = {};
  }
  return pre;
}

std::vector<double> transform_row(const FittedPreprocessor& pre, std::span<const double> x) {
  if (x.size() != pre.width())
    throw PreprocessError("row has " + std::to_string(x.size()) + " values, preprocessor expects " +
                          std::to_string(pre.width()));
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double v = is_missing(x[j]) ? pre.medians[j] : x[j];
    out[j] = pre.stds[j] > 0.0 ? (v - pre.means[j]) / pre.stds[j] : 0.0;
  }
  return out;
}

Matrix transform(const FittedPreprocessor& pre, const Matrix& X) {
  if (X.cols() != pre.width())
    throw PreprocessError("matrix has " + std::to_string(X.cols()) + " columns, preprocessor expects " +
                          std::to_string(pre.width()));
  Matrix out(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    auto t = transform_row(pre, X.row(i));
    std::copy(t.begin(), t.end(), out.row(i).begin());
  }
  return out;
}

std::vector<std::size_t> undersample(std::span<const int> y, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw PreprocessError("undersampling needs both classes");

  auto& minority = pos.size() <= neg.size() ? pos : neg;
  auto& majority = pos.size() <= neg.size() ? neg : pos;
  auto rng = make_rng(seed, {0x756e6465});
  std::shuffle(majority.begin(), majority.end(), rng);
  majority.resize(minority.size());

  std::vector<std::size_t> out;
  out.reserve(2 * minority.size());
  out.insert(out.end(), minority.begin(), minority.end());
  out.insert(out.end(), majority.begin(), majority.end());
  std::sort(out.begin(), out.end());
  return out;
}

double pairwise_pearson(std::span<const double> a, std::span<const double> b) {
  double sa = 0, sb = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (is_missing(a[i]) || is_missing(b[i])) continue;
    sa += a[i];
    sb += b[i];
    ++n;
  }
  if (n < 2) return 0.0;
  const double ma = sa / static_cast<double>(n), mb = sb / static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (is_missing(a[i]) || is_missing(b[i])) continue;
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<std::size_t> missing_counts(const Matrix& X) {
  std::vector<std::size_t> out(X.cols(), 0);
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j)
      if (is_missing(X(i, j))) ++out[j];
  return out;
}

CorrelationFilterResult correlation_filter(const Matrix& X, double threshold,
                                           std::span<const std::size_t> missing) {
  const std::size_t p = X.cols();
  std::vector<std::size_t> miss(missing.begin(), missing.end());
  if (miss.empty()) miss = missing_counts(X);
  if (miss.size() != p) throw PreprocessError("missing_counts length does not match column count");

  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&miss](std::size_t a, std::size_t b) { return miss[a] < miss[b]; });

  std::vector<std::vector<double>> cols(p);
  for (std::size_t j = 0; j < p; ++j) cols[j] = X.column(j);

  CorrelationFilterResult res;
  std::vector<std::size_t> kept;
  for (std::size_t j : order) {
    bool drop = false;
    for (std::size_t k : kept) {
      const double r = pairwise_pearson(cols[k], cols[j]);
      if (std::abs(r) > threshold) {
        res.dropped.push_back({j, k, r});
        drop = true;
        break;
      }
    }
    if (!drop) kept.push_back(j);
  }
  std::sort(kept.begin(), kept.end());
  res.retained = std::move(kept);
  std::sort(res.dropped.begin(), res.dropped.end(),
            [](const auto& a, const auto& b) { return a.dropped < b.dropped; });
  return res;
}

}  // namespace hcmrisk::preprocess
