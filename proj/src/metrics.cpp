#include "hcmrisk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace hcmrisk::metrics {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double chi2_sf(double x, double df) {
  if (!(x > 0.0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), x));
}

double student_t_sf(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>(df), t));
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw MetricsError("scores and labels differ in length");
  std::size_t P = 0, N = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(scores[i])) throw MetricsError("non-finite score");
    (labels[i] == 1 ? P : N) += 1;
  }
  if (P == 0 || N == 0) throw MetricsError("ROC needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  // Area accumulated in pair units (integers and halves), divided once.
  double area2 = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    std::size_t dtp = 0, dfp = 0;
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? dtp : dfp) += 1;
      ++i;
    }
    area2 += static_cast<double>(dfp) * static_cast<double>(2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(N),
                            static_cast<double>(tp) / static_cast<double>(P), s});
  }
  curve.auc = area2 / (2.0 * static_cast<double>(P) * static_cast<double>(N));
  return curve;
}

MetricBlock confusion_metrics(std::span<const double> probabilities, std::span<const int> labels,
                              double threshold) {
  if (probabilities.size() != labels.size())
    throw MetricsError("probabilities and labels differ in length");
  MetricBlock m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = probabilities[i] >= threshold;
    if (labels[i] == 1) (pred ? m.tp : m.fn) += 1;
    else (pred ? m.fp : m.tn) += 1;
  }
  auto ratio = [](std::size_t num, std::size_t den, bool& flag) {
    if (den == 0) {
      flag = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.sensitivity = ratio(m.tp, m.tp + m.fn, m.undefined_sensitivity);
  m.specificity = ratio(m.tn, m.tn + m.fp, m.undefined_specificity);
  bool unused = false;
  m.accuracy = ratio(m.tp + m.tn, labels.size(), unused);
  m.balanced_accuracy = (m.sensitivity + m.specificity) / 2.0;
  m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn, m.undefined_f1);
  if (m.tp + m.fn > 0 && m.tn + m.fp > 0) {
    m.auc = roc_auc(probabilities, labels).auc;
  } else {
    m.undefined_auc = true;
  }
  return m;
}

double interpolate_tpr(const RocCurve& curve, double fpr) {
  const auto& pts = curve.points;
  if (pts.empty()) throw MetricsError("empty ROC curve");
  // Last point with point.fpr <= fpr (highest TPR on a vertical run).
  std::size_t hi = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (pts[i].fpr <= fpr) hi = i;
  if (pts[hi].fpr == fpr || hi + 1 == pts.size()) return pts[hi].tpr;
  const auto& a = pts[hi];
  const auto& b = pts[hi + 1];
  const double w = (fpr - a.fpr) / (b.fpr - a.fpr);
  return a.tpr + w * (b.tpr - a.tpr);
}

MeanRoc mean_roc(std::span<const RocCurve> curves) {
  if (curves.empty()) throw MetricsError("mean_roc needs at least one curve");
  MeanRoc out;
  constexpr int kSteps = 100;
  std::vector<double> vals(curves.size());
  for (int g = 0; g <= kSteps; ++g) {
    const double f = static_cast<double>(g) / kSteps;
    for (std::size_t c = 0; c < curves.size(); ++c) vals[c] = interpolate_tpr(curves[c], f);
    out.fpr.push_back(f);
    out.mean_tpr.push_back(mean(vals));
    out.std_tpr.push_back(population_std(vals));
  }
  std::vector<double> aucs;
  for (const auto& c : curves) aucs.push_back(c.auc);
  out.auc_mean = mean(aucs);
  out.auc_std = population_std(aucs);
  return out;
}

double upper_left_threshold(const RocCurve& curve) {
  if (curve.points.empty()) throw MetricsError("empty ROC curve");
  constexpr double kTieEps = 1e-12;
  double best_d = std::numeric_limits<double>::infinity();
  double best_t = 0.0;
  for (const auto& p : curve.points) {
    const double d = (1.0 - p.tpr) * (1.0 - p.tpr) + p.fpr * p.fpr;
    if (d < best_d - kTieEps) {
      best_d = d;
      best_t = p.threshold;
    } else if (std::abs(d - best_d) <= kTieEps && p.threshold > best_t) {
      best_t = p.threshold;
    }
  }
  return best_t;
}

TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw MetricsError("Mann-Whitney needs two nonempty samples");
  const std::size_t na = a.size(), nb = b.size(), n = na + nb;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = midranks(pooled);
  double ra = 0.0;
  for (std::size_t i = 0; i < na; ++i) ra += ranks[i];
  TestResult res;
  const double nad = static_cast<double>(na), nbd = static_cast<double>(nb);
  res.statistic = ra - nad * (nad + 1.0) / 2.0;
  const double mu = nad * nbd / 2.0;

  if (na * nb <= 400) {
    res.exact = true;
    // Doubled midranks are integers. Enumerate the doubled rank sum of the
    // smaller sample; the two-sided p-value is symmetric in the roles.
    const bool a_small = na <= nb;
    const std::size_t m = a_small ? na : nb;
    std::vector<long> r2(n);
    long total = 0;
    long obs2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r2[i] = std::lround(2.0 * ranks[i]);
      total += r2[i];
      if ((i < na) == a_small) obs2 += r2[i];
    }
    // ways[k][s] = number of k-subsets of the processed items with doubled sum s.
    std::vector<std::vector<double>> ways(m + 1, std::vector<double>(total + 1, 0.0));
    ways[0][0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const long r = r2[i];
      for (std::size_t k = std::min(i + 1, m); k >= 1; --k)
        for (long s = total; s >= r; --s) ways[k][s] += ways[k - 1][s - r];
    }
    const long center = static_cast<long>(m) * static_cast<long>(n + 1);  // E[2S]
    const long obs_dev = std::labs(obs2 - center);
    double tail = 0.0, all = 0.0;
    for (long s = 0; s <= total; ++s) {
      const double w = ways[m][s];
      if (w == 0.0) continue;
      all += w;
      if (std::labs(s - center) >= obs_dev) tail += w;
    }
    res.p_value = std::min(1.0, tail / all);
    return res;
  }

  // Tie-corrected variance.
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double nd = static_cast<double>(n);
  const double var = nad * nbd / 12.0 * ((nd + 1.0) - tie_term / (nd * (nd - 1.0)));
  if (var <= 0.0) {
    res.degenerate = true;
    res.p_value = 1.0;
    return res;
  }
  const double dev = std::abs(res.statistic - mu) - 0.5;
  if (dev <= 0.0) {
    res.p_value = 1.0;
    return res;
  }
  res.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(dev / std::sqrt(var))));
  return res;
}

TestResult friedman_test(const Matrix& m) {
  const std::size_t N = m.rows(), k = m.cols();
  if (N < 2 || k < 2) throw MetricsError("Friedman test needs >= 2 subjects and >= 2 treatments");
  std::vector<double> rank_sum(k, 0.0);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const auto row = m.row(i);
    const auto r = midranks(row);
    for (std::size_t j = 0; j < k; ++j) rank_sum[j] += r[j];
    std::vector<double> sorted(row.begin(), row.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t a = 0; a < k;) {
      std::size_t b = a;
      while (b < k && sorted[b] == sorted[a]) ++b;
      const double t = static_cast<double>(b - a);
      tie_term += t * t * t - t;
      a = b;
    }
  }
  const double Nd = static_cast<double>(N), kd = static_cast<double>(k);
  double sum_sq = 0.0;
  for (double R : rank_sum) sum_sq += R * R;
  const double chi = 12.0 / (Nd * kd * (kd + 1.0)) * sum_sq - 3.0 * Nd * (kd + 1.0);
  const double correction = 1.0 - tie_term / (Nd * (kd * kd * kd - kd));
  TestResult res;
  if (correction <= 0.0) {
    res.degenerate = true;
    return res;
  }
  res.statistic = std::max(0.0, chi / correction);
  // Guard against rounding noise when every row is tied.
  if (res.statistic < 1e-12) res.statistic = 0.0;
  res.p_value = chi2_sf(res.statistic, kd - 1.0);
  return res;
}

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw MetricsError("Welch t-test needs n >= 2 per sample");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  auto sample_var = [](std::span<const double> v, double m) {
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
  };
  const double va = sample_var(a, ma) / na, vb = sample_var(b, mb) / nb;
  WelchResult r;
  const double se2 = va + vb;
  if (se2 <= 0.0) {
    if (ma == mb) return r;
    r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.df = na + nb - 2.0;
    r.p_value = 0.0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p_value = std::min(1.0, 2.0 * student_t_sf(std::abs(r.t), r.df));
  return r;
}

}  // namespace hcmrisk::metrics
