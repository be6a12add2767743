#include "hcmrisk/tree.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace hcmrisk::models {

DecisionTree::DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) { validate(); }

std::size_t DecisionTree::leaf_index(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const auto& n = nodes_[i];
    i = static_cast<std::size_t>(x[n.feature] <= n.threshold ? n.left : n.right);
  }
  return i;
}

int DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int best = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (!nodes_[i].is_leaf()) {
      stack.emplace_back(nodes_[i].left, d + 1);
      stack.emplace_back(nodes_[i].right, d + 1);
    }
  }
  return best;
}

int DecisionTree::max_feature() const {
  int m = -1;
  for (const auto& n : nodes_) m = std::max(m, n.feature);
  return m;
}

void DecisionTree::validate() const {
  if (nodes_.empty()) throw std::logic_error("tree has no nodes");
  std::vector<int> parents(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (n.is_leaf()) continue;
    for (int c : {n.left, n.right}) {
      if (c <= static_cast<int>(i) || c >= static_cast<int>(nodes_.size()))
        throw std::logic_error("tree child index out of range");
      ++parents[c];
    }
  }
  for (std::size_t i = 1; i < nodes_.size(); ++i)
    if (parents[i] != 1) throw std::logic_error("tree node without exactly one parent");
}

namespace {

struct Grower {
  const Matrix& X;
  std::span<const double> target;
  const TreeParams& params;
  Rng& rng;
  std::vector<TreeNode> nodes;
  std::vector<std::size_t> feature_pool;
  std::vector<std::pair<double, double>> buf;  // (x, target)

  double impurity_sum(double n, double s, double ss) const {
    // Gini uses 0/1 targets: n * 2p(1-p). Squared error: sum of squared deviations.
    if (params.criterion == SplitCriterion::Gini) {
      const double p = s / n;
      return n * 2.0 * p * (1.0 - p);
    }
    return ss - s * s / n;
  }

  int build(std::vector<std::size_t>& rows, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    const double n = static_cast<double>(rows.size());
    double s = 0.0, ss = 0.0, lo = target[rows[0]], hi = lo;
    for (auto r : rows) {
      const double t = target[r];
      s += t;
      ss += t * t;
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    nodes[id].cover = n;
    nodes[id].value = s / n;

    const bool pure = lo == hi;
    const bool depth_ok = params.max_depth < 0 || depth < params.max_depth;
    if (pure || !depth_ok || rows.size() < 2 * params.min_leaf) return id;

    const std::size_t p = X.cols();
    const std::size_t mtry = params.mtry == 0 ? p : std::min(params.mtry, p);
    std::vector<std::size_t> candidates;
    if (mtry == p) {
      candidates.resize(p);
      std::iota(candidates.begin(), candidates.end(), 0);
    } else {
      std::iota(feature_pool.begin(), feature_pool.end(), 0);
      for (std::size_t k = 0; k < mtry; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, p - 1);
        std::swap(feature_pool[k], feature_pool[pick(rng)]);
      }
      candidates.assign(feature_pool.begin(), feature_pool.begin() + mtry);
      std::sort(candidates.begin(), candidates.end());
    }

    const double parent = impurity_sum(n, s, ss);
    bool found = false;
    double best_gain = 0.0, best_thr = 0.0;
    std::size_t best_feature = 0;
    const std::size_t min_leaf = std::max<std::size_t>(1, params.min_leaf);

    for (std::size_t f : candidates) {
      buf.clear();
      for (auto r : rows) buf.emplace_back(X(r, f), target[r]);
      std::sort(buf.begin(), buf.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      if (buf.front().first == buf.back().first) continue;
      double ls = 0.0, lss = 0.0;
      for (std::size_t i = 0; i + 1 < buf.size(); ++i) {
        ls += buf[i].second;
        lss += buf[i].second * buf[i].second;
        const std::size_t nl = i + 1, nr = buf.size() - nl;
        if (buf[i].first == buf[i + 1].first) continue;
        if (nl < min_leaf) continue;
        if (nr < min_leaf) break;
        const double gain = parent - impurity_sum(static_cast<double>(nl), ls, lss) -
                            impurity_sum(static_cast<double>(nr), s - ls, ss - lss);
        if (!found || gain > best_gain) {
          found = true;
          best_gain = gain;
          best_feature = f;
          double mid = 0.5 * (buf[i].first + buf[i + 1].first);
          if (!(mid < buf[i + 1].first)) mid = buf[i].first;
          best_thr = mid;
        }
      }
    }
    if (!found) return id;

    std::vector<std::size_t> left, right;
    for (auto r : rows) (X(r, best_feature) <= best_thr ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    nodes[id].feature = static_cast<int>(best_feature);
    nodes[id].threshold = best_thr;
    const int l = build(left, depth + 1);
    nodes[id].left = l;
    const int r = build(right, depth + 1);
    nodes[id].right = r;
    return id;
  }
};

}  // namespace

DecisionTree grow_tree(const Matrix& X, std::span<const double> target,
                       std::span<const std::size_t> rows, const TreeParams& params, Rng& rng) {
  if (rows.empty()) throw std::invalid_argument("grow_tree needs at least one row");
  Grower g{X, target, params, rng, {}, std::vector<std::size_t>(X.cols()), {}};
  std::vector<std::size_t> work(rows.begin(), rows.end());
  g.build(work, 0);
  return DecisionTree(std::move(g.nodes));
}

DecisionTree grow_tree(const Matrix& X, std::span<const int> y, const TreeParams& params, Rng& rng) {
  std::vector<double> t(y.begin(), y.end());
  std::vector<std::size_t> rows(y.size());
  std::iota(rows.begin(), rows.end(), 0);
  return grow_tree(X, t, rows, params, rng);
}

}  // namespace hcmrisk::models
