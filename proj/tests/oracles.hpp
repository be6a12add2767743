#pragma once

// Brute-force reference implementations used only by the tests. Each one
// follows the textbook definition directly and shares no code with the
// library routine it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "hcmrisk/matrix.hpp"
#include "hcmrisk/models.hpp"
#include "hcmrisk/tree.hpp"

namespace oracle {

// AUC by counting concordant pairs, ties worth one half.
inline double auc_pairs(std::span<const double> s, std::span<const int> y) {
  long twice = 0, P = 0, N = 0;
  for (std::size_t i = 0; i < s.size(); ++i) (y[i] ? P : N) += 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      twice += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(P) * static_cast<double>(N));
}

// Two-sided exact Mann-Whitney p by enumerating every split of the pooled
// sample into groups of the observed sizes.
inline double mann_whitney_enumerated(std::span<const double> a, std::span<const double> b) {
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t n = pooled.size(), na = a.size();
  auto u_of = [&](const std::vector<bool>& in_a) {
    double u = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_a[i]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (in_a[j]) continue;
        u += pooled[i] > pooled[j] ? 1.0 : (pooled[i] == pooled[j] ? 0.5 : 0.0);
      }
    }
    return u;
  };
  const double mu = static_cast<double>(na) * static_cast<double>(b.size()) / 2.0;
  std::vector<bool> obs(n, false);
  std::fill(obs.begin(), obs.begin() + static_cast<long>(na), true);
  const double obs_dev = std::abs(u_of(obs) - mu);
  std::vector<bool> mask(n, false);
  std::fill(mask.begin(), mask.begin() + static_cast<long>(na), true);
  std::sort(mask.begin(), mask.end());
  long hit = 0, all = 0;
  do {
    std::vector<bool> in_a(mask.rbegin(), mask.rend());
    ++all;
    if (std::abs(u_of(in_a) - mu) >= obs_dev - 1e-12) ++hit;
  } while (std::next_permutation(mask.begin(), mask.end()));
  return static_cast<double>(hit) / static_cast<double>(all);
}

// Value of coalition `in_s` for one tree under the path-dependent rule: a
// split on a feature outside the coalition averages its children by cover.
inline double tree_value(const hcmrisk::models::DecisionTree& t, std::span<const double> x,
                         const std::vector<bool>& in_s, std::size_t node = 0) {
  const auto& nd = t.nodes()[node];
  if (nd.is_leaf()) return nd.value;
  const auto l = static_cast<std::size_t>(nd.left), r = static_cast<std::size_t>(nd.right);
  if (in_s[static_cast<std::size_t>(nd.feature)])
    return tree_value(t, x, in_s, x[nd.feature] <= nd.threshold ? l : r);
  const auto& nodes = t.nodes();
  return (nodes[l].cover * tree_value(t, x, in_s, l) + nodes[r].cover * tree_value(t, x, in_s, r)) / nd.cover;
}

// Shapley values of an arbitrary coalition game on M players by summing
// over all subsets.
inline std::vector<double> shapley_from_game(std::size_t M,
                                             const std::function<double(const std::vector<bool>&)>& v) {
  std::vector<double> value(std::size_t{1} << M);
  for (std::size_t mask = 0; mask < value.size(); ++mask) {
    std::vector<bool> s(M);
    for (std::size_t j = 0; j < M; ++j) s[j] = (mask >> j) & 1U;
    value[mask] = v(s);
  }
  std::vector<double> fact(M + 1, 1.0);
  for (std::size_t k = 1; k <= M; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  std::vector<double> phi(M, 0.0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t mask = 0; mask < value.size(); ++mask) {
      if ((mask >> i) & 1U) continue;
      const auto k = static_cast<std::size_t>(__builtin_popcountll(mask));
      phi[i] += fact[k] * fact[M - k - 1] / fact[M] * (value[mask | (std::size_t{1} << i)] - value[mask]);
    }
  return phi;
}

// Shapley values by averaging marginal contributions over all M! orders.
inline std::vector<double> shapley_by_orders(std::size_t M,
                                             const std::function<double(const std::vector<bool>&)>& v) {
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(M, 0.0);
  double count = 0;
  do {
    std::vector<bool> s(M, false);
    double prev = v(s);
    for (auto j : order) {
      s[j] = true;
      const double cur = v(s);
      phi[j] += cur - prev;
      prev = cur;
    }
    count += 1;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& p : phi) p /= count;
  return phi;
}

// Random tree with consistent covers (children sum to the parent).
inline hcmrisk::models::DecisionTree random_tree(std::size_t n_features, int max_depth, std::mt19937_64& rng) {
  using hcmrisk::models::TreeNode;
  std::vector<TreeNode> nodes;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::function<int(int, double)> build = [&](int depth, double cover) -> int {
    const int id = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[id].cover = cover;
    if (depth >= max_depth || cover < 2.0 || u(rng) < 0.2) {
      nodes[id].value = u(rng);
      return id;
    }
    nodes[id].feature = static_cast<int>(rng() % n_features);
    nodes[id].threshold = u(rng) * 2.0 - 1.0;
    const double left_cover = std::max(1.0, std::floor(cover * (0.2 + 0.6 * u(rng))));
    const int l = build(depth + 1, left_cover);
    const int r = build(depth + 1, cover - left_cover);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  };
  build(0, 64.0 + std::floor(u(rng) * 200.0));
  return hcmrisk::models::DecisionTree(std::move(nodes));
}

// Central finite-difference gradient.
inline std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                            std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace oracle
