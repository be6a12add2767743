#include "hcmrisk/folds.hpp"

#include <algorithm>
#include <stdexcept>

#include "hcmrisk/rng.hpp"

namespace hcmrisk {

std::vector<Split> stratified_folds(std::span<const int> y, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("need at least 2 folds");
  if (y.size() < k) throw std::invalid_argument("fewer rows than folds");
  std::vector<std::vector<std::size_t>> by_class(2);
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i] == 1 ? 1 : 0].push_back(i);

  auto rng = make_rng(seed, {0x666f6c64});
  std::vector<std::size_t> fold_of(y.size());
  std::size_t next = 0;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (auto i : members) {
      fold_of[i] = next;
      next = (next + 1) % k;
    }
  }
  std::vector<Split> out(k);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t f = 0; f < k; ++f) (fold_of[i] == f ? out[f].test : out[f].train).push_back(i);
  return out;
}

}  // namespace hcmrisk
