#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hcmrisk {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Stratified k-fold: each class is shuffled and dealt round-robin, continuing
// the deal across classes, so per-fold class counts differ from proportional
// by less than one. Index lists are sorted.
std::vector<Split> stratified_folds(std::span<const int> y, std::size_t k, std::uint64_t seed);

}  // namespace hcmrisk
