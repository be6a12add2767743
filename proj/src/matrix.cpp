#include "hcmrisk/matrix.hpp"

namespace hcmrisk {

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::select(std::span<const std::size_t> row_idx,
                      std::span<const std::size_t> col_idx) const {
  Matrix out(row_idx.size(), col_idx.size());
  for (std::size_t i = 0; i < row_idx.size(); ++i) {
    const auto src = row(row_idx[i]);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < col_idx.size(); ++j) dst[j] = src[col_idx[j]];
  }
  return out;
}

Matrix Matrix::select_rows(std::span<const std::size_t> row_idx) const {
  Matrix out(row_idx.size(), cols_);
  for (std::size_t i = 0; i < row_idx.size(); ++i) {
    const auto src = row(row_idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix Matrix::select_cols(std::span<const std::size_t> col_idx) const {
  std::vector<std::size_t> all(rows_);
  for (std::size_t i = 0; i < rows_; ++i) all[i] = i;
  return select(all, col_idx);
}

}  // namespace hcmrisk
