#include "demark/nn/tensor.hpp"

#include <functional>
#include <numeric>
#include <string>

#include "demark/core/error.hpp"

namespace demark::nn {

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  const std::size_t expected = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                                               std::multiplies<>());
  if (expected != data_.size()) {
    throw Error(ErrorKind::Dimension, "tensor data length " + std::to_string(data_.size()) +
                                          " does not match shape product " +
                                          std::to_string(expected));
  }
}

Tensor::Tensor(std::vector<double> data) : shape_{data.size()}, data_(std::move(data)) {}

void require_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) throw Error(ErrorKind::NonFinite, std::string("non-finite values in ") + where);
}

Matrix row_matrix(std::span<const double> values) {
  Matrix m(1, static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = values[i];
  return m;
}

Matrix stack_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Matrix(0, 0);
  const auto cols = static_cast<Eigen::Index>(rows.front().size());
  Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != cols) {
      throw Error(ErrorKind::Dimension, "ragged rows in batch");
    }
    m.row(static_cast<Eigen::Index>(r)) =
        Eigen::Map<const RowVector>(rows[r].data(), cols);
  }
  return m;
}

std::vector<double> row_vector(const Matrix& m, Eigen::Index row) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  Eigen::Map<RowVector>(v.data(), m.cols()) = m.row(row);
  return v;
}

}  // namespace demark::nn
