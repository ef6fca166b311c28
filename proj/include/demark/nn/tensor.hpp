#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace demark::nn {

/// Batch-major activations: one sample per row. Conv layers store each row
/// channel-major (channel c, position i at column c * length + i).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Shape-tagged value container for single-sample I/O.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);
  explicit Tensor(std::vector<double> data);  // 1-D

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::vector<double> to_vector() const { return data_; }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Throws NonFinite if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* where);

Matrix row_matrix(std::span<const double> values);
Matrix stack_rows(const std::vector<std::vector<double>>& rows);
std::vector<double> row_vector(const Matrix& m, Eigen::Index row);

}  // namespace demark::nn
