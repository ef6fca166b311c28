#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "demark/nn/tensor.hpp"

namespace demark::nn {

double mean_absolute_error(std::span<const double> pred, std::span<const double> target);

/// a.b / (|a| |b|), clamped to [-1, 1]. Zero-norm input is a DegenerateInput error.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct LossGrad {
  double value = 0.0;
  Matrix grad;  ///< dLoss/dPred
};

/// Mean over every element of |pred - target|.
LossGrad mae_loss(const Matrix& pred, const Matrix& target);
LossGrad mae_loss(const Matrix& pred, double target);

struct CosineGrad {
  double value = 0.0;      ///< mean row-wise cosine
  Matrix grad_a;
  Matrix grad_b;
  std::vector<double> per_row;
};

/// Mean row-wise cosine similarity with `eps` added to each norm, so it stays
/// differentiable for all-zero rows.
CosineGrad cosine_loss(const Matrix& a, const Matrix& b, double eps = 1e-12);

/// Mean softmax cross-entropy against integer labels.
LossGrad softmax_cross_entropy(const Matrix& logits, std::span<const std::uint32_t> labels);

}  // namespace demark::nn
