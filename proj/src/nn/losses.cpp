#include "demark/nn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "demark/core/error.hpp"

namespace demark::nn {

namespace {

void same_length(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorKind::LengthMismatch,
                "lengths differ: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

void same_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::Dimension, "loss operands have different shapes");
  }
}

}  // namespace

double mean_absolute_error(std::span<const double> pred, std::span<const double> target) {
  same_length(pred.size(), target.size());
  if (pred.empty()) throw Error(ErrorKind::DegenerateInput, "MAE of empty vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  same_length(a.size(), b.size());
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::DegenerateInput, "cosine of a zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

LossGrad mae_loss(const Matrix& pred, const Matrix& target) {
  same_shape(pred, target);
  const double count = static_cast<double>(pred.size());
  Matrix diff = pred - target;
  LossGrad out;
  out.value = diff.cwiseAbs().sum() / count;
  out.grad = diff.unaryExpr([count](double d) { return (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) / count; });
  return out;
}

LossGrad mae_loss(const Matrix& pred, double target) {
  return mae_loss(pred, Matrix::Constant(pred.rows(), pred.cols(), target));
}

CosineGrad cosine_loss(const Matrix& a, const Matrix& b, double eps) {
  same_shape(a, b);
  const Eigen::Index rows = a.rows();
  CosineGrad out;
  out.grad_a = Matrix::Zero(rows, a.cols());
  out.grad_b = Matrix::Zero(rows, a.cols());
  out.per_row.resize(static_cast<std::size_t>(rows));
  const double inv_rows = 1.0 / static_cast<double>(rows);
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto ra = a.row(r);
    const auto rb = b.row(r);
    const double dot = ra.dot(rb);
    const double la = ra.norm();
    const double lb = rb.norm();
    const double na = la + eps;
    const double nb = lb + eps;
    const double c = dot / (na * nb);
    out.per_row[static_cast<std::size_t>(r)] = c;
    total += c;
    // d c / d a = b / (na nb) - c * a / (|a| na), with a/|a| := 0 at a = 0.
    out.grad_a.row(r) = inv_rows * (rb / (na * nb));
    if (la > 0.0) out.grad_a.row(r) -= inv_rows * (c / (la * na)) * ra;
    out.grad_b.row(r) = inv_rows * (ra / (na * nb));
    if (lb > 0.0) out.grad_b.row(r) -= inv_rows * (c / (lb * nb)) * rb;
  }
  out.value = total * inv_rows;
  return out;
}

LossGrad softmax_cross_entropy(const Matrix& logits, std::span<const std::uint32_t> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw Error(ErrorKind::LengthMismatch, "one label per logit row required");
  }
  const Eigen::Index rows = logits.rows();
  LossGrad out;
  out.grad = Matrix(rows, logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto label = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)]);
    if (label >= logits.cols()) throw Error(ErrorKind::OutOfRange, "label outside logit range");
    const double peak = logits.row(r).maxCoeff();
    auto shifted = (logits.row(r).array() - peak).exp();
    const double z = shifted.sum();
    out.grad.row(r) = shifted / z;
    total += std::log(z) - (logits(r, label) - peak);
    out.grad(r, label) -= 1.0;
  }
  out.grad /= static_cast<double>(rows);
  out.value = total / static_cast<double>(rows);
  return out;
}

}  // namespace demark::nn
