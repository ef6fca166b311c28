#include "demark/nn/adam.hpp"

#include <cmath>

#include "demark/core/error.hpp"

namespace demark::nn {

AdamState::AdamState(const ModelGraph& model, AdamConfig config) : config_(config) {
  for (const auto& l : model.layers()) {
    first_.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), RowVector::Zero(l.bias.size())});
    second_.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), RowVector::Zero(l.bias.size())});
  }
}

namespace {

template <typename P, typename G>
void update(P& param, const G& grad, G& m, G& v, const AdamConfig& c, double corr1, double corr2) {
  const double step = c.lr / corr1;
  const double inv2 = 1.0 / corr2;
  double* pp = param.data();
  double* mp = m.data();
  double* vp = v.data();
  const double* gp = grad.data();
  const Eigen::Index size = param.size();
  for (Eigen::Index i = 0; i < size; ++i) {
    mp[i] = c.beta1 * mp[i] + (1.0 - c.beta1) * gp[i];
    vp[i] = c.beta2 * vp[i] + (1.0 - c.beta2) * gp[i] * gp[i];
    pp[i] -= step * mp[i] / (std::sqrt(vp[i] * inv2) + c.epsilon);
  }
}

}  // namespace

void AdamState::apply(ModelGraph& model, const Gradients& grads) {
  if (model.frozen()) throw Error(ErrorKind::Contract, "cannot update a frozen model");
  auto& layers = model.layers();
  if (grads.layers.size() != layers.size() || first_.size() != layers.size()) {
    throw Error(ErrorKind::Dimension, "optimizer state does not match the model");
  }
  ++step_;
  const double corr1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double corr2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& g = grads.layers[i];
    if (g.weight.rows() != layers[i].weight.rows() || g.weight.cols() != layers[i].weight.cols() ||
        g.bias.size() != layers[i].bias.size()) {
      throw Error(ErrorKind::Dimension, "gradient shape mismatch at layer " + std::to_string(i));
    }
    update(layers[i].weight, g.weight, first_[i].weight, second_[i].weight, config_, corr1, corr2);
    update(layers[i].bias, g.bias, first_[i].bias, second_[i].bias, config_, corr1, corr2);
  }
}

}  // namespace demark::nn
