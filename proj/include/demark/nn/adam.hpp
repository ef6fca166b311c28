#pragma once

#include <cstdint>
#include <vector>

#include "demark/nn/model.hpp"

namespace demark::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(const ModelGraph& model, AdamConfig config = {});

  const AdamConfig& config() const noexcept { return config_; }
  AdamConfig& config() noexcept { return config_; }
  std::uint64_t step() const noexcept { return step_; }

  /// One bias-corrected Adam update of every parameter of `model`.
  void apply(ModelGraph& model, const Gradients& grads);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<LayerGradient> first_;
  std::vector<LayerGradient> second_;
};

}  // namespace demark::nn
