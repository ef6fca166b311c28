#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "demark/nn/tensor.hpp"

namespace demark::nn {

enum class Activation : std::uint8_t { None = 0, Relu = 1, LeakyRelu = 2, Sigmoid = 3 };
enum class LayerKind : std::uint8_t { Dense = 0, Conv1d = 1 };

inline constexpr double kLeakySlope = 0.01;

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  /// Dense: output size. Conv1d: kernel count (output channels).
  std::size_t units = 1;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  Activation activation = Activation::None;

  static LayerSpec dense(std::size_t size, Activation act) {
    return {LayerKind::Dense, size, 1, 1, act};
  }
  static LayerSpec conv1d(std::size_t kernels, std::size_t kernel_size, std::size_t stride,
                          Activation act) {
    return {LayerKind::Conv1d, kernels, kernel_size, stride, act};
  }
  bool operator==(const LayerSpec&) const = default;
};

struct Layer {
  LayerSpec spec;
  std::size_t in_channels = 1;
  std::size_t in_length = 0;
  std::size_t out_channels = 1;
  std::size_t out_length = 0;
  /// Dense: in x out. Conv1d: (in_channels * kernel_size) x kernels.
  Matrix weight;
  RowVector bias;

  std::size_t input_size() const noexcept { return in_channels * in_length; }
  std::size_t output_size() const noexcept { return out_channels * out_length; }
};

/// Feed-forward stack of dense / conv1d layers. `input_scale` multiplies the
/// input before the first layer and `output_scale` the final activation; they
/// let models work in O(1) units while consuming and producing milliseconds.
class ModelGraph {
 public:
  ModelGraph() = default;
  ModelGraph(std::size_t input_dim, const std::vector<LayerSpec>& specs,
             std::uint64_t seed, double input_scale = 1.0, double output_scale = 1.0);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept {
    return layers_.empty() ? input_dim_ : layers_.back().output_size();
  }
  double input_scale() const noexcept { return input_scale_; }
  double output_scale() const noexcept { return output_scale_; }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  std::vector<LayerSpec> specs() const;
  std::size_t parameter_count() const;

  bool frozen() const noexcept { return frozen_; }
  void freeze() noexcept { frozen_ = true; }
  void unfreeze() noexcept { frozen_ = false; }

  bool same_weights(const ModelGraph& other) const;

  /// Rebuilds geometry from specs with zeroed parameters (used by the loader).
  static ModelGraph from_parts(std::size_t input_dim, const std::vector<LayerSpec>& specs,
                               double input_scale, double output_scale);

 private:
  std::size_t input_dim_ = 0;
  double input_scale_ = 1.0;
  double output_scale_ = 1.0;
  std::vector<Layer> layers_;
  bool frozen_ = false;
};

/// Intermediates retained by a training forward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;      ///< input to each layer (already scaled)
  std::vector<Matrix> patches;     ///< im2col per conv layer (empty for dense)
  std::vector<Matrix> preact;      ///< pre-activation per layer, output layout
  Matrix output;                   ///< final output after output_scale
  bool valid = false;
};

struct LayerGradient {
  Matrix weight;
  RowVector bias;
};

struct Gradients {
  std::vector<LayerGradient> layers;
  Matrix input;  ///< dLoss/dInput, same shape as the forward batch

  static Gradients zeros_like(const ModelGraph& model);
  void accumulate(const Gradients& other);
  void scale(double factor);
  double max_abs() const;
};

/// Inference on a batch (rows = samples).
Matrix forward(const ModelGraph& model, const Matrix& input);
Tensor forward(const ModelGraph& model, const Tensor& input);

/// Forward that fills `cache` for a subsequent backward.
Matrix forward(const ModelGraph& model, const Matrix& input, ForwardCache& cache);

/// Backpropagates `upstream` (dLoss/dOutput). When `need_params` is false only
/// the input gradient is computed (frozen models).
Gradients backward(const ModelGraph& model, const ForwardCache& cache, const Matrix& upstream,
                   bool need_params = true, bool need_input = true);

}  // namespace demark::nn
