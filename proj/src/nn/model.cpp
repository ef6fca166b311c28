#include "demark/nn/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "demark/core/error.hpp"
#include "demark/core/random.hpp"

namespace demark::nn {

namespace {

using Eigen::Index;

void check_spec(const LayerSpec& s) {
  if (s.units < 1) throw Error(ErrorKind::Dimension, "layer size must be >= 1");
  if (s.kind == LayerKind::Conv1d && (s.kernel_size < 1 || s.stride < 1)) {
    throw Error(ErrorKind::Dimension, "conv kernel size and stride must be >= 1");
  }
}

std::vector<Layer> build_layers(std::size_t input_dim, const std::vector<LayerSpec>& specs) {
  if (input_dim == 0) throw Error(ErrorKind::Dimension, "model input dimension must be >= 1");
  std::vector<Layer> layers;
  std::size_t channels = 1;
  std::size_t length = input_dim;
  for (const auto& spec : specs) {
    check_spec(spec);
    Layer layer;
    layer.spec = spec;
    if (spec.kind == LayerKind::Dense) {
      layer.in_channels = 1;
      layer.in_length = channels * length;
      layer.out_channels = 1;
      layer.out_length = spec.units;
      layer.weight = Matrix::Zero(static_cast<Index>(layer.in_length), static_cast<Index>(spec.units));
    } else {
      if (length < spec.kernel_size) {
        throw Error(ErrorKind::Dimension, "conv kernel " + std::to_string(spec.kernel_size) +
                                              " longer than input " + std::to_string(length));
      }
      layer.in_channels = channels;
      layer.in_length = length;
      layer.out_channels = spec.units;
      layer.out_length = (length - spec.kernel_size) / spec.stride + 1;
      layer.weight = Matrix::Zero(static_cast<Index>(channels * spec.kernel_size),
                                  static_cast<Index>(spec.units));
    }
    layer.bias = RowVector::Zero(static_cast<Index>(spec.units));
    channels = layer.out_channels;
    length = layer.out_length;
    layers.push_back(std::move(layer));
  }
  return layers;
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::None: return z;
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::LeakyRelu: return z > 0.0 ? z : kLeakySlope * z;
    case Activation::Sigmoid:
      if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
      return std::exp(z) / (1.0 + std::exp(z));
  }
  return z;
}

double activate_grad(Activation a, double z) {
  switch (a) {
    case Activation::None: return 1.0;
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::LeakyRelu: return z > 0.0 ? 1.0 : kLeakySlope;
    case Activation::Sigmoid: {
      const double s = activate(Activation::Sigmoid, z);
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

Matrix apply_activation(Activation a, const Matrix& z) {
  if (a == Activation::None) return z;
  if (a == Activation::Relu) return z.cwiseMax(0.0);
  if (a == Activation::LeakyRelu) return (z.array() > 0.0).select(z, kLeakySlope * z);
  return z.unaryExpr([a](double v) { return activate(a, v); });
}

// Rows (b, o) of the patch matrix hold input[b, c, o*stride + k] for all (c, k).
Matrix im2col(const Layer& layer, const Matrix& x) {
  const Index batch = x.rows();
  const Index lout = static_cast<Index>(layer.out_length);
  const Index lin = static_cast<Index>(layer.in_length);
  const Index k = static_cast<Index>(layer.spec.kernel_size);
  const Index stride = static_cast<Index>(layer.spec.stride);
  const Index cin = static_cast<Index>(layer.in_channels);
  Matrix patches(batch * lout, cin * k);
  for (Index b = 0; b < batch; ++b) {
    const double* row = x.row(b).data();
    for (Index o = 0; o < lout; ++o) {
      double* dst = patches.row(b * lout + o).data();
      for (Index c = 0; c < cin; ++c) {
        const double* src = row + c * lin + o * stride;
        std::copy(src, src + k, dst + c * k);
      }
    }
  }
  return patches;
}

// Inverse of im2col for gradients: scatter-add patch gradients onto the input.
Matrix col2im(const Layer& layer, const Matrix& dpatches, Index batch) {
  const Index lout = static_cast<Index>(layer.out_length);
  const Index lin = static_cast<Index>(layer.in_length);
  const Index k = static_cast<Index>(layer.spec.kernel_size);
  const Index stride = static_cast<Index>(layer.spec.stride);
  const Index cin = static_cast<Index>(layer.in_channels);
  Matrix dx = Matrix::Zero(batch, cin * lin);
  for (Index b = 0; b < batch; ++b) {
    double* row = dx.row(b).data();
    for (Index o = 0; o < lout; ++o) {
      const double* src = dpatches.row(b * lout + o).data();
      for (Index c = 0; c < cin; ++c) {
        double* dst = row + c * lin + o * stride;
        for (Index j = 0; j < k; ++j) dst[j] += src[c * k + j];
      }
    }
  }
  return dx;
}

// (batch*lout) x channels  <->  batch x (channels*lout), channel-major rows.
Matrix positions_to_rows(const Matrix& z, Index batch, Index lout, Index channels) {
  Matrix out(batch, channels * lout);
  for (Index b = 0; b < batch; ++b) {
    for (Index o = 0; o < lout; ++o) {
      const double* src = z.row(b * lout + o).data();
      for (Index c = 0; c < channels; ++c) out(b, c * lout + o) = src[c];
    }
  }
  return out;
}

Matrix rows_to_positions(const Matrix& y, Index batch, Index lout, Index channels) {
  Matrix out(batch * lout, channels);
  for (Index b = 0; b < batch; ++b) {
    for (Index o = 0; o < lout; ++o) {
      double* dst = out.row(b * lout + o).data();
      for (Index c = 0; c < channels; ++c) dst[c] = y(b, c * lout + o);
    }
  }
  return out;
}

Matrix layer_preactivation(const Layer& layer, const Matrix& x, Matrix* patches_out) {
  if (layer.spec.kind == LayerKind::Dense) {
    Matrix z(x.rows(), layer.weight.cols());
    z.noalias() = x * layer.weight;
    z.rowwise() += layer.bias;
    return z;
  }
  Matrix patches = im2col(layer, x);
  Matrix z = patches * layer.weight;
  z.rowwise() += layer.bias;
  Matrix out = positions_to_rows(z, x.rows(), static_cast<Index>(layer.out_length),
                                 static_cast<Index>(layer.out_channels));
  if (patches_out != nullptr) *patches_out = std::move(patches);
  return out;
}

void check_input(const ModelGraph& model, const Matrix& input) {
  if (static_cast<std::size_t>(input.cols()) != model.input_dim()) {
    throw Error(ErrorKind::Dimension, "input has " + std::to_string(input.cols()) +
                                          " features, model expects " +
                                          std::to_string(model.input_dim()));
  }
  require_finite(input, "model input");
}

}  // namespace

ModelGraph::ModelGraph(std::size_t input_dim, const std::vector<LayerSpec>& specs,
                       std::uint64_t seed, double input_scale, double output_scale)
    : input_dim_(input_dim),
      input_scale_(input_scale),
      output_scale_(output_scale),
      layers_(build_layers(input_dim, specs)) {
  Rng rng(seed);
  for (auto& layer : layers_) {
    const double fan_in = static_cast<double>(layer.weight.rows());
    const double fan_out = static_cast<double>(layer.spec.kind == LayerKind::Dense
                                                   ? layer.spec.units
                                                   : layer.spec.units * layer.spec.kernel_size);
    double bound = 0.0;
    switch (layer.spec.activation) {
      case Activation::Relu: bound = std::sqrt(6.0 / fan_in); break;
      case Activation::LeakyRelu:
        bound = std::sqrt(6.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in));
        break;
      case Activation::Sigmoid:
      case Activation::None: bound = std::sqrt(6.0 / (fan_in + fan_out)); break;
    }
    for (Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
  }
}

ModelGraph ModelGraph::from_parts(std::size_t input_dim, const std::vector<LayerSpec>& specs,
                                  double input_scale, double output_scale) {
  ModelGraph g;
  g.input_dim_ = input_dim;
  g.input_scale_ = input_scale;
  g.output_scale_ = output_scale;
  g.layers_ = build_layers(input_dim, specs);
  return g;
}

std::vector<LayerSpec> ModelGraph::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l.spec);
  return out;
}

std::size_t ModelGraph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool ModelGraph::same_weights(const ModelGraph& other) const {
  if (input_dim_ != other.input_dim_ || input_scale_ != other.input_scale_ ||
      output_scale_ != other.output_scale_ || layers_.size() != other.layers_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (!(a.spec == b.spec) || a.weight.rows() != b.weight.rows() ||
        a.weight.cols() != b.weight.cols() || a.bias.size() != b.bias.size()) {
      return false;
    }
    if (!std::equal(a.weight.data(), a.weight.data() + a.weight.size(), b.weight.data()) ||
        !std::equal(a.bias.data(), a.bias.data() + a.bias.size(), b.bias.data())) {
      return false;
    }
  }
  return true;
}

namespace {

Matrix forward_rows(const ModelGraph& model, const Matrix& input) {
  Matrix x = input * model.input_scale();
  for (const auto& layer : model.layers()) {
    x = apply_activation(layer.spec.activation, layer_preactivation(layer, x, nullptr));
  }
  x *= model.output_scale();
  return x;
}

// Rows are independent; blocking bounds the conv temporaries on large batches.
constexpr Index kForwardBlock = 512;

}  // namespace

Matrix forward(const ModelGraph& model, const Matrix& input) {
  check_input(model, input);
  if (input.rows() <= kForwardBlock) {
    Matrix x = forward_rows(model, input);
    require_finite(x, "model output");
    return x;
  }
  Matrix out(input.rows(), static_cast<Index>(model.output_dim()));
  for (Index r = 0; r < input.rows(); r += kForwardBlock) {
    const Index rows = std::min(kForwardBlock, input.rows() - r);
    out.middleRows(r, rows) = forward_rows(model, input.middleRows(r, rows));
  }
  require_finite(out, "model output");
  return out;
}

Tensor forward(const ModelGraph& model, const Tensor& input) {
  if (input.size() != model.input_dim()) {
    throw Error(ErrorKind::Dimension, "input has " + std::to_string(input.size()) +
                                          " values, model expects " +
                                          std::to_string(model.input_dim()));
  }
  Matrix out = forward(model, row_matrix(input.data()));
  return Tensor(row_vector(out, 0));
}

Matrix forward(const ModelGraph& model, const Matrix& input, ForwardCache& cache) {
  check_input(model, input);
  const auto& layers = model.layers();
  cache.inputs.assign(layers.size(), Matrix());
  cache.patches.assign(layers.size(), Matrix());
  cache.preact.assign(layers.size(), Matrix());
  cache.valid = false;
  Matrix x = input * model.input_scale();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    cache.preact[i] = layer_preactivation(layer, x, &cache.patches[i]);
    Matrix a = apply_activation(layer.spec.activation, cache.preact[i]);
    cache.inputs[i] = std::move(x);
    x = std::move(a);
  }
  x *= model.output_scale();
  require_finite(x, "model output");
  cache.output = x;
  cache.valid = true;
  return x;
}

Gradients backward(const ModelGraph& model, const ForwardCache& cache, const Matrix& upstream,
                   bool need_params, bool need_input) {
  const auto& layers = model.layers();
  if (!cache.valid || cache.preact.size() != layers.size()) {
    throw Error(ErrorKind::State, "backward called without a matching forward cache");
  }
  if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
    throw Error(ErrorKind::Dimension, "upstream gradient shape does not match model output");
  }
  Gradients grads;
  grads.layers.resize(layers.size());
  Matrix delta = upstream * model.output_scale();
  const Index batch = upstream.rows();
  for (std::size_t idx = layers.size(); idx-- > 0;) {
    const auto& layer = layers[idx];
    const Matrix& z = cache.preact[idx];
    const Activation act = layer.spec.activation;
    if (act != Activation::None) {
      if (act == Activation::Relu) {
        delta = (z.array() > 0.0).select(delta, 0.0);
      } else if (act == Activation::LeakyRelu) {
        delta = (z.array() > 0.0).select(delta, kLeakySlope * delta);
      } else {
        delta = delta.cwiseProduct(z.unaryExpr([act](double v) { return activate_grad(act, v); }));
      }
    }
    auto& g = grads.layers[idx];
    if (layer.spec.kind == LayerKind::Dense) {
      if (need_params) {
        g.weight.resize(layer.weight.rows(), layer.weight.cols());
        g.weight.noalias() = cache.inputs[idx].transpose() * delta;
        g.bias = delta.colwise().sum();
      }
      if (idx == 0 && !need_input) {
        delta.resize(batch, layer.weight.rows());
        delta.setZero();
      } else {
        Matrix next(batch, layer.weight.rows());
        next.noalias() = delta * layer.weight.transpose();
        delta.swap(next);
      }
    } else {
      const Index lout = static_cast<Index>(layer.out_length);
      Matrix dz = rows_to_positions(delta, batch, lout, static_cast<Index>(layer.out_channels));
      if (need_params) {
        g.weight = cache.patches[idx].transpose() * dz;
        g.bias = dz.colwise().sum();
      }
      Matrix dpatches = dz * layer.weight.transpose();
      delta = col2im(layer, dpatches, batch);
    }
    if (!need_params) {
      g.weight = Matrix();
      g.bias = RowVector();
    }
  }
  grads.input = delta * model.input_scale();
  return grads;
}

Gradients Gradients::zeros_like(const ModelGraph& model) {
  Gradients g;
  for (const auto& l : model.layers()) {
    g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()),
                        RowVector::Zero(l.bias.size())});
  }
  return g;
}

void Gradients::accumulate(const Gradients& other) {
  if (layers.size() != other.layers.size()) {
    throw Error(ErrorKind::Dimension, "gradient sets have different layer counts");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += other.layers[i].weight;
    layers[i].bias += other.layers[i].bias;
  }
}

void Gradients::scale(double factor) {
  for (auto& l : layers) {
    l.weight *= factor;
    l.bias *= factor;
  }
  input *= factor;
}

double Gradients::max_abs() const {
  double m = 0.0;
  for (const auto& l : layers) {
    if (l.weight.size() > 0) m = std::max(m, l.weight.cwiseAbs().maxCoeff());
    if (l.bias.size() > 0) m = std::max(m, l.bias.cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace demark::nn
