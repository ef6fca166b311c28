#include "demark/defense/converter.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "demark/channel/channel.hpp"
#include "demark/core/error.hpp"
#include "demark/nn/adam.hpp"
#include "demark/nn/losses.hpp"
#include "demark/nn/serialize.hpp"

namespace demark::defense {

using nn::Activation;
using nn::LayerSpec;
using nn::Matrix;

nn::ModelGraph make_converter(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw Error(ErrorKind::OutOfRange, "converter needs n >= 2");
  return nn::ModelGraph(n,
                        {LayerSpec::dense(1024, Activation::LeakyRelu),
                         LayerSpec::dense(2048, Activation::LeakyRelu),
                         LayerSpec::dense(512, Activation::LeakyRelu),
                         LayerSpec::dense(n, Activation::None)},
                        seed, 1.0 / kIpdUnitMs, kIpdUnitMs);
}

nn::ModelGraph make_discriminator(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::OutOfRange, "discriminator needs n >= 1");
  return nn::ModelGraph(n,
                        {LayerSpec::dense(2048, Activation::Relu),
                         LayerSpec::dense(1, Activation::Sigmoid)},
                        seed, 1.0 / kIpdUnitMs, 1.0);
}

std::vector<double> convert(const nn::ModelGraph& converter, std::span<const double> x) {
  if (x.size() != converter.input_dim()) {
    throw Error(ErrorKind::LengthMismatch, "converter expects " + std::to_string(converter.input_dim()) +
                                               " IPDs, got " + std::to_string(x.size()));
  }
  return nn::row_vector(nn::forward(converter, nn::row_matrix(x)), 0);
}

Matrix convert_batch(const nn::ModelGraph& converter, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != converter.input_dim()) {
    throw Error(ErrorKind::LengthMismatch, "converter input width mismatch");
  }
  return nn::forward(converter, x);
}

IpdSequence defend_window(const nn::ModelGraph& converter, const RemapConfig& remap_config,
                          std::span<const double> x) {
  return remap(convert(converter, x), remap_config);
}

IpdSequence defend_window(const DefenseModel& model, std::span<const double> x) {
  return defend_window(model.converter, model.remap, x);
}

Matrix defend_batch(const DefenseModel& model, const Matrix& x) {
  return remap_batch(convert_batch(model.converter, x), model.remap);
}

void validate(const GanTrainConfig& config) {
  if (!(config.w1 >= 0.0) || !(config.w2 >= 0.0) || (config.w1 == 0.0 && config.w2 == 0.0)) {
    throw Error(ErrorKind::OutOfRange, "loss weights must be >= 0 and not both 0");
  }
  if (config.batch == 0) throw Error(ErrorKind::OutOfRange, "batch must be >= 1");
  if (!(config.real_scale >= 0.0)) throw Error(ErrorKind::OutOfRange, "target scale must be >= 0");
}

Matrix sample_target(std::size_t rows, std::size_t n, double location, double scale, Rng& rng) {
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out.data()[i] = std::max(0.0, channel::sample_laplace(location, scale, rng));
  }
  return out;
}

ConverterLoss converter_loss(const nn::ModelGraph& converter, const RemapConfig& remap_config,
                             const nn::ModelGraph& discriminator, const nn::ModelGraph& decoder,
                             const Matrix& x, const Matrix& decode_x, double w1, double w2) {
  nn::ForwardCache conv_cache;
  nn::ForwardCache disc_cache;
  nn::ForwardCache dec_cache;
  RemapCache remap_cache;
  const Matrix raw = nn::forward(converter, x, conv_cache);
  const Matrix y = remap_batch(raw, remap_config, &remap_cache);

  const auto real = nn::mae_loss(nn::forward(discriminator, y, disc_cache), 1.0);
  const auto cos = nn::cosine_loss(nn::forward(decoder, y, dec_cache), decode_x);

  ConverterLoss out;
  out.realness = real.value;
  out.cosine = cos.value;
  out.value = w1 * real.value + w2 * cos.value;

  Matrix dy = Matrix::Zero(y.rows(), y.cols());
  if (w1 != 0.0) dy += w1 * nn::backward(discriminator, disc_cache, real.grad, false).input;
  if (w2 != 0.0) dy += w2 * nn::backward(decoder, dec_cache, cos.grad_a, false).input;
  out.grads = nn::backward(converter, conv_cache, remap_backward(remap_cache, remap_config, dy), true, false);
  return out;
}

DiscriminatorLoss discriminator_loss(const nn::ModelGraph& discriminator, const Matrix& real,
                                     const Matrix& fake) {
  nn::ForwardCache cache_real;
  nn::ForwardCache cache_fake;
  const auto lr = nn::mae_loss(nn::forward(discriminator, real, cache_real), 1.0);
  const auto lf = nn::mae_loss(nn::forward(discriminator, fake, cache_fake), 0.0);
  DiscriminatorLoss out;
  out.value = lr.value + lf.value;
  out.grads = nn::backward(discriminator, cache_real, lr.grad, true, false);
  out.grads.accumulate(nn::backward(discriminator, cache_fake, lf.grad, true, false));
  return out;
}

ConverterTrainResult train_converter(const nn::ModelGraph& decoder, const Matrix& watermarked,
                                     const GanTrainConfig& gan, const RemapConfig& remap_config) {
  if (!decoder.frozen()) throw Error(ErrorKind::Contract, "train_converter requires a frozen decoder");
  validate(gan);
  validate(remap_config);
  if (watermarked.rows() == 0) throw Error(ErrorKind::InsufficientLength, "no watermarked windows");
  if (static_cast<std::size_t>(watermarked.cols()) != decoder.input_dim()) {
    throw Error(ErrorKind::LengthMismatch, "window length differs from the decoder input");
  }
  const std::size_t n = decoder.input_dim();
  const auto rows = static_cast<std::size_t>(watermarked.rows());

  ConverterTrainResult res;
  res.defense.converter = make_converter(n, derive_seed(gan.seed, 1));
  res.defense.remap = remap_config;
  res.discriminator = make_discriminator(n, derive_seed(gan.seed, 2));
  nn::AdamState conv_opt(res.defense.converter, {gan.lr_converter});
  nn::AdamState disc_opt(res.discriminator, {gan.lr_discriminator});
  Rng rng(derive_seed(gan.seed, 3));

  // The decoder is frozen, so its view of each clean input never changes.
  const Matrix decode_all = nn::forward(decoder, watermarked);

  const auto batch = static_cast<Eigen::Index>(gan.batch);
  const std::size_t steps_per_epoch = std::max<std::size_t>(1, rows / gan.batch);
  Matrix x(batch, static_cast<Eigen::Index>(n));
  Matrix dx(batch, decode_all.cols());

  for (std::size_t epoch = 0; epoch < gan.epochs; ++epoch) {
    double d_sum = 0.0, r_sum = 0.0, c_sum = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      for (Eigen::Index b = 0; b < batch; ++b) {
        const auto idx = static_cast<Eigen::Index>(rng.below(rows));
        x.row(b) = watermarked.row(idx);
        dx.row(b) = decode_all.row(idx);
      }
      // (a) discriminator on target samples vs remapped converter output.
      const Matrix fake = defend_batch(res.defense, x);
      const Matrix real = sample_target(gan.batch, n, gan.real_location, gan.real_scale, rng);
      auto dl = discriminator_loss(res.discriminator, real, fake);
      // (b) converter against the updated discriminator and the decoder.
      disc_opt.apply(res.discriminator, dl.grads);
      auto cl = converter_loss(res.defense.converter, remap_config, res.discriminator, decoder, x, dx,
                               gan.w1, gan.w2);
      if (!std::isfinite(dl.value) || !std::isfinite(cl.value)) {
        throw Error(ErrorKind::Divergence, "non-finite GAN loss at epoch " + std::to_string(epoch));
      }
      conv_opt.apply(res.defense.converter, cl.grads);
      d_sum += dl.value;
      r_sum += cl.realness;
      c_sum += cl.cosine;
    }
    const auto k = static_cast<double>(steps_per_epoch);
    res.discriminator_curve.push_back(d_sum / k);
    res.realness_curve.push_back(r_sum / k);
    res.cosine_curve.push_back(c_sum / k);
    if (gan.verbose) {
      std::cerr << "[converter n=" << n << "] epoch " << epoch + 1 << " disc " << d_sum / k
                << " realness " << r_sum / k << " cosine " << c_sum / k << '\n';
    }
  }
  res.defense.converter.freeze();
  res.discriminator.freeze();
  return res;
}

double discriminator_accuracy(const nn::ModelGraph& discriminator, const DefenseModel& defense,
                              const Matrix& x, const GanTrainConfig& gan, std::uint64_t seed) {
  if (x.rows() == 0) throw Error(ErrorKind::InsufficientLength, "no windows");
  Rng rng(seed);
  const Matrix real = sample_target(static_cast<std::size_t>(x.rows()), defense.n(), gan.real_location,
                                    gan.real_scale, rng);
  const Matrix p_real = nn::forward(discriminator, real);
  const Matrix p_fake = nn::forward(discriminator, defend_batch(defense, x));
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    correct += p_real(r, 0) >= 0.5;
    correct += p_fake(r, 0) < 0.5;
  }
  return static_cast<double>(correct) / static_cast<double>(2 * x.rows());
}

double mean_decoder_cosine(const nn::ModelGraph& decoder, const DefenseModel& defense, const Matrix& x) {
  const Matrix a = nn::forward(decoder, defend_batch(defense, x));
  const Matrix b = nn::forward(decoder, x);
  return nn::cosine_loss(a, b).value;
}

void save_defense(const DefenseModel& model, const std::filesystem::path& stem) {
  const auto base = stem.string();
  nn::save_model(model.converter, base + ".dmrk");
  nlohmann::json j;
  j["n"] = model.n();
  j["mu_min"] = model.remap.mu_min;
  j["mu_max"] = model.remap.mu_max;
  j["sigma"] = model.remap.sigma;
  j["mean_mode"] = model.remap.mean_mode == MeanMode::PostScaling ? "post" : "pre";
  j["provenance"] = model.provenance;
  j["converter_checksum"] = nn::model_checksum(model.converter);
  std::ofstream out(base + ".json");
  if (!out) throw Error(ErrorKind::Io, "cannot write " + base + ".json");
  out << j.dump(2) << '\n';
}

DefenseModel load_defense(const std::filesystem::path& stem) {
  const auto base = stem.string();
  std::ifstream in(base + ".json");
  if (!in) throw Error(ErrorKind::Io, "cannot read " + base + ".json");
  DefenseModel model;
  std::size_t n = 0;
  try {
    nlohmann::json j;
    in >> j;
    n = j.at("n").get<std::size_t>();
    model.remap.mu_min = j.at("mu_min").get<double>();
    model.remap.mu_max = j.at("mu_max").get<double>();
    model.remap.sigma = j.at("sigma").get<double>();
    model.remap.mean_mode = j.value("mean_mode", "post") == "pre" ? MeanMode::PreScaling : MeanMode::PostScaling;
    model.provenance = j.value("provenance", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, base + ".json: " + e.what());
  }
  validate(model.remap);
  model.converter = nn::load_model(base + ".dmrk");
  if (model.converter.input_dim() != n || model.converter.output_dim() != n) {
    throw Error(ErrorKind::Format, "converter file does not match the sidecar n");
  }
  model.converter.freeze();
  return model;
}

}  // namespace demark::defense
