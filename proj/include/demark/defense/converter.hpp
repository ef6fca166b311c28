#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "demark/core/flow.hpp"
#include "demark/core/random.hpp"
#include "demark/defense/remap.hpp"
#include "demark/nn/model.hpp"

namespace demark::defense {

/// ms per unit on the converter and discriminator side.
inline constexpr double kIpdUnitMs = 50.0;

/// n -> 1024 -> 2048 -> 512 (LeakyReLU) -> n, linear head.
nn::ModelGraph make_converter(std::size_t n, std::uint64_t seed);
/// n -> 2048 (ReLU) -> 1 (sigmoid).
nn::ModelGraph make_discriminator(std::size_t n, std::uint64_t seed);

/// A trained converter plus the remap applied to its output.
struct DefenseModel {
  nn::ModelGraph converter;
  RemapConfig remap;
  std::string provenance;

  std::size_t n() const noexcept { return converter.input_dim(); }
};

/// Raw converter output for one window.
std::vector<double> convert(const nn::ModelGraph& converter, std::span<const double> x);
nn::Matrix convert_batch(const nn::ModelGraph& converter, const nn::Matrix& x);

/// remap(convert(x)).
IpdSequence defend_window(const nn::ModelGraph& converter, const RemapConfig& remap_config,
                          std::span<const double> x);
IpdSequence defend_window(const DefenseModel& model, std::span<const double> x);
nn::Matrix defend_batch(const DefenseModel& model, const nn::Matrix& x);

struct GanTrainConfig {
  double w1 = 1.0;  ///< weight of the discriminator realness penalty
  double w2 = 1.0;  ///< weight of the decoder cosine similarity
  std::size_t epochs = 20;
  std::size_t batch = 64;
  double lr_converter = 1e-3;
  double lr_discriminator = 1e-3;
  double real_location = 45.0;
  double real_scale = 14.142135623730951;
  std::uint64_t seed = 1;
  bool verbose = false;
};

void validate(const GanTrainConfig& config);

/// i.i.d. Laplace(location, scale) samples clamped at 0: the "real" target.
nn::Matrix sample_target(std::size_t rows, std::size_t n, double location, double scale, Rng& rng);

struct ConverterLoss {
  double value = 0.0;
  double realness = 0.0;  ///< MAE of D(y) against 1
  double cosine = 0.0;    ///< mean cos(decode(y), decode(x))
  nn::Gradients grads;    ///< w.r.t. the converter parameters
};

/// w1 * MAE(D(y), 1) + w2 * mean cos(decode(y), decode_x) with y = remap(C(x)).
/// The discriminator and decoder only pass gradient through.
ConverterLoss converter_loss(const nn::ModelGraph& converter, const RemapConfig& remap_config,
                             const nn::ModelGraph& discriminator, const nn::ModelGraph& decoder,
                             const nn::Matrix& x, const nn::Matrix& decode_x, double w1, double w2);

/// MAE(D(real), 1) + MAE(D(fake), 0) and its parameter gradient.
struct DiscriminatorLoss {
  double value = 0.0;
  nn::Gradients grads;
};
DiscriminatorLoss discriminator_loss(const nn::ModelGraph& discriminator, const nn::Matrix& real,
                                     const nn::Matrix& fake);

struct ConverterTrainResult {
  DefenseModel defense;
  nn::ModelGraph discriminator;
  std::vector<double> discriminator_curve;  ///< per epoch
  std::vector<double> realness_curve;
  std::vector<double> cosine_curve;
};

/// Alternating GAN training against a frozen decoder. `watermarked` holds
/// one watermarked window per row.
ConverterTrainResult train_converter(const nn::ModelGraph& decoder, const nn::Matrix& watermarked,
                                     const GanTrainConfig& gan, const RemapConfig& remap_config);

/// Fraction of correct real/fake calls (threshold 0.5) over an equal number of
/// target samples and defended windows.
double discriminator_accuracy(const nn::ModelGraph& discriminator, const DefenseModel& defense,
                              const nn::Matrix& x, const GanTrainConfig& gan, std::uint64_t seed);

/// Mean cosine between decoder outputs on defended and original windows.
double mean_decoder_cosine(const nn::ModelGraph& decoder, const DefenseModel& defense, const nn::Matrix& x);

/// <stem>.dmrk plus <stem>.json.
void save_defense(const DefenseModel& model, const std::filesystem::path& stem);
DefenseModel load_defense(const std::filesystem::path& stem);

}  // namespace demark::defense
