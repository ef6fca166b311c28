#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "demark/core/fingerprint.hpp"
#include "demark/core/flow.hpp"
#include "demark/core/random.hpp"
#include "demark/nn/model.hpp"

namespace demark::adversary {

enum class Architecture {
  Finn,        ///< the adversary: dense encoder, conv1d decoder
  Substitute,  ///< the defender's black-box stand-in, dense only
};

std::string_view to_string(Architecture arch) noexcept;
Architecture architecture_from_string(std::string_view name);

/// ms per unit of encoder output and decoder input; models work in O(1) units.
inline constexpr double kDelayUnitMs = 100.0;
inline constexpr double kIpdUnitMs = 50.0;

/// Encoder (one-hot m -> n delays) and decoder (n IPDs -> m logits).
struct FingerprintModelPair {
  Architecture architecture = Architecture::Finn;
  nn::ModelGraph encoder;
  nn::ModelGraph decoder;
  std::size_t n = 100;
  std::size_t m = 1024;
  double noise_scale = 10.0;
  std::string dataset_tag;  ///< provenance of the training windows
  std::vector<double> loss_curve;        ///< mean loss per epoch
  std::vector<double> validation_er;     ///< one entry per evaluation

  unsigned bits() const;
  void freeze();
};

/// Encoder hidden layers are 1000/2000/2000/500 (ReLU) with a length-n ReLU
/// head; the decoder is conv(50x10) -> conv(10x10) -> dense 128 -> m logits.
FingerprintModelPair make_finn_pair(std::size_t n, std::size_t m, std::uint64_t seed);
/// Encoder 500/2000 + head n; decoder 1000/3000 + head m.
FingerprintModelPair make_substitute_pair(std::size_t n, std::size_t m, std::uint64_t seed);
FingerprintModelPair make_pair(Architecture arch, std::size_t n, std::size_t m, std::uint64_t seed);

/// Length-n delay vector (ms, >= 0) for one fingerprint.
std::vector<double> encode_fingerprint(const nn::ModelGraph& encoder, const Fingerprint& fp);
/// Rows of delays for a batch of ids.
nn::Matrix encode_batch(const nn::ModelGraph& encoder, std::span<const std::uint32_t> ids);
nn::Matrix one_hot_batch(std::span<const std::uint32_t> ids, std::size_t m);

/// max(0, ipds + delays), element-wise.
IpdSequence embed(std::span<const double> ipds, std::span<const double> delays);

std::vector<double> decode(const nn::ModelGraph& decoder, std::span<const double> ipds);
nn::Matrix decode_batch(const nn::ModelGraph& decoder, const nn::Matrix& ipds);

/// Argmax with ties resolved toward the lowest index.
Fingerprint extract(std::span<const double> logits);
std::vector<std::uint32_t> extract_batch(const nn::Matrix& logits);

/// Embeds fingerprint ids[i] into windows[i % |windows|] and passes the result
/// through Laplace(0, noise_scale) jitter. Returns one row per id.
nn::Matrix watermark_windows(const nn::ModelGraph& encoder, const std::vector<IpdSequence>& windows,
                             std::span<const std::uint32_t> ids, double noise_scale, Rng& rng);

/// ids 0, 1, ..., m-1, 0, 1, ... of length `count`: every fingerprint equally
/// represented, so a decoder stuck on one output scores BER exactly 0.5.
std::vector<std::uint32_t> stratified_ids(std::size_t count, std::size_t m);

struct AdversaryTrainConfig {
  double noise_scale = 10.0;
  std::size_t epochs = 60;
  std::size_t batch = 64;
  double learning_rate = 3e-4;
  std::size_t n = 100;
  std::size_t m = 1024;
  std::uint64_t seed = 1;
  std::size_t eval_every = 2;       ///< epochs between validation evaluations
  std::size_t validation_samples = 1024;
  std::size_t patience = 5;         ///< evaluations without improvement
  std::size_t min_epochs = 30;      ///< no early stop before this; the loss sits at ln(m) for a while
  double min_improvement = 1e-3;
  double target_er = 1.0;           ///< stop as soon as validation ER reaches it
  bool verbose = false;
};

/// Joint encoder/decoder training: random fingerprints are embedded into
/// random training windows, Laplace noise is added and the decoder minimises
/// cross-entropy against the fingerprint id. Validation windows drive early
/// stopping only.
FingerprintModelPair train_fingerprinting(const std::vector<IpdSequence>& train,
                                          const std::vector<IpdSequence>& validation,
                                          const AdversaryTrainConfig& config,
                                          Architecture arch = Architecture::Finn);

struct ExtractionResult {
  std::vector<std::uint32_t> truth;
  std::vector<std::uint32_t> extracted;
  double mean_delay_ms = 0.0;
};

/// Undefended extraction over stratified ids on the given windows.
ExtractionResult evaluate_extraction(const FingerprintModelPair& pair,
                                     const std::vector<IpdSequence>& windows, std::size_t samples,
                                     std::uint64_t seed);

/// Mean delay the encoder adds over every fingerprint.
double mean_added_delay(const nn::ModelGraph& encoder, std::size_t m);

/// Writes <stem>.encoder.dmrk, <stem>.decoder.dmrk and <stem>.json.
void save_pair(const FingerprintModelPair& pair, const std::filesystem::path& stem);
FingerprintModelPair load_pair(const std::filesystem::path& stem);

}  // namespace demark::adversary
