#include "demark/adversary/fingerprinting.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "demark/channel/channel.hpp"
#include "demark/core/error.hpp"
#include "demark/nn/adam.hpp"
#include "demark/nn/losses.hpp"
#include "demark/nn/serialize.hpp"

namespace demark::adversary {

using nn::Activation;
using nn::LayerSpec;
using nn::Matrix;

std::string_view to_string(Architecture arch) noexcept {
  return arch == Architecture::Finn ? "finn" : "substitute";
}

Architecture architecture_from_string(std::string_view name) {
  if (name == "finn") return Architecture::Finn;
  if (name == "substitute") return Architecture::Substitute;
  throw Error(ErrorKind::Format, "unknown architecture '" + std::string(name) + "'");
}

unsigned FingerprintModelPair::bits() const {
  return static_cast<unsigned>(std::countr_zero(m));
}

void FingerprintModelPair::freeze() {
  encoder.freeze();
  decoder.freeze();
}

namespace {

void check_sizes(std::size_t n, std::size_t m) {
  if (n < 1) throw Error(ErrorKind::OutOfRange, "window length n must be >= 1");
  if (m < 2 || !std::has_single_bit(m)) throw Error(ErrorKind::OutOfRange, "alphabet m must be a power of two");
}

}  // namespace

FingerprintModelPair make_finn_pair(std::size_t n, std::size_t m, std::uint64_t seed) {
  check_sizes(n, m);
  if (n < 19) throw Error(ErrorKind::OutOfRange, "the conv decoder needs n >= 19");
  FingerprintModelPair pair;
  pair.architecture = Architecture::Finn;
  pair.n = n;
  pair.m = m;
  pair.encoder = nn::ModelGraph(m,
                                {LayerSpec::dense(1000, Activation::Relu),
                                 LayerSpec::dense(2000, Activation::Relu),
                                 LayerSpec::dense(2000, Activation::Relu),
                                 LayerSpec::dense(500, Activation::Relu),
                                 // ReLU head: a watermarker can only delay packets.
                                 LayerSpec::dense(n, Activation::Relu)},
                                derive_seed(seed, 1), 1.0, kDelayUnitMs);
  pair.decoder = nn::ModelGraph(n,
                                {LayerSpec::conv1d(50, 10, 1, Activation::Relu),
                                 LayerSpec::conv1d(10, 10, 1, Activation::Relu),
                                 LayerSpec::dense(128, Activation::Relu),
                                 LayerSpec::dense(m, Activation::None)},
                                derive_seed(seed, 2), 1.0 / kIpdUnitMs, 1.0);
  return pair;
}

FingerprintModelPair make_substitute_pair(std::size_t n, std::size_t m, std::uint64_t seed) {
  check_sizes(n, m);
  FingerprintModelPair pair;
  pair.architecture = Architecture::Substitute;
  pair.n = n;
  pair.m = m;
  pair.encoder = nn::ModelGraph(m,
                                {LayerSpec::dense(500, Activation::Relu),
                                 LayerSpec::dense(2000, Activation::Relu),
                                 LayerSpec::dense(n, Activation::Relu)},
                                derive_seed(seed, 1), 1.0, kDelayUnitMs);
  pair.decoder = nn::ModelGraph(n,
                                {LayerSpec::dense(1000, Activation::Relu),
                                 LayerSpec::dense(3000, Activation::Relu),
                                 LayerSpec::dense(m, Activation::None)},
                                derive_seed(seed, 2), 1.0 / kIpdUnitMs, 1.0);
  return pair;
}

FingerprintModelPair make_pair(Architecture arch, std::size_t n, std::size_t m, std::uint64_t seed) {
  return arch == Architecture::Finn ? make_finn_pair(n, m, seed) : make_substitute_pair(n, m, seed);
}

Matrix one_hot_batch(std::span<const std::uint32_t> ids, std::size_t m) {
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= m) throw Error(ErrorKind::OutOfRange, "fingerprint id " + std::to_string(ids[i]) + " >= m");
    x(static_cast<Eigen::Index>(i), ids[i]) = 1.0;
  }
  return x;
}

Matrix encode_batch(const nn::ModelGraph& encoder, std::span<const std::uint32_t> ids) {
  // The ReLU head already makes delays non-negative; the max() is kept for
  // hand-built encoders with a linear head.
  return nn::forward(encoder, one_hot_batch(ids, encoder.input_dim())).cwiseMax(0.0);
}

std::vector<double> encode_fingerprint(const nn::ModelGraph& encoder, const Fingerprint& fp) {
  if (fp.alphabet() != encoder.input_dim()) {
    throw Error(ErrorKind::OutOfRange, "fingerprint alphabet does not match the encoder input");
  }
  const std::uint32_t id = fp.id();
  return nn::row_vector(encode_batch(encoder, std::span(&id, 1)), 0);
}

IpdSequence embed(std::span<const double> ipds, std::span<const double> delays) {
  if (ipds.size() != delays.size()) {
    throw Error(ErrorKind::LengthMismatch, "IPD window has " + std::to_string(ipds.size()) +
                                               " values, delay vector " + std::to_string(delays.size()));
  }
  IpdSequence out(ipds.size());
  for (std::size_t i = 0; i < ipds.size(); ++i) out[i] = std::max(0.0, ipds[i] + delays[i]);
  return out;
}

std::vector<double> decode(const nn::ModelGraph& decoder, std::span<const double> ipds) {
  if (ipds.size() != decoder.input_dim()) {
    throw Error(ErrorKind::LengthMismatch, "decoder expects " + std::to_string(decoder.input_dim()) +
                                               " IPDs, got " + std::to_string(ipds.size()));
  }
  return nn::row_vector(nn::forward(decoder, nn::row_matrix(ipds)), 0);
}

Matrix decode_batch(const nn::ModelGraph& decoder, const Matrix& ipds) {
  if (static_cast<std::size_t>(ipds.cols()) != decoder.input_dim()) {
    throw Error(ErrorKind::LengthMismatch, "decoder input width mismatch");
  }
  return nn::forward(decoder, ipds);
}

Fingerprint extract(std::span<const double> logits) {
  if (logits.size() < 2 || !std::has_single_bit(logits.size())) {
    throw Error(ErrorKind::Dimension, "logit count must be a power of two");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return Fingerprint(static_cast<std::uint32_t>(best),
                     static_cast<unsigned>(std::countr_zero(logits.size())));
}

std::vector<std::uint32_t> extract_batch(const Matrix& logits) {
  std::vector<std::uint32_t> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(best);
  }
  return out;
}

Matrix watermark_windows(const nn::ModelGraph& encoder, const std::vector<IpdSequence>& windows,
                         std::span<const std::uint32_t> ids, double noise_scale, Rng& rng) {
  if (windows.empty()) throw Error(ErrorKind::InsufficientLength, "no windows to watermark");
  const Matrix delays = encode_batch(encoder, ids);
  Matrix out(delays.rows(), delays.cols());
  for (Eigen::Index r = 0; r < delays.rows(); ++r) {
    const auto& w = windows[static_cast<std::size_t>(r) % windows.size()];
    if (static_cast<Eigen::Index>(w.size()) != delays.cols()) {
      throw Error(ErrorKind::LengthMismatch, "window length differs from encoder output");
    }
    for (Eigen::Index c = 0; c < delays.cols(); ++c) {
      const double marked = std::max(0.0, w[static_cast<std::size_t>(c)] + delays(r, c));
      out(r, c) = std::max(0.0, marked + channel::sample_laplace(0.0, noise_scale, rng));
    }
  }
  return out;
}

std::vector<std::uint32_t> stratified_ids(std::size_t count, std::size_t m) {
  std::vector<std::uint32_t> ids(count);
  for (std::size_t i = 0; i < count; ++i) ids[i] = static_cast<std::uint32_t>(i % m);
  return ids;
}

ExtractionResult evaluate_extraction(const FingerprintModelPair& pair,
                                     const std::vector<IpdSequence>& windows, std::size_t samples,
                                     std::uint64_t seed) {
  ExtractionResult res;
  res.truth = stratified_ids(samples, pair.m);
  Rng rng(seed);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < samples; start += kChunk) {
    const std::size_t len = std::min(kChunk, samples - start);
    std::span<const std::uint32_t> ids(res.truth.data() + start, len);
    // Rotate the window assignment so chunk boundaries do not realign ids and windows.
    std::vector<IpdSequence> rotated;
    rotated.reserve(len);
    for (std::size_t i = 0; i < len; ++i) rotated.push_back(windows[(start + i) % windows.size()]);
    const Matrix x = watermark_windows(pair.encoder, rotated, ids, pair.noise_scale, rng);
    auto got = extract_batch(decode_batch(pair.decoder, x));
    res.extracted.insert(res.extracted.end(), got.begin(), got.end());
  }
  res.mean_delay_ms = mean_added_delay(pair.encoder, pair.m);
  return res;
}

double mean_added_delay(const nn::ModelGraph& encoder, std::size_t m) {
  const auto ids = stratified_ids(m, m);
  return encode_batch(encoder, ids).mean();
}

FingerprintModelPair train_fingerprinting(const std::vector<IpdSequence>& train,
                                          const std::vector<IpdSequence>& validation,
                                          const AdversaryTrainConfig& config, Architecture arch) {
  if (train.empty()) throw Error(ErrorKind::InsufficientLength, "empty training set");
  for (const auto& w : train) {
    if (w.size() != config.n) throw Error(ErrorKind::LengthMismatch, "training window length differs from n");
  }
  if (!(config.noise_scale >= 0.0)) throw Error(ErrorKind::OutOfRange, "noise scale must be >= 0");
  if (config.batch == 0) throw Error(ErrorKind::OutOfRange, "batch must be >= 1");

  FingerprintModelPair pair = make_pair(arch, config.n, config.m, config.seed);
  pair.noise_scale = config.noise_scale;
  nn::AdamState enc_opt(pair.encoder, {config.learning_rate});
  nn::AdamState dec_opt(pair.decoder, {config.learning_rate});
  Rng rng(derive_seed(config.seed, 3));

  const auto n = static_cast<Eigen::Index>(config.n);
  const auto batch = static_cast<Eigen::Index>(config.batch);
  const std::size_t steps_per_epoch = std::max<std::size_t>(1, train.size() / config.batch);
  const auto& val = validation.empty() ? train : validation;

  std::vector<std::uint32_t> ids(config.batch);
  Matrix cover(batch, n);
  Matrix pre_noise(batch, n);
  Matrix noisy(batch, n);
  nn::ForwardCache enc_cache;
  nn::ForwardCache dec_cache;
  double best_er = -1.0;
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      for (Eigen::Index b = 0; b < batch; ++b) {
        ids[static_cast<std::size_t>(b)] = static_cast<std::uint32_t>(rng.below(config.m));
        const auto& w = train[rng.below(train.size())];
        cover.row(b) = Eigen::Map<const nn::RowVector>(w.data(), n);
      }
      const Matrix delays = nn::forward(pair.encoder, one_hot_batch(ids, config.m), enc_cache);
      pre_noise = (cover + delays).cwiseMax(0.0);
      for (Eigen::Index i = 0; i < noisy.size(); ++i) {
        noisy.data()[i] = std::max(0.0, pre_noise.data()[i] +
                                            channel::sample_laplace(0.0, config.noise_scale, rng));
      }
      const Matrix logits = nn::forward(pair.decoder, noisy, dec_cache);
      const auto ce = nn::softmax_cross_entropy(logits, ids);
      if (!std::isfinite(ce.value)) {
        throw Error(ErrorKind::Divergence, "non-finite adversary loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += ce.value;
      auto dec_grads = nn::backward(pair.decoder, dec_cache, ce.grad);
      // Both clamps pass gradient only where they did not bind.
      Matrix g = dec_grads.input;
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        const bool open = noisy.data()[i] > 0.0 && (cover.data()[i] + delays.data()[i]) > 0.0;
        if (!open) g.data()[i] = 0.0;
      }
      auto enc_grads = nn::backward(pair.encoder, enc_cache, g, true, false);
      dec_opt.apply(pair.decoder, dec_grads);
      enc_opt.apply(pair.encoder, enc_grads);
    }
    pair.loss_curve.push_back(epoch_loss / static_cast<double>(steps_per_epoch));

    if ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs) {
      const auto res = evaluate_extraction(pair, val, config.validation_samples,
                                           derive_seed(config.seed, 1000 + epoch));
      std::size_t hits = 0;
      for (std::size_t i = 0; i < res.truth.size(); ++i) hits += res.truth[i] == res.extracted[i];
      const double er = static_cast<double>(hits) / static_cast<double>(res.truth.size());
      pair.validation_er.push_back(er);
      if (config.verbose) {
        std::cerr << "[" << to_string(arch) << " n=" << config.n << "] epoch " << epoch + 1
                  << " loss " << pair.loss_curve.back() << " val ER " << er << " mean delay "
                  << res.mean_delay_ms << " ms\n";
      }
      if (er >= config.target_er) break;
      if (er > best_er + config.min_improvement) {
        best_er = er;
        stale = 0;
      } else if (++stale >= config.patience && epoch + 1 >= config.min_epochs) {
        break;
      }
    }
  }
  pair.freeze();
  return pair;
}

void save_pair(const FingerprintModelPair& pair, const std::filesystem::path& stem) {
  const auto base = stem.string();
  nn::save_model(pair.encoder, base + ".encoder.dmrk");
  nn::save_model(pair.decoder, base + ".decoder.dmrk");
  nlohmann::json j;
  j["architecture"] = to_string(pair.architecture);
  j["n"] = pair.n;
  j["m"] = pair.m;
  j["noise_scale"] = pair.noise_scale;
  j["dataset"] = pair.dataset_tag;
  j["encoder_checksum"] = nn::model_checksum(pair.encoder);
  j["decoder_checksum"] = nn::model_checksum(pair.decoder);
  j["loss_curve"] = pair.loss_curve;
  j["validation_er"] = pair.validation_er;
  std::ofstream out(base + ".json");
  if (!out) throw Error(ErrorKind::Io, "cannot write " + base + ".json");
  out << j.dump(2) << '\n';
}

FingerprintModelPair load_pair(const std::filesystem::path& stem) {
  const auto base = stem.string();
  std::ifstream in(base + ".json");
  if (!in) throw Error(ErrorKind::Io, "cannot read " + base + ".json");
  FingerprintModelPair pair;
  try {
    nlohmann::json j;
    in >> j;
    pair.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    pair.n = j.at("n").get<std::size_t>();
    pair.m = j.at("m").get<std::size_t>();
    pair.noise_scale = j.at("noise_scale").get<double>();
    pair.dataset_tag = j.value("dataset", "");
    pair.loss_curve = j.value("loss_curve", std::vector<double>{});
    pair.validation_er = j.value("validation_er", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, base + ".json: " + e.what());
  }
  pair.encoder = nn::load_model(base + ".encoder.dmrk");
  pair.decoder = nn::load_model(base + ".decoder.dmrk");
  if (pair.encoder.input_dim() != pair.m || pair.encoder.output_dim() != pair.n ||
      pair.decoder.input_dim() != pair.n || pair.decoder.output_dim() != pair.m) {
    throw Error(ErrorKind::Format, "model files do not match the sidecar n/m");
  }
  pair.freeze();
  return pair;
}

}  // namespace demark::adversary
