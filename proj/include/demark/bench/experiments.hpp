#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "demark/adversary/fingerprinting.hpp"
#include "demark/bench/report.hpp"
#include "demark/channel/channel.hpp"
#include "demark/classic/rainbow.hpp"
#include "demark/classic/swirl.hpp"
#include "demark/core/dataset.hpp"
#include "demark/defense/converter.hpp"

namespace demark::bench {

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t train_windows = 2000;
  std::size_t test_windows = 500;
  double validation_fraction = 0.1;  ///< of the train split, for early stopping
  std::vector<std::size_t> lengths{50, 100, 150, 200};
  std::size_t blackbox_n = 100;
  std::size_t m = 1024;
  std::size_t eval_samples = 2048;      ///< stratified (window, fingerprint) pairs
  std::size_t converter_samples = 8192;  ///< watermarked windows for GAN training
  channel::JitterConfig jitter{};
  channel::FlowSynthConfig synth{};
  adversary::AdversaryTrainConfig adversary{};
  adversary::AdversaryTrainConfig substitute{};
  defense::GanTrainConfig gan{};
  defense::RemapConfig remap{};
  classic::RainbowConfig rainbow{};
  std::vector<std::size_t> rainbow_lengths{100, 200, 400, 600, 800, 1000, 1200};
  std::size_t classic_flows = 500;  ///< watermarked flows per scheme
  std::size_t clean_flows = 1000;
  classic::SwirlConfig swirl{};
  std::size_t swirl_packets = 3500;
  std::size_t classic_n = 100;  ///< converter window used against RAINBOW/SWIRL
  std::size_t timing_iterations = 10000;
  std::filesystem::path model_dir;  ///< cache for trained models; empty disables
  bool verbose = false;

  ExperimentConfig();
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults; unknown keys are a Format error.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// D1 uses stream 1 and D2 stream 2 of the experiment seed.
Dataset make_dataset(const ExperimentConfig& config, std::size_t n, std::uint64_t stream);
std::string dataset_tag(const ExperimentConfig& config, std::size_t n, std::uint64_t stream);

/// Trains (or loads from model_dir) a fingerprinting pair on `data`'s train split.
adversary::FingerprintModelPair obtain_fingerprinting(const ExperimentConfig& config,
                                                      adversary::Architecture arch, const Dataset& data,
                                                      std::uint64_t stream);

/// Trains (or loads) a converter against `target`'s frozen decoder on windows
/// watermarked by `target` on `data`'s train split.
defense::DefenseModel obtain_converter(const ExperimentConfig& config,
                                       const adversary::FingerprintModelPair& target, const Dataset& data,
                                       const std::string& tag);

/// Watermarked windows: fingerprints ids[i] embedded into windows[i % size],
/// then channel jitter.
nn::Matrix watermark_through_channel(const adversary::FingerprintModelPair& pair,
                                     const std::vector<IpdSequence>& windows,
                                     std::span<const std::uint32_t> ids, const channel::JitterConfig& jitter,
                                     Rng& rng);

struct ExtractionEval {
  std::vector<std::uint32_t> truth;
  std::vector<std::uint32_t> extracted;
  double er = 0.0;
  double ber = 0.0;
};

/// Stratified evaluation: watermark, jitter, optionally defend and jitter
/// again, decode.
ExtractionEval evaluate_extraction(const ExperimentConfig& config, const adversary::FingerprintModelPair& adversary,
                                   const std::vector<IpdSequence>& windows, const defense::DefenseModel* defense,
                                   std::uint64_t seed);

ExperimentReport run_whitebox_experiment(const ExperimentConfig& config);
ExperimentReport run_blackbox_experiment(const ExperimentConfig& config);
/// RAINBOW length sweep and SWIRL TP/FP with and without the defense. Trains
/// the white-box converter for classic_n when `defense` is null.
ExperimentReport run_classic_experiments(const ExperimentConfig& config,
                                         const defense::DefenseModel* defense = nullptr);

/// convert+remap latency of one window, `iterations` timed calls.
TimingStats run_timing_benchmark(const defense::DefenseModel& model, std::size_t iterations, std::uint64_t seed);

/// Timing for every configured n with freshly initialised converters (weights
/// do not affect the cost).
ExperimentReport run_timing_sweep(const ExperimentConfig& config);

}  // namespace demark::bench
