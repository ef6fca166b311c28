#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "demark/core/flow.hpp"

namespace demark::classic {

struct RainbowConfig {
  double amplitude = 10.0;  ///< ms
  double threshold = 0.54;  ///< normalized-correlation cutoff
  std::size_t window = 1200;
  std::uint64_t seed = 1;   ///< seeds the +-a watermark sequence
};

void validate(const RainbowConfig& config);

/// What the embedder shares with the non-blind detector.
struct RainbowRecord {
  std::string flow_id;
  std::vector<double> clean;  ///< first `window` IPDs before marking
  std::vector<double> w;      ///< +-amplitude per IPD
};

struct RainbowEmbedding {
  IpdSequence watermarked;  ///< same length as the input
  RainbowRecord record;
};

/// i.i.d. uniform +-amplitude sequence of length `window`.
std::vector<double> rainbow_sequence(const RainbowConfig& config);

/// out[i] = max(0, in[i] + w[i]) for i < window; the tail is untouched.
RainbowEmbedding rainbow_embed(std::span<const double> ipds, const RainbowConfig& config,
                               std::string flow_id = {});

struct RainbowDetection {
  double correlation = 0.0;
  bool detected = false;
};

/// cos(observed - clean, w) over the first `window` IPDs.
RainbowDetection rainbow_detect(std::span<const double> observed, const RainbowRecord& record,
                                const RainbowConfig& config);

/// CSV with header index,clean_ipd_ms,w_ms.
void save_rainbow_record(const std::filesystem::path& path, const RainbowRecord& record);
RainbowRecord load_rainbow_record(const std::filesystem::path& path, std::string flow_id = {});

}  // namespace demark::classic
