#pragma once

#include <span>
#include <vector>

#include "demark/core/flow.hpp"
#include "demark/nn/tensor.hpp"

namespace demark::defense {

/// Which mean the clamp into [mu_min, mu_max] is computed on.
enum class MeanMode {
  PostScaling,  ///< mean of the scaled sequence; guarantees the bound
  PreScaling,   ///< mean of the raw sequence; off by (1 - s) * mean when s < 1
};

struct RemapConfig {
  double mu_min = 30.0;
  double mu_max = 60.0;
  double sigma = 20.0;
  MeanMode mean_mode = MeanMode::PostScaling;
};

void validate(const RemapConfig& config);

/// std values below this are treated as constant sequences (scale 1).
inline constexpr double kConstantStd = 1e-9;

/// Scale so the std is at most sigma, then shift so the mean lies in
/// [mu_min, mu_max]. No zero clamp.
std::vector<double> remap_unclamped(std::span<const double> raw, const RemapConfig& config);

/// remap_unclamped followed by an element clamp at 0.
IpdSequence remap(std::span<const double> raw, const RemapConfig& config);

/// Per-row intermediates for the batch backward.
struct RemapCache {
  nn::Matrix raw;
  nn::Matrix pre_clamp;
  std::vector<double> scale;   ///< s per row
  std::vector<double> mean;    ///< raw mean per row
  std::vector<double> sd;      ///< raw population std per row
  std::vector<bool> shifted;   ///< mean clamp bound for this row
};

/// Row-wise remap of a batch. Fills `cache` when non-null.
nn::Matrix remap_batch(const nn::Matrix& raw, const RemapConfig& config, RemapCache* cache = nullptr);

/// dLoss/draw given dLoss/dremap(raw), exact including the scale and shift
/// dependence on the row statistics.
nn::Matrix remap_backward(const RemapCache& cache, const RemapConfig& config,
                          const nn::Matrix& upstream);

}  // namespace demark::defense
