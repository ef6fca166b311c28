#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "demark/core/flow.hpp"

namespace demark {

/// Windows with a train/test partition given as index lists into `windows`.
struct Dataset {
  std::vector<IpdSequence> windows;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::size_t window_length() const { return windows.empty() ? 0 : windows.front().size(); }
  std::vector<IpdSequence> train_windows() const;
  std::vector<IpdSequence> test_windows() const;
};

/// Shuffled split; the first round(train_fraction * size) indices go to train.
Dataset split_dataset(std::vector<IpdSequence> windows, double train_fraction,
                      std::uint64_t seed);

/// Windows every flow with `window_flow` and pools the windows.
std::vector<IpdSequence> windows_from_traces(const std::vector<FlowTrace>& traces,
                                             std::size_t n);

/// Manifest JSON: {"train": [...], "test": [...]}.
void save_manifest(const std::filesystem::path& path, const Dataset& dataset);
void load_manifest(const std::filesystem::path& path, Dataset& dataset);

}  // namespace demark
