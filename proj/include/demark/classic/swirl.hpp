#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "demark/core/flow.hpp"

namespace demark::classic {

struct SwirlConfig {
  double interval_ms = 2000.0;
  std::size_t subintervals = 20;
  std::size_t slots = 5;
  double packet_threshold = 0.5;  ///< fraction of mark packets in designated slots
  std::size_t pairs = 32;
  std::size_t mark_threshold = 12;
  std::uint64_t key = 1;          ///< shared secret for the slot pattern
  /// The detector re-synchronises by trying origins within +-sync_search_ms
  /// of the first observed packet; 0 disables the search.
  double sync_search_ms = 50.0;
  double sync_step_ms = 1.0;
};

void validate(const SwirlConfig& config);

/// Time the watermark occupies: pairs x (base + mark) intervals.
double swirl_extent_ms(const SwirlConfig& config);

/// Quantization bin of a base-interval centroid in [0, T).
std::size_t centroid_bin(double centroid_ms, const SwirlConfig& config);

/// Designated slot of subinterval `sub` in pair `pair` given the base bin.
std::size_t designated_slot(const SwirlConfig& config, std::size_t bin, std::size_t pair, std::size_t sub);

/// Delays mark-interval packets into their designated slots. Packets are only
/// delayed and the output stays sorted.
FlowTrace swirl_embed(const FlowTrace& trace, const SwirlConfig& config);

struct SwirlDetection {
  std::size_t matching_pairs = 0;
  bool detected = false;
  double origin_offset_ms = 0.0;  ///< offset that produced the best count
};

/// Counts pairs whose fraction of correctly slotted mark packets reaches the
/// packet threshold, maximised over the sync search.
SwirlDetection swirl_detect(const FlowTrace& trace, const SwirlConfig& config);

/// Matching pairs for one assumed origin.
std::size_t swirl_matching_pairs(const std::vector<double>& timestamps, double origin,
                                 const SwirlConfig& config);

}  // namespace demark::classic
