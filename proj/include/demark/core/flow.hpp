#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace demark {

/// Inter-packet delays in milliseconds. Model windows are IpdSequences whose
/// length equals the configured window n.
using IpdSequence = std::vector<double>;

/// Packet arrival times (ms) of one unidirectional flow.
struct FlowTrace {
  std::string flow_id;
  std::vector<double> timestamps;

  std::size_t size() const noexcept { return timestamps.size(); }
  bool operator==(const FlowTrace&) const = default;
};

/// Throws MalformedTrace if timestamps decrease or are negative/non-finite.
void validate_trace(const FlowTrace& trace);

/// x[i] = t[i+1] - t[i]. Requires at least two non-decreasing timestamps.
IpdSequence ipds_from_timestamps(const FlowTrace& trace);
IpdSequence ipds_from_timestamps(std::span<const double> timestamps);

/// Running sum starting at `start`. Negative IPDs are a causality error.
FlowTrace timestamps_from_ipds(double start, std::span<const double> ipds,
                               std::string flow_id = {});

struct WindowedFlow {
  std::vector<IpdSequence> windows;
  std::size_t dropped = 0;  ///< trailing IPDs that did not fill a window
};

/// Non-overlapping consecutive windows of exactly n; the remainder is dropped.
WindowedFlow window_flow(std::span<const double> ipds, std::size_t n);

double mean(std::span<const double> values);
/// Population (divide-by-n) standard deviation.
double population_std(std::span<const double> values);

}  // namespace demark
