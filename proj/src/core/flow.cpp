#include "demark/core/flow.hpp"

#include <cmath>
#include <numeric>

#include "demark/core/error.hpp"

namespace demark {

void validate_trace(const FlowTrace& trace) {
  const auto& ts = trace.timestamps;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (!std::isfinite(ts[i]) || ts[i] < 0.0) {
      throw Error(ErrorKind::MalformedTrace,
                  "flow '" + trace.flow_id + "' has invalid timestamp at index " +
                      std::to_string(i));
    }
    if (i > 0 && ts[i] < ts[i - 1]) {
      throw Error(ErrorKind::MalformedTrace, "flow '" + trace.flow_id +
                                                 "' timestamps decrease at index " +
                                                 std::to_string(i));
    }
  }
}

IpdSequence ipds_from_timestamps(std::span<const double> t) {
  if (t.size() < 2) {
    throw Error(ErrorKind::DegenerateTrace,
                "need at least 2 timestamps, got " + std::to_string(t.size()));
  }
  IpdSequence out(t.size() - 1);
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    if (t[i + 1] < t[i]) {
      throw Error(ErrorKind::MalformedTrace,
                  "timestamps decrease at index " + std::to_string(i + 1));
    }
    out[i] = t[i + 1] - t[i];
  }
  return out;
}

IpdSequence ipds_from_timestamps(const FlowTrace& trace) {
  return ipds_from_timestamps(std::span<const double>(trace.timestamps));
}

FlowTrace timestamps_from_ipds(double start, std::span<const double> ipds,
                               std::string flow_id) {
  FlowTrace trace{std::move(flow_id), {}};
  trace.timestamps.reserve(ipds.size() + 1);
  trace.timestamps.push_back(start);
  double t = start;
  for (std::size_t i = 0; i < ipds.size(); ++i) {
    if (!(ipds[i] >= 0.0)) {
      throw Error(ErrorKind::Causality, "negative or NaN IPD at index " + std::to_string(i));
    }
    t += ipds[i];
    trace.timestamps.push_back(t);
  }
  return trace;
}

WindowedFlow window_flow(std::span<const double> ipds, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::OutOfRange, "window length must be >= 1");
  WindowedFlow out;
  const std::size_t count = ipds.size() / n;
  out.windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    auto chunk = ipds.subspan(w * n, n);
    out.windows.emplace_back(chunk.begin(), chunk.end());
  }
  out.dropped = ipds.size() - count * n;
  return out;
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double m = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size()));
}

}  // namespace demark
