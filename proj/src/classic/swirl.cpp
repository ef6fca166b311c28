#include "demark/classic/swirl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "demark/core/error.hpp"
#include "demark/core/random.hpp"

namespace demark::classic {

void validate(const SwirlConfig& config) {
  if (!(config.interval_ms > 0.0)) throw Error(ErrorKind::OutOfRange, "SWIRL interval must be > 0");
  if (config.subintervals < 1 || config.slots < 1 || config.pairs < 1 || config.mark_threshold < 1) {
    throw Error(ErrorKind::OutOfRange, "SWIRL counts must be >= 1");
  }
  if (config.mark_threshold > config.pairs) {
    throw Error(ErrorKind::OutOfRange, "SWIRL mark threshold exceeds the interval pairs");
  }
  if (!(config.packet_threshold > 0.0 && config.packet_threshold <= 1.0)) {
    throw Error(ErrorKind::OutOfRange, "SWIRL packet threshold must lie in (0, 1]");
  }
  if (!(config.sync_search_ms >= 0.0) || (config.sync_search_ms > 0.0 && !(config.sync_step_ms > 0.0))) {
    throw Error(ErrorKind::OutOfRange, "SWIRL sync search needs a positive step");
  }
}

double swirl_extent_ms(const SwirlConfig& config) {
  return 2.0 * static_cast<double>(config.pairs) * config.interval_ms;
}

std::size_t centroid_bin(double centroid_ms, const SwirlConfig& config) {
  const double q = std::floor(centroid_ms / config.interval_ms * static_cast<double>(config.slots));
  if (!(q > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(q), config.slots - 1);
}

std::size_t designated_slot(const SwirlConfig& config, std::size_t bin, std::size_t pair, std::size_t sub) {
  std::uint64_t h = splitmix64(config.key);
  h = splitmix64(h ^ bin);
  h = splitmix64(h ^ (static_cast<std::uint64_t>(pair) << 20));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(sub) << 40));
  return static_cast<std::size_t>(h % config.slots);
}

namespace {

struct Geometry {
  double origin;
  double T;
  double sub_w;
  double slot_w;
  std::size_t subs;

  explicit Geometry(double o, const SwirlConfig& c)
      : origin(o),
        T(c.interval_ms),
        sub_w(c.interval_ms / static_cast<double>(c.subintervals)),
        slot_w(c.interval_ms / static_cast<double>(c.subintervals * c.slots)),
        subs(c.subintervals) {}

  double interval_start(long long k) const { return origin + static_cast<double>(k) * T; }

  /// Interval index (even = base, odd = mark) of time t; -1 before the origin.
  long long interval(double t) const {
    const double k = std::floor((t - origin) / T);
    return k < 0.0 ? -1 : static_cast<long long>(k);
  }

  std::size_t subinterval(double t, long long k) const {
    const double s = std::floor((t - interval_start(k)) / sub_w);
    if (!(s > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(s), subs - 1);
  }

  double slot_start(long long k, std::size_t sub, std::size_t slot) const {
    return interval_start(k) + static_cast<double>(sub) * sub_w + static_cast<double>(slot) * slot_w;
  }

  bool in_slot(double t, long long k, std::size_t sub, std::size_t slot) const {
    const double s0 = slot_start(k, sub, slot);
    return t >= s0 && t < s0 + slot_w;
  }
};

void check_span(const FlowTrace& trace, const SwirlConfig& config) {
  validate_trace(trace);
  const double extent = swirl_extent_ms(config);
  if (trace.timestamps.size() < 2 || trace.timestamps.back() - trace.timestamps.front() < extent) {
    throw Error(ErrorKind::InsufficientLength, "SWIRL needs a flow spanning " + std::to_string(extent) + " ms");
  }
}

using Iter = std::vector<double>::const_iterator;

/// Packets of a sorted stream that fall in interval k.
std::pair<Iter, Iter> interval_range(const std::vector<double>& ts, const Geometry& g, long long k) {
  auto lo = std::partition_point(ts.begin(), ts.end(), [&](double t) { return g.interval(t) < k; });
  auto hi = std::partition_point(lo, ts.end(), [&](double t) { return g.interval(t) <= k; });
  return {lo, hi};
}

/// Mean offset of the packets in base interval k from its start; 0 when empty.
double centroid(const std::vector<double>& ts, const Geometry& g, long long k) {
  const auto [lo, hi] = interval_range(ts, g, k);
  if (lo == hi) return 0.0;
  const double start = g.interval_start(k);
  double sum = 0.0;
  for (auto it = lo; it != hi; ++it) sum += *it - start;
  return sum / static_cast<double>(hi - lo);
}

}  // namespace

FlowTrace swirl_embed(const FlowTrace& trace, const SwirlConfig& config) {
  validate(config);
  check_span(trace, config);
  const Geometry g(trace.timestamps.front(), config);
  const auto mark_intervals = static_cast<long long>(2 * config.pairs);
  std::vector<std::optional<std::size_t>> bins(config.pairs);

  FlowTrace out;
  out.flow_id = trace.flow_id;
  out.timestamps.reserve(trace.timestamps.size());
  double last = -std::numeric_limits<double>::infinity();

  for (double t : trace.timestamps) {
    double c = std::max(t, last);
    const long long k = g.interval(c);
    if (k >= 0 && k < mark_intervals && k % 2 == 1) {
      const auto pair = static_cast<std::size_t>(k / 2);
      if (!bins[pair]) {
        // Every output with a time in the base interval has been emitted already.
        bins[pair] = centroid_bin(centroid(out.timestamps, g, k - 1), config);
      }
      const std::size_t sub = g.subinterval(c, k);
      const std::size_t slot = designated_slot(config, *bins[pair], pair, sub);
      if (!g.in_slot(c, k, sub, slot)) {
        if (c < g.slot_start(k, sub, slot)) {
          c = g.slot_start(k, sub, slot) + 0.5 * g.slot_w;
        } else if (sub + 1 < config.subintervals) {
          const std::size_t next = designated_slot(config, *bins[pair], pair, sub + 1);
          c = g.slot_start(k, sub + 1, next) + 0.5 * g.slot_w;
        } else {
          // Past the last slot: spill into the following base interval.
          c = g.interval_start(k + 1);
          while (g.interval(c) <= k) c = std::nextafter(c, std::numeric_limits<double>::infinity());
        }
      }
    }
    out.timestamps.push_back(c);
    last = c;
  }
  return out;
}

std::size_t swirl_matching_pairs(const std::vector<double>& ts, double origin, const SwirlConfig& config) {
  const Geometry g(origin, config);
  std::size_t matched = 0;
  for (std::size_t p = 0; p < config.pairs; ++p) {
    const auto k = static_cast<long long>(2 * p + 1);
    const std::size_t bin = centroid_bin(centroid(ts, g, k - 1), config);
    const auto [lo, hi] = interval_range(ts, g, k);
    if (lo == hi) continue;
    std::size_t hits = 0;
    for (auto it = lo; it != hi; ++it) {
      const std::size_t sub = g.subinterval(*it, k);
      hits += g.in_slot(*it, k, sub, designated_slot(config, bin, p, sub));
    }
    if (static_cast<double>(hits) >= config.packet_threshold * static_cast<double>(hi - lo)) ++matched;
  }
  return matched;
}

SwirlDetection swirl_detect(const FlowTrace& trace, const SwirlConfig& config) {
  validate(config);
  check_span(trace, config);
  const double first = trace.timestamps.front();
  SwirlDetection best;
  best.matching_pairs = swirl_matching_pairs(trace.timestamps, first, config);
  if (config.sync_search_ms > 0.0) {
    const auto steps = static_cast<long long>(std::floor(config.sync_search_ms / config.sync_step_ms));
    for (long long i = 1; i <= steps && best.matching_pairs < config.pairs; ++i) {
      for (double sign : {1.0, -1.0}) {
        const double offset = sign * static_cast<double>(i) * config.sync_step_ms;
        const std::size_t m = swirl_matching_pairs(trace.timestamps, first + offset, config);
        if (m > best.matching_pairs) {
          best.matching_pairs = m;
          best.origin_offset_ms = offset;
        }
      }
    }
  }
  best.detected = best.matching_pairs >= config.mark_threshold;
  return best;
}

}  // namespace demark::classic
