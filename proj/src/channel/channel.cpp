#include "demark/channel/channel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "demark/core/error.hpp"

namespace demark::channel {

double laplace_quantile(double loc, double scale, double u) {
  const double sign = u < 0.0 ? -1.0 : (u > 0.0 ? 1.0 : 0.0);
  return loc - scale * sign * std::log1p(-2.0 * std::abs(u));
}

double sample_laplace(double loc, double scale, Rng& rng) {
  if (!(scale >= 0.0)) throw Error(ErrorKind::OutOfRange, "Laplace scale must be >= 0");
  // u in (-1/2, 1/2); the open bound keeps log1p finite.
  double u = rng.uniform() - 0.5;
  while (u == -0.5) u = rng.uniform() - 0.5;
  if (scale == 0.0) return loc;
  return laplace_quantile(loc, scale, u);
}

double sample_laplace(double loc, double scale, std::uint64_t seed) {
  Rng rng(seed);
  return sample_laplace(loc, scale, rng);
}

IpdSequence apply_jitter(std::span<const double> ipds, double location, double scale, Rng& rng) {
  if (!(scale >= 0.0)) throw Error(ErrorKind::OutOfRange, "jitter scale must be >= 0");
  IpdSequence out(ipds.size());
  for (std::size_t i = 0; i < ipds.size(); ++i) {
    out[i] = std::max(0.0, ipds[i] + sample_laplace(location, scale, rng));
  }
  return out;
}

IpdSequence apply_jitter(std::span<const double> ipds, const JitterConfig& config) {
  Rng rng(config.seed);
  return apply_jitter(ipds, config.location, config.scale, rng);
}

FlowTrace apply_timestamp_jitter(const FlowTrace& trace, const JitterConfig& config) {
  if (!(config.scale >= 0.0)) throw Error(ErrorKind::OutOfRange, "jitter scale must be >= 0");
  Rng rng(config.seed);
  FlowTrace out{trace.flow_id, trace.timestamps};
  for (auto& t : out.timestamps) t = std::max(0.0, t + sample_laplace(config.location, config.scale, rng));
  std::sort(out.timestamps.begin(), out.timestamps.end());
  return out;
}

std::vector<LogNormalComponent> FlowSynthConfig::default_mixture() {
  return {{0.5, std::log(20.0), 0.5}, {0.5, std::log(80.0), 0.5}};
}

void validate(const FlowSynthConfig& config) {
  if (config.mixture.empty()) throw Error(ErrorKind::OutOfRange, "mixture needs at least one component");
  double total = 0.0;
  for (const auto& c : config.mixture) {
    if (!(c.weight > 0.0) || !(c.log_sigma >= 0.0) || !std::isfinite(c.log_mean)) {
      throw Error(ErrorKind::OutOfRange, "invalid mixture component");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::OutOfRange, "mixture weights must sum to 1");
  if (config.packets < 2) throw Error(ErrorKind::OutOfRange, "flows need at least 2 packets");
  if (!(config.start_ms >= 0.0)) throw Error(ErrorKind::OutOfRange, "start time must be >= 0");
}

double sample_mixture(const std::vector<LogNormalComponent>& mixture, Rng& rng) {
  double pick = rng.uniform();
  const LogNormalComponent* chosen = &mixture.back();
  for (const auto& c : mixture) {
    if (pick < c.weight) {
      chosen = &c;
      break;
    }
    pick -= c.weight;
  }
  return std::exp(chosen->log_mean + chosen->log_sigma * rng.normal());
}

std::vector<FlowTrace> synthesize_flows(const FlowSynthConfig& config, std::size_t count,
                                        const std::string& prefix) {
  validate(config);
  std::vector<FlowTrace> flows;
  flows.reserve(count);
  for (std::size_t f = 0; f < count; ++f) {
    Rng rng(derive_seed(config.seed, f));
    FlowTrace trace{prefix + std::to_string(f), {}};
    trace.timestamps.reserve(config.packets);
    double t = config.start_ms;
    trace.timestamps.push_back(t);
    for (std::size_t p = 1; p < config.packets; ++p) {
      t += sample_mixture(config.mixture, rng);
      trace.timestamps.push_back(t);
    }
    flows.push_back(std::move(trace));
  }
  return flows;
}

std::vector<IpdSequence> synthesize_windows(const FlowSynthConfig& config, std::size_t count,
                                            std::size_t n) {
  validate(config);
  std::vector<IpdSequence> windows(count, IpdSequence(n));
  for (std::size_t w = 0; w < count; ++w) {
    Rng rng(derive_seed(config.seed ^ 0x5749'4E44'4F57ULL, w));
    for (auto& v : windows[w]) v = sample_mixture(config.mixture, rng);
  }
  return windows;
}

}  // namespace demark::channel
