#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "demark/core/flow.hpp"
#include "demark/core/random.hpp"

namespace demark::channel {

/// Inverse-CDF Laplace draw: loc - scale * sign(u) * ln(1 - 2|u|), u in (-1/2, 1/2).
double sample_laplace(double loc, double scale, Rng& rng);
/// Single draw from a generator seeded with `seed`.
double sample_laplace(double loc, double scale, std::uint64_t seed);

/// The Laplace inverse CDF itself, exposed for tests.
double laplace_quantile(double loc, double scale, double u_centered);

struct JitterConfig {
  double location = 0.0;  ///< ms
  double scale = 10.0;    ///< ms
  std::uint64_t seed = 1;
};

/// out[i] = max(0, in[i] + Laplace(loc, scale)).
IpdSequence apply_jitter(std::span<const double> ipds, const JitterConfig& config);
IpdSequence apply_jitter(std::span<const double> ipds, double location, double scale, Rng& rng);

/// Per-packet variant for schemes keyed to absolute positions in time (SWIRL):
/// each timestamp moves by an independent Laplace draw and the arrival order
/// is re-sorted, so displacement does not accumulate along the flow.
FlowTrace apply_timestamp_jitter(const FlowTrace& trace, const JitterConfig& config);

struct LogNormalComponent {
  double weight = 0.5;
  double log_mean = 0.0;   ///< mean of ln(IPD / ms)
  double log_sigma = 0.5;
};

struct FlowSynthConfig {
  std::vector<LogNormalComponent> mixture = default_mixture();
  std::size_t packets = 1201;
  std::uint64_t seed = 1;
  double start_ms = 0.0;

  /// Two log-normal components with medians near 20 ms and 80 ms.
  static std::vector<LogNormalComponent> default_mixture();
};

/// Throws OutOfRange unless weights are positive and sum to 1 and packets >= 2.
void validate(const FlowSynthConfig& config);

/// One IPD from the mixture.
double sample_mixture(const std::vector<LogNormalComponent>& mixture, Rng& rng);

/// `count` flows named "<prefix><index>"; flow i uses derive_seed(seed, i), so
/// any flow can be regenerated on its own.
std::vector<FlowTrace> synthesize_flows(const FlowSynthConfig& config, std::size_t count,
                                        const std::string& prefix = "flow");

/// Convenience for model datasets: `count` windows of n i.i.d. mixture IPDs.
std::vector<IpdSequence> synthesize_windows(const FlowSynthConfig& config, std::size_t count,
                                            std::size_t n);

}  // namespace demark::channel
