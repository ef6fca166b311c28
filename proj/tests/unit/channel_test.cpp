#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "demark/channel/channel.hpp"
#include "demark/core/flow.hpp"
#include "helpers.hpp"

using namespace demark;
using namespace demark::channel;

TEST_CASE("Laplace inverse CDF") {
  CHECK(laplace_quantile(3.0, 2.0, 0.0) == 3.0);
  // P(X <= loc + b ln 2) = 3/4.
  CHECK(laplace_quantile(0.0, 10.0, 0.25) == doctest::Approx(10.0 * std::log(2.0)));
  CHECK(laplace_quantile(0.0, 10.0, -0.25) == doctest::Approx(-10.0 * std::log(2.0)));
}

TEST_CASE("Laplace samples have the right moments") {
  Rng rng(2024);
  const int count = 200000;
  std::vector<double> xs(count);
  for (auto& x : xs) x = sample_laplace(0.0, 10.0, rng);
  const double m = mean(xs);
  const double sd = population_std(xs);
  CHECK(std::abs(m) < 0.15);
  CHECK(sd == doctest::Approx(10.0 * std::sqrt(2.0)).epsilon(0.02));
  std::nth_element(xs.begin(), xs.begin() + count / 2, xs.end());
  CHECK(std::abs(xs[count / 2]) < 0.15);
  // Half the mass lies beyond b ln 2.
  const double cut = 10.0 * std::log(2.0);
  const auto beyond = std::count_if(xs.begin(), xs.end(), [&](double x) { return std::abs(x) > cut; });
  CHECK(static_cast<double>(beyond) / count == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("zero-scale jitter is the identity and negative scale is rejected") {
  const std::vector<double> ipds{1, 2, 3, 40};
  CHECK(apply_jitter(ipds, JitterConfig{0.0, 0.0, 3}) == ipds);
  CHECK_ERROR_KIND(apply_jitter(ipds, JitterConfig{0.0, -1.0, 3}), ErrorKind::OutOfRange);
  CHECK_ERROR_KIND(sample_laplace(0.0, -1.0, 1ULL), ErrorKind::OutOfRange);
}

TEST_CASE("jitter clamps at zero and is deterministic per seed") {
  const std::vector<double> ipds(1000, 1.0);
  const auto a = apply_jitter(ipds, JitterConfig{0.0, 10.0, 9});
  const auto b = apply_jitter(ipds, JitterConfig{0.0, 10.0, 9});
  const auto c = apply_jitter(ipds, JitterConfig{0.0, 10.0, 10});
  CHECK(a == b);
  CHECK(a != c);
  CHECK(std::all_of(a.begin(), a.end(), [](double v) { return v >= 0.0; }));
  CHECK(std::count(a.begin(), a.end(), 0.0) > 300);
}

TEST_CASE("timestamp jitter keeps the packet count and order") {
  FlowSynthConfig cfg;
  cfg.packets = 500;
  const auto flow = synthesize_flows(cfg, 1)[0];
  const auto j = apply_timestamp_jitter(flow, JitterConfig{0.0, 10.0, 4});
  CHECK(j.size() == flow.size());
  CHECK(std::is_sorted(j.timestamps.begin(), j.timestamps.end()));
  CHECK(apply_timestamp_jitter(flow, JitterConfig{0.0, 0.0, 4}) == flow);
}

TEST_CASE("synthetic flows are positive, seeded and regenerable") {
  FlowSynthConfig cfg;
  cfg.packets = 300;
  const auto flows = synthesize_flows(cfg, 5);
  REQUIRE(flows.size() == 5);
  for (const auto& f : flows) {
    validate_trace(f);
    const auto ipds = ipds_from_timestamps(f);
    CHECK(std::all_of(ipds.begin(), ipds.end(), [](double v) { return v > 0.0; }));
  }
  CHECK(synthesize_flows(cfg, 5) == flows);
  auto other = cfg;
  other.seed = 2;
  CHECK(synthesize_flows(other, 5)[0] != flows[0]);
  CHECK(flows[0].flow_id == "flow0");
}

TEST_CASE("synthetic IPD statistics sit between the mixture components") {
  FlowSynthConfig cfg;
  const auto windows = synthesize_windows(cfg, 200, 100);
  std::vector<double> all;
  for (const auto& w : windows) all.insert(all.end(), w.begin(), w.end());
  std::nth_element(all.begin(), all.begin() + all.size() / 2, all.end());
  const double median = all[all.size() / 2];
  CHECK(median > 20.0);
  CHECK(median < 80.0);
}

TEST_CASE("invalid synthesis configs are rejected") {
  FlowSynthConfig cfg;
  cfg.mixture = {{0.7, 1.0, 0.5}};
  CHECK_ERROR_KIND(validate(cfg), ErrorKind::OutOfRange);
  cfg = FlowSynthConfig{};
  cfg.packets = 1;
  CHECK_ERROR_KIND(validate(cfg), ErrorKind::OutOfRange);
}
