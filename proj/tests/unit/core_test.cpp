#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "demark/channel/channel.hpp"
#include "demark/core/dataset.hpp"
#include "demark/core/fingerprint.hpp"
#include "demark/core/flow.hpp"
#include "demark/core/random.hpp"
#include "demark/core/trace_io.hpp"
#include "helpers.hpp"

using namespace demark;

TEST_CASE("ipds_from_timestamps differences consecutive packets") {
  CHECK(ipds_from_timestamps(FlowTrace{"f", {0, 10, 30}}) == IpdSequence{10, 20});
  CHECK(ipds_from_timestamps(FlowTrace{"f", {5, 5, 5}}) == IpdSequence{0, 0});
  CHECK_ERROR_KIND(ipds_from_timestamps(FlowTrace{"f", {1}}), ErrorKind::DegenerateTrace);
  CHECK_ERROR_KIND(ipds_from_timestamps(FlowTrace{"f", {}}), ErrorKind::DegenerateTrace);
  CHECK_ERROR_KIND(ipds_from_timestamps(FlowTrace{"f", {0, 10, 9}}), ErrorKind::MalformedTrace);
}

TEST_CASE("a 1201-packet synthetic flow gives 1200 IPDs") {
  channel::FlowSynthConfig cfg;
  cfg.packets = 1201;
  const auto flows = channel::synthesize_flows(cfg, 1);
  CHECK(ipds_from_timestamps(flows[0]).size() == 1200);
}

TEST_CASE("timestamps_from_ipds is the cumulative sum") {
  CHECK(timestamps_from_ipds(0, IpdSequence{10, 20}).timestamps == std::vector<double>{0, 10, 30});
  CHECK(timestamps_from_ipds(100, IpdSequence{}).timestamps == std::vector<double>{100});
  CHECK_ERROR_KIND(timestamps_from_ipds(0, IpdSequence{1, -1}), ErrorKind::Causality);
}

TEST_CASE("differencing round trip is exact on a microsecond grid") {
  // Sums of values on a 2^-10 ms grid below 2^40 ms round nowhere, so the
  // identity holds bit for bit.
  Rng rng(42);
  const double grid = 0x1.0p-10;
  for (int trial = 0; trial < 200; ++trial) {
    IpdSequence x(50);
    for (double& v : x) v = std::floor(rng.uniform(0.0, 500.0) * (rng.coin() ? 1.0 : 1e-3) / grid) * grid;
    const double start = std::floor(rng.uniform(0.0, 1e6) / grid) * grid;
    CHECK(ipds_from_timestamps(timestamps_from_ipds(start, x)) == x);
  }
}

TEST_CASE("differencing round trip of arbitrary reals is within one timestamp ulp") {
  Rng rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    IpdSequence x(50);
    for (double& v : x) v = rng.uniform(0.0, 500.0);
    const double start = rng.uniform(0.0, 1e6);
    const auto trace = timestamps_from_ipds(start, x);
    const auto back = ipds_from_timestamps(trace);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double t = trace.timestamps[i + 1];
      CHECK(std::abs(back[i] - x[i]) <= 2 * (std::nextafter(t, 2 * t) - t));
    }
  }
}

TEST_CASE("window_flow cuts non-overlapping windows and drops the remainder") {
  IpdSequence x(1200);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  auto w = window_flow(x, 100);
  CHECK(w.windows.size() == 12);
  CHECK(w.dropped == 0);
  auto w2 = window_flow(IpdSequence(105, 1.0), 50);
  CHECK(w2.windows.size() == 2);
  CHECK(w2.dropped == 5);
  CHECK_ERROR_KIND(window_flow(x, 0), ErrorKind::OutOfRange);

  for (std::size_t n : {50, 100, 150, 200, 7}) {
    const auto r = window_flow(x, n);
    IpdSequence cat;
    for (const auto& win : r.windows) {
      CHECK(win.size() == n);
      cat.insert(cat.end(), win.begin(), win.end());
    }
    CHECK(cat == IpdSequence(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(r.windows.size() * n)));
    CHECK(cat.size() + r.dropped == x.size());
  }
}

TEST_CASE("fingerprint views are mutually inverse over the whole alphabet") {
  for (std::uint32_t id = 0; id < 1024; ++id) {
    const Fingerprint fp(id);
    const auto oh = fp.one_hot();
    REQUIRE(oh.size() == 1024);
    CHECK(std::count(oh.begin(), oh.end(), 1.0) == 1);
    CHECK(oh[id] == 1.0);
    const auto bin = fp.binary();
    REQUIRE(bin.size() == 10);
    CHECK(Fingerprint::from_one_hot(oh) == fp);
    CHECK(Fingerprint::from_binary(bin) == fp);
  }
  CHECK(Fingerprint(1).binary() == std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 0, 0, 0, 1});
  CHECK(Fingerprint(512).binary().front() == 1);
  CHECK_ERROR_KIND(Fingerprint(1024), ErrorKind::OutOfRange);
  CHECK(hamming_distance(0, 1023, 10) == 10);
  CHECK(hamming_distance(5, 5, 10) == 0);
}

TEST_CASE("trace CSV parses the documented format") {
  std::istringstream in("flow_id,timestamp_ms\nflow1,0.0\nflow1,12.5\n");
  const auto traces = read_traces(in);
  REQUIRE(traces.size() == 1);
  CHECK(traces[0].flow_id == "flow1");
  CHECK(traces[0].timestamps == std::vector<double>{0.0, 12.5});

  std::istringstream empty("");
  CHECK(read_traces(empty).empty());
}

TEST_CASE("trace CSV errors carry the line number") {
  auto expect_line = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      (void)read_traces(in);
      FAIL("expected a format error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_line("flow_id,timestamp_ms\nf,1\nf,abc\n", "line 3");
  expect_line("wrong,header\n", "line 1");
  expect_line("flow_id,timestamp_ms\nf,5\nf,4\n", "line 3");
  expect_line("flow_id,timestamp_ms\nnocomma\n", "line 2");
}

TEST_CASE("save then load of 500 synthetic flows is the identity") {
  channel::FlowSynthConfig cfg;
  cfg.packets = 60;
  cfg.seed = 9;
  const auto flows = channel::synthesize_flows(cfg, 500);
  const auto path = std::filesystem::temp_directory_path() / "demark_core_roundtrip.csv";
  save_traces(path, flows);
  CHECK(load_traces(path) == flows);
  std::filesystem::remove(path);
}

TEST_CASE("dataset split is disjoint, complete and 80/20") {
  std::vector<IpdSequence> windows(2500, IpdSequence(3, 1.0));
  const auto d = split_dataset(windows, 0.8, 3);
  CHECK(d.train.size() == 2000);
  CHECK(d.test.size() == 500);
  std::set<std::size_t> all(d.train.begin(), d.train.end());
  for (auto i : d.test) CHECK(all.insert(i).second);
  CHECK(all.size() == 2500);
  CHECK(split_dataset(windows, 0.8, 3).train == d.train);
  CHECK(split_dataset(windows, 0.8, 4).train != d.train);

  const auto path = std::filesystem::temp_directory_path() / "demark_manifest.json";
  save_manifest(path, d);
  Dataset copy;
  copy.windows = windows;
  load_manifest(path, copy);
  CHECK(copy.train == d.train);
  CHECK(copy.test == d.test);
  std::filesystem::remove(path);
}

TEST_CASE("flow statistics") {
  const std::vector<double> v{40, 50, 60};
  CHECK(mean(v) == doctest::Approx(50.0));
  CHECK(population_std(v) == doctest::Approx(std::sqrt(200.0 / 3.0)));
}

TEST_CASE("Rng::below stays in range and is deterministic") {
  Rng a(7), b(7);
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.below(1024);
    CHECK(x < 1024);
    CHECK(x == b.below(1024));
  }
}
