#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "demark/channel/channel.hpp"
#include "demark/defense/converter.hpp"
#include "demark/runtime/defense_engine.hpp"
#include "helpers.hpp"

using namespace demark;
using namespace demark::runtime;

namespace {

// Constant generator: zero weights and a fixed final bias, so y never depends on x.
defense::DefenseModel constant_model(const std::vector<double>& y_ms) {
  const std::size_t n = y_ms.size();
  nn::ModelGraph conv(n, {nn::LayerSpec::dense(n, nn::Activation::None)}, 1, 1.0 / 50.0, 50.0);
  conv.layers()[0].weight.setZero();
  for (std::size_t i = 0; i < n; ++i) conv.layers()[0].bias(static_cast<Eigen::Index>(i)) = y_ms[i] / 50.0;
  defense::RemapConfig permissive{0.0, 1e6, 1e6};
  return {conv, permissive, "constant"};
}

defense::DefenseModel fast_model(std::size_t n) {
  // Small IPDs keep the wall-clock tests short.
  return {defense::make_converter(n, 5), defense::RemapConfig{5.0, 10.0, 3.0}, "fast"};
}

FlowTrace synthetic_flow(std::size_t packets, std::uint64_t seed) {
  channel::FlowSynthConfig cfg;
  cfg.packets = packets;
  cfg.seed = seed;
  return channel::synthesize_flows(cfg, 1)[0];
}

}  // namespace

TEST_CASE("init_defense is seeded and produces an in-range window") {
  const defense::DefenseModel model{defense::make_converter(50, 2), defense::RemapConfig{}, "t"};
  const auto a = init_defense(model, 50, 7);
  const auto b = init_defense(model, 50, 7);
  CHECK(a.pending_ipds() == b.pending_ipds());
  CHECK(a.pending_ipds() != init_defense(model, 50, 8).pending_ipds());
  const auto y = a.pending_ipds();
  CHECK(y.size() == 50);
  const double m = mean(y);
  CHECK(m >= 30.0 - 1e-9);
  CHECK(m <= 60.0 + 1e-9);
  CHECK(a.queued_packets() == 0);
  CHECK_ERROR_KIND(init_defense(model, 40, 7), ErrorKind::LengthMismatch);
}

TEST_CASE("arrivals fill both queues in order") {
  const auto model = constant_model({10, 20});
  auto s = init_defense(model, 2, 1);
  s.on_arrival({1}, 0.0);
  s.on_arrival({2}, 5.0);
  s.on_arrival({3}, 5.0);
  CHECK(s.queued_packets() == 3);
  CHECK(s.queued_timestamps() == 3);
  CHECK(s.stats().arrivals == 3);

  auto big = init_defense(model, 2, 1);
  Rng rng(3);
  double t = 0.0;
  for (int i = 0; i < 10000; ++i) {
    t += rng.uniform(0.0, 3.0);
    big.on_arrival({}, t);
  }
  CHECK(big.queued_timestamps() == 10000);
  CHECK(big.stats().queue_high_water == 10000);
}

TEST_CASE("sender emits the buffered packet then chaff on the generated schedule") {
  const auto model = constant_model({10, 20});
  auto s = init_defense(model, 2, 1);
  REQUIRE(s.pending_ipds() == std::vector<double>{10, 20});
  s.on_arrival({42}, 0.0);
  VirtualClock clock(0.0);
  const auto first = sender_step(s, clock);
  CHECK(first.time_ms == 10.0);
  CHECK_FALSE(first.chaff);
  CHECK(first.payload == Payload{42});
  const auto second = sender_step(s, clock);
  CHECK(second.time_ms == 30.0);
  CHECK(second.chaff);
  CHECK(second.payload.size() == s.chaff_bytes);
  CHECK(s.stats().real_sent == 1);
  CHECK(s.stats().chaff_sent == 1);
}

TEST_CASE("an empty buffer gives one chaff packet per generated IPD") {
  const defense::DefenseModel model{defense::make_converter(20, 3), defense::RemapConfig{}, "t"};
  auto s = init_defense(model, 20, 2);
  VirtualClock clock;
  for (int i = 0; i < 20; ++i) CHECK(sender_step(s, clock).chaff);
  CHECK(s.stats().chaff_sent == 20);
  CHECK(s.stats().refills == 0);
}

TEST_CASE("refill measures buffered IPDs and pads with random ones") {
  const defense::DefenseModel model{defense::make_converter(50, 3), defense::RemapConfig{}, "t"};
  SUBCASE("a full history of n + 1 timestamps needs no padding") {
    auto s = init_defense(model, 50, 4);
    s.record_refills = true;
    for (int i = 0; i <= 50; ++i) s.on_arrival({}, 2.0 * i);
    refill(s);
    REQUIRE(s.refill_log().size() == 1);
    CHECK(s.refill_log()[0].measured == 50);
    CHECK(s.refill_log()[0].random == 0);
    CHECK(std::all_of(s.current_input().begin(), s.current_input().end(), [](double v) { return v == 2.0; }));
    CHECK(s.queued_timestamps() == 0);
    CHECK(s.predecessor() == 100.0);
  }
  SUBCASE("no history gives a fully random window") {
    auto s = init_defense(model, 50, 4);
    s.record_refills = true;
    refill(s);
    CHECK(s.refill_log()[0].measured == 0);
    CHECK(s.refill_log()[0].random == 50);
    CHECK(s.pending_ipds().size() == 50);
  }
  SUBCASE("five timestamps after a predecessor give five measured IPDs") {
    auto s = init_defense(model, 50, 4);
    s.record_refills = true;
    s.on_arrival({}, 0.0);
    refill(s);  // anchors the predecessor at 0
    for (int i = 1; i <= 5; ++i) s.on_arrival({}, 10.0 * i);
    refill(s);
    const auto& rec = s.refill_log()[1];
    CHECK(rec.measured == 5);
    CHECK(rec.random == 45);
    for (std::size_t i = 0; i < 5; ++i) CHECK(rec.x[i] == 10.0);
  }
  SUBCASE("without a predecessor the first timestamp only anchors") {
    auto s = init_defense(model, 50, 4);
    s.record_refills = true;
    for (int i = 0; i < 5; ++i) s.on_arrival({}, 10.0 * i);
    refill(s);
    CHECK(s.refill_log()[0].measured == 4);
    CHECK(s.refill_log()[0].random == 46);
  }
  SUBCASE("refilled windows satisfy the remap bounds") {
    auto s = init_defense(model, 50, 4);
    for (int i = 0; i < 30; ++i) s.on_arrival({}, 500.0 * i);
    refill(s);
    const double m = mean(s.pending_ipds());
    CHECK(m >= 30.0 - 1e-9);
    CHECK(m <= 60.0 + 1e-9);
  }
}

TEST_CASE("simulation keeps FIFO order, drops nothing and follows y exactly") {
  const defense::DefenseModel model{defense::make_converter(50, 6), defense::RemapConfig{}, "t"};
  const auto flow = synthetic_flow(600, 9);
  const auto res = run_simulation(model, flow, 50, 3, true);
  REQUIRE(res.stats.real_packets == flow.size());
  CHECK(std::is_sorted(res.real_order.begin(), res.real_order.end()));
  CHECK(res.real_order.size() == flow.size());
  CHECK(res.real_order.front() == 0);
  CHECK(res.real_order.back() == flow.size() - 1);
  CHECK(res.departure_ipds == res.generated);
  CHECK(res.output.size() == res.chaff.size());
  CHECK(res.generated.size() % 50 == 0);
  for (std::size_t w = 0; w + 50 <= res.departure_ipds.size(); w += 50) {
    const std::vector<double> window(res.departure_ipds.begin() + w, res.departure_ipds.begin() + w + 50);
    const double m = mean(window);
    CHECK(m >= 30.0 - 1e-9);
    CHECK(m <= 60.0 + 1e-9);
  }
  // Real packets never leave before they arrive.
  std::size_t real = 0;
  for (std::size_t i = 0; i < res.output.size(); ++i) {
    if (!res.chaff[i]) CHECK(res.output.timestamps[i] >= flow.timestamps[res.real_order[real++]]);
  }
  const auto again = run_simulation(model, flow, 50, 3);
  CHECK(again.output == res.output);
}

TEST_CASE("chaff ratio follows the arrival rate") {
  const defense::DefenseModel model{defense::make_converter(20, 6), defense::RemapConfig{}, "t"};
  // One packet every 5 ms is far faster than IPDs averaging at least 30 ms.
  FlowTrace fast{"fast", {}};
  for (int i = 0; i < 200; ++i) fast.timestamps.push_back(5.0 * i);
  const auto busy = run_simulation(model, fast, 20, 1);
  std::size_t leading_real = 0;
  for (std::size_t i = 0; i < busy.chaff.size() && !busy.chaff[i]; ++i) ++leading_real;
  CHECK(leading_real == 200);
  // Sparse arrivals: most departures are chaff.
  FlowTrace slow{"slow", {}};
  for (int i = 0; i < 20; ++i) slow.timestamps.push_back(1000.0 * i);
  const auto idle = run_simulation(model, slow, 20, 1);
  CHECK(idle.stats.chaff_ratio > 0.9);
  CHECK(idle.stats.real_packets == 20);
}

TEST_CASE("frame encoding") {
  const auto f = encode_frame(Payload{7, 8, 9}, true);
  CHECK(f == std::vector<std::uint8_t>{0, 0, 0, 3, kChaffFlag, 7, 8, 9});
  CHECK(encode_frame(Payload{}, false) == std::vector<std::uint8_t>{0, 0, 0, 0, kRealFlag});
}

namespace {

struct Sink {
  int listen_fd = -1;
  std::uint16_t port = 0;
  std::vector<Payload> real;
  std::size_t chaff = 0;
  std::vector<double> arrival_ms;

  Sink() {
    listen_fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    REQUIRE(::bind(listen_fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    REQUIRE(::listen(listen_fd, 1) == 0);
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd, reinterpret_cast<sockaddr*>(&addr), &len);
    port = ntohs(addr.sin_port);
  }
  ~Sink() { ::close(listen_fd); }

  void drain() {
    const int fd = ::accept(listen_fd, nullptr, nullptr);
    Payload p;
    bool is_chaff = false;
    const auto start = std::chrono::steady_clock::now();
    while (read_frame(fd, p, is_chaff)) {
      arrival_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
      if (is_chaff) {
        ++chaff;
      } else {
        real.push_back(p);
      }
    }
    ::close(fd);
  }
};

int connect_to(std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  return fd;
}

}  // namespace

TEST_CASE("loopback relay delivers every frame in order on the generated schedule") {
  const auto model = fast_model(10);
  Sink sink;
  std::atomic<std::uint16_t> relay_port{0};
  RelayConfig cfg;
  cfg.forward_port = sink.port;
  cfg.on_listening = [&](std::uint16_t p) { relay_port = p; };
  RelayReport report;
  std::thread relay([&] { report = run_relay(cfg, model); });
  std::thread sink_thread([&] { sink.drain(); });
  while (relay_port.load() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  const int up = connect_to(relay_port);
  for (std::uint32_t i = 0; i < 200; ++i) {
    const Payload p{static_cast<std::uint8_t>(i & 0xFF), static_cast<std::uint8_t>(i >> 8)};
    const auto frame = encode_frame(p, false);
    REQUIRE(write_all(up, frame.data(), frame.size()));
  }
  ::close(up);
  relay.join();
  sink_thread.join();

  REQUIRE(sink.real.size() == 200);
  for (std::uint32_t i = 0; i < 200; ++i) {
    CHECK(sink.real[i] == Payload{static_cast<std::uint8_t>(i & 0xFF), static_cast<std::uint8_t>(i >> 8)});
  }
  CHECK(report.real_out == 200);
  CHECK(report.undelivered == 0);
  CHECK(report.upstream_closed);
  REQUIRE(report.departure_ms.size() <= report.generated.size());
  double prev = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < report.departure_ms.size(); ++i) {
    worst = std::max(worst, std::abs((report.departure_ms[i] - prev) - report.generated[i]));
    prev = report.departure_ms[i];
  }
  CHECK(worst <= 2.0);
}

TEST_CASE("an idle relay emits a window of chaff") {
  const auto model = fast_model(10);
  Sink sink;
  std::atomic<std::uint16_t> relay_port{0};
  RelayConfig cfg;
  cfg.forward_port = sink.port;
  cfg.on_listening = [&](std::uint16_t p) { relay_port = p; };
  RelayReport report;
  std::thread relay([&] { report = run_relay(cfg, model); });
  std::thread sink_thread([&] { sink.drain(); });
  while (relay_port.load() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  const int up = connect_to(relay_port);
  // Ten IPDs with means of at most 10 ms finish well within 400 ms.
  std::this_thread::sleep_for(std::chrono::milliseconds(400));
  ::close(up);
  relay.join();
  sink_thread.join();
  CHECK(sink.real.empty());
  CHECK(sink.chaff >= 10);
  CHECK(report.chaff_out == sink.chaff);
}

TEST_CASE("scheduled IPDs sit on the tick grid") {
  const auto y = snap_to_tick({10.123456789, 0.0, 45.5});
  for (double v : y) CHECK(std::fmod(v, kTickMs) == 0.0);
  CHECK(std::abs(y[0] - 10.123456789) <= kTickMs / 2);
  CHECK(y[2] == 45.5);
}
