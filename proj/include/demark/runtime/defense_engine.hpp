#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "demark/core/flow.hpp"
#include "demark/core/random.hpp"
#include "demark/defense/converter.hpp"

namespace demark::runtime {

using Payload = std::vector<std::uint8_t>;

struct PacketEvent {
  double time_ms = 0.0;
  Payload payload;
  bool chaff = false;
  std::uint64_t sequence = 0;  ///< arrival index for real packets
};

enum class ClockMode { Simulated, WallClock };

class Clock {
 public:
  virtual ~Clock() = default;
  virtual ClockMode mode() const noexcept = 0;
  virtual double now_ms() const = 0;
  /// Advances by `ms` measured from the previous deadline, not from now, so
  /// schedules do not drift.
  virtual void sleep_for(double ms) = 0;
};

/// Virtual time; `on_advance(target)` runs before time moves to `target` so the
/// caller can deliver arrivals that happen during the sleep.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(double start_ms = 0.0) : start_(start_ms), now_(start_ms) {}
  ClockMode mode() const noexcept override { return ClockMode::Simulated; }
  double now_ms() const override { return now_; }
  /// Time slept since construction, accumulated apart from the start offset.
  double elapsed_ms() const noexcept { return elapsed_; }
  void sleep_for(double ms) override;
  std::function<void(double)> on_advance;

 private:
  double start_;
  double now_;
  double elapsed_ = 0.0;
};

class WallClock final : public Clock {
 public:
  WallClock();
  ClockMode mode() const noexcept override { return ClockMode::WallClock; }
  double now_ms() const override;
  void sleep_for(double ms) override;
  /// Re-anchors the schedule at the current instant.
  void reset_deadline();

 private:
  std::chrono::steady_clock::time_point origin_;
  double deadline_ms_ = 0.0;
};

/// Generated IPDs are rounded to this grid before scheduling. Sums of grid
/// values below 2^23 ms are exact, so virtual departures reproduce y bit for bit.
inline constexpr double kTickMs = 0x1.0p-30;

/// Snaps each IPD to the nearest multiple of kTickMs.
IpdSequence snap_to_tick(IpdSequence y);

/// Laplace(location, scale) clamped at 0, used for x at start-up and to pad
/// short refills.
struct RandomFill {
  double location = 45.0;
  double scale = 14.142135623730951;
};

struct RefillRecord {
  std::size_t measured = 0;  ///< IPDs taken from arrivals
  std::size_t random = 0;    ///< padded from RandomFill
  IpdSequence x;
  IpdSequence y;
};

struct EngineStats {
  std::uint64_t arrivals = 0;
  std::uint64_t real_sent = 0;
  std::uint64_t chaff_sent = 0;
  std::size_t queue_high_water = 0;
  std::uint64_t refills = 0;
};

/// Defense engine state: packet queue q, timestamp queue t, input window x and
/// the remaining generated IPDs y.
class DefenseState {
 public:
  DefenseState(const defense::DefenseModel& model, std::uint64_t seed, RandomFill fill = {});

  std::size_t n() const noexcept { return model_->n(); }
  const defense::DefenseModel& model() const noexcept { return *model_; }

  /// Thread 1: appends the packet and its arrival time. Never blocks on the sender.
  void on_arrival(Payload packet, double now_ms);

  /// Generated IPDs still to be used, front first.
  std::vector<double> pending_ipds() const;
  IpdSequence current_input() const;
  std::size_t queued_packets() const;
  std::size_t queued_timestamps() const;
  std::optional<double> predecessor() const;
  EngineStats stats() const;

  /// Keep a RefillRecord per refill (off by default).
  bool record_refills = false;
  const std::vector<RefillRecord>& refill_log() const noexcept { return refills_; }

  std::size_t chaff_bytes = 64;

 private:
  friend void refill(DefenseState& state);
  friend PacketEvent sender_step(DefenseState& state, Clock& clock);

  double random_ipd();

  const defense::DefenseModel* model_;
  RandomFill fill_;
  Rng rng_;
  std::unique_ptr<std::mutex> mutex_;  // guards q_, t_, last_arrival_, stats_.arrivals, high water
  std::deque<PacketEvent> q_;
  std::deque<double> t_;
  double last_arrival_ = 0.0;
  std::optional<double> predecessor_;
  std::uint64_t next_sequence_ = 0;
  IpdSequence x_;
  std::deque<double> y_;
  EngineStats stats_;
  std::vector<RefillRecord> refills_;
};

/// Seeded random x, y = remap(convert(x)), empty queues. The model must
/// outlive the state.
DefenseState init_defense(const defense::DefenseModel& model, std::size_t n, std::uint64_t seed);

/// Lines 8-15: rebuilds x from buffered timestamps (random padding when fewer
/// than n IPDs are available) and regenerates y. The last consumed timestamp is
/// kept as the predecessor of the next window.
void refill(DefenseState& state);

/// Thread 2: waits y[0] on the clock, then emits the oldest buffered packet or
/// chaff when the buffer is empty. Refills first when y is exhausted.
PacketEvent sender_step(DefenseState& state, Clock& clock);

struct SimulationStats {
  std::size_t real_packets = 0;
  std::size_t chaff_packets = 0;
  double chaff_ratio = 0.0;
  double mean_queue_delay_ms = 0.0;  ///< departure minus arrival, real packets
  double max_queue_delay_ms = 0.0;
  std::size_t queue_high_water = 0;
  std::size_t windows = 0;
};

struct SimulationResult {
  FlowTrace output;              ///< every departure (real and chaff)
  std::vector<bool> chaff;       ///< per departure
  std::vector<std::uint64_t> real_order;  ///< arrival index of each real departure
  IpdSequence generated;         ///< concatenated y windows
  IpdSequence departure_ipds;    ///< departures differenced from the sender start
  std::vector<RefillRecord> refills;
  SimulationStats stats;
};

/// Event-driven run of both roles on virtual time. The sender starts at the
/// first arrival and stops once every packet has left and the current y
/// window is used up.
SimulationResult run_simulation(const defense::DefenseModel& model, const FlowTrace& input, std::size_t n,
                                std::uint64_t seed, bool record_refills = false);

/// Real and chaff frames on the relay wire: 4-byte big-endian length, a flag
/// byte (0 real, 1 chaff), then the payload.
inline constexpr std::uint8_t kRealFlag = 0;
inline constexpr std::uint8_t kChaffFlag = 1;
inline constexpr std::uint32_t kMaxFrame = 16u << 20;

std::vector<std::uint8_t> encode_frame(const Payload& payload, bool chaff);

struct RelayConfig {
  std::string listen_host = "127.0.0.1";
  std::uint16_t listen_port = 0;  ///< 0 picks a free port
  std::string forward_host = "127.0.0.1";
  std::uint16_t forward_port = 0;
  std::size_t chaff_bytes = 64;
  std::uint64_t seed = 1;
  /// Called with the bound port once listening.
  std::function<void(std::uint16_t)> on_listening;
  /// Set to request shutdown; buffered real packets are still flushed.
  const std::atomic<bool>* stop = nullptr;
};

struct RelayReport {
  std::uint64_t frames_in = 0;
  std::uint64_t real_out = 0;
  std::uint64_t chaff_out = 0;
  std::uint64_t undelivered = 0;  ///< real packets lost to a downstream failure
  bool upstream_closed = false;
  bool downstream_failed = false;
  std::vector<double> departure_ms;
  IpdSequence generated;
};

/// Accepts one upstream connection, connects downstream and re-times every
/// frame on the converter schedule, on the wall clock until upstream closes (or stop is
/// set) and the buffer is drained.
RelayReport run_relay(const RelayConfig& config, const defense::DefenseModel& model);

/// Blocking frame reader used by the relay and its tests. Returns false on a
/// clean EOF at a frame boundary.
bool read_frame(int fd, Payload& payload, bool& chaff);
/// Writes all bytes; false once the peer is gone.
bool write_all(int fd, const std::uint8_t* data, std::size_t size);

}  // namespace demark::runtime
