#include "demark/runtime/defense_engine.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "demark/channel/channel.hpp"
#include "demark/core/error.hpp"

namespace demark::runtime {

void VirtualClock::sleep_for(double ms) {
  elapsed_ += ms;
  const double target = start_ + elapsed_;
  if (on_advance) on_advance(target);
  now_ = target;
}

WallClock::WallClock() : origin_(std::chrono::steady_clock::now()) {}

double WallClock::now_ms() const {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - origin_).count();
}

void WallClock::sleep_for(double ms) {
  deadline_ms_ += ms;
  const auto when = origin_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double, std::milli>(deadline_ms_));
  std::this_thread::sleep_until(when);
}

void WallClock::reset_deadline() { deadline_ms_ = now_ms(); }

IpdSequence snap_to_tick(IpdSequence y) {
  for (double& v : y) v = std::round(v / kTickMs) * kTickMs;
  return y;
}

DefenseState::DefenseState(const defense::DefenseModel& model, std::uint64_t seed, RandomFill fill)
    : model_(&model), fill_(fill), rng_(seed), mutex_(std::make_unique<std::mutex>()) {
  x_.resize(model.n());
  for (double& v : x_) v = random_ipd();
  const auto y = snap_to_tick(defense::defend_window(model, x_));
  y_.assign(y.begin(), y.end());
}

double DefenseState::random_ipd() {
  return std::max(0.0, channel::sample_laplace(fill_.location, fill_.scale, rng_));
}

void DefenseState::on_arrival(Payload packet, double now_ms) {
  std::lock_guard lock(*mutex_);
  // Timestamps stay non-decreasing even if a caller's clock steps back.
  const double t = stats_.arrivals == 0 ? now_ms : std::max(now_ms, last_arrival_);
  last_arrival_ = t;
  PacketEvent ev;
  ev.time_ms = t;
  ev.payload = std::move(packet);
  ev.sequence = next_sequence_++;
  q_.push_back(std::move(ev));
  t_.push_back(t);
  ++stats_.arrivals;
  stats_.queue_high_water = std::max(stats_.queue_high_water, q_.size());
}

std::vector<double> DefenseState::pending_ipds() const { return {y_.begin(), y_.end()}; }
IpdSequence DefenseState::current_input() const { return x_; }

std::size_t DefenseState::queued_packets() const {
  std::lock_guard lock(*mutex_);
  return q_.size();
}

std::size_t DefenseState::queued_timestamps() const {
  std::lock_guard lock(*mutex_);
  return t_.size();
}

std::optional<double> DefenseState::predecessor() const { return predecessor_; }

EngineStats DefenseState::stats() const {
  std::lock_guard lock(*mutex_);
  return stats_;
}

DefenseState init_defense(const defense::DefenseModel& model, std::size_t n, std::uint64_t seed) {
  if (model.n() != n || model.converter.output_dim() != n) {
    throw Error(ErrorKind::LengthMismatch, "converter window " + std::to_string(model.n()) +
                                               " does not match n = " + std::to_string(n));
  }
  return DefenseState(model, seed);
}

void refill(DefenseState& s) {
  const std::size_t n = s.n();
  std::vector<double> taken;
  {
    std::lock_guard lock(*s.mutex_);
    // With a predecessor every buffered timestamp yields one IPD; without one
    // the first timestamp only anchors the differences.
    std::size_t count = 0;
    if (s.predecessor_) {
      count = std::min(n, s.t_.size());
    } else if (!s.t_.empty()) {
      count = std::min(n, s.t_.size() - 1) + 1;
    }
    taken.assign(s.t_.begin(), s.t_.begin() + static_cast<std::ptrdiff_t>(count));
    s.t_.erase(s.t_.begin(), s.t_.begin() + static_cast<std::ptrdiff_t>(count));
  }
  std::size_t l = 0;
  double prev = s.predecessor_.value_or(taken.empty() ? 0.0 : taken.front());
  for (std::size_t i = s.predecessor_ ? 0 : 1; i < taken.size(); ++i) {
    s.x_[l++] = taken[i] - prev;
    prev = taken[i];
  }
  if (!taken.empty()) s.predecessor_ = taken.back();
  for (std::size_t i = l; i < n; ++i) s.x_[i] = s.random_ipd();
  const auto y = snap_to_tick(defense::defend_window(*s.model_, s.x_));
  s.y_.assign(y.begin(), y.end());
  ++s.stats_.refills;
  if (s.record_refills) s.refills_.push_back({l, n - l, s.x_, y});
}

PacketEvent sender_step(DefenseState& s, Clock& clock) {
  if (s.y_.empty()) refill(s);
  const double wait = s.y_.front();
  clock.sleep_for(wait);
  s.y_.pop_front();
  PacketEvent ev;
  {
    std::lock_guard lock(*s.mutex_);
    if (!s.q_.empty()) {
      ev = std::move(s.q_.front());
      s.q_.pop_front();
      ++s.stats_.real_sent;
    } else {
      ev.chaff = true;
      ++s.stats_.chaff_sent;
    }
  }
  if (ev.chaff) {
    ev.payload.resize(s.chaff_bytes);
    for (auto& b : ev.payload) b = static_cast<std::uint8_t>(s.rng_.next_u64());
  }
  ev.time_ms = clock.now_ms();
  return ev;
}

SimulationResult run_simulation(const defense::DefenseModel& model, const FlowTrace& input, std::size_t n,
                                std::uint64_t seed, bool record_refills) {
  validate_trace(input);
  SimulationResult res;
  res.output.flow_id = input.flow_id;
  const auto& arrivals = input.timestamps;
  const double start = arrivals.empty() ? 0.0 : arrivals.front();

  DefenseState state = init_defense(model, n, seed);
  state.record_refills = record_refills;
  VirtualClock clock(start);
  std::size_t next = 0;
  // Arrivals at or before a departure instant are buffered before it fires.
  clock.on_advance = [&](double target) {
    while (next < arrivals.size() && arrivals[next] <= target) {
      state.on_arrival({}, arrivals[next]);
      ++next;
    }
  };
  clock.on_advance(start);

  const IpdSequence first = state.pending_ipds();
  res.generated.assign(first.begin(), first.end());
  double delay_sum = 0.0;
  double prev_elapsed = 0.0;

  while (true) {
    const bool done = next == arrivals.size() && state.queued_packets() == 0;
    if (done && state.pending_ipds().empty()) break;
    if (state.pending_ipds().empty()) {
      refill(state);
      const auto y = state.pending_ipds();
      res.generated.insert(res.generated.end(), y.begin(), y.end());
    }
    PacketEvent ev = sender_step(state, clock);
    res.output.timestamps.push_back(ev.time_ms);
    res.departure_ipds.push_back(clock.elapsed_ms() - prev_elapsed);
    prev_elapsed = clock.elapsed_ms();
    res.chaff.push_back(ev.chaff);
    if (ev.chaff) {
      ++res.stats.chaff_packets;
    } else {
      ++res.stats.real_packets;
      res.real_order.push_back(ev.sequence);
      const double d = ev.time_ms - arrivals[ev.sequence];
      delay_sum += d;
      res.stats.max_queue_delay_ms = std::max(res.stats.max_queue_delay_ms, d);
    }
  }
  const auto stats = state.stats();
  res.stats.windows = static_cast<std::size_t>(stats.refills) + 1;
  res.stats.queue_high_water = stats.queue_high_water;
  const std::size_t emitted = res.output.timestamps.size();
  res.stats.chaff_ratio = emitted == 0 ? 0.0 : static_cast<double>(res.stats.chaff_packets) / static_cast<double>(emitted);
  res.stats.mean_queue_delay_ms =
      res.stats.real_packets == 0 ? 0.0 : delay_sum / static_cast<double>(res.stats.real_packets);
  if (record_refills) res.refills = state.refill_log();
  return res;
}

std::vector<std::uint8_t> encode_frame(const Payload& payload, bool chaff) {
  if (payload.size() > kMaxFrame) throw Error(ErrorKind::OutOfRange, "frame payload too large");
  const auto len = static_cast<std::uint32_t>(payload.size());
  std::vector<std::uint8_t> out;
  out.reserve(5 + payload.size());
  out.push_back(static_cast<std::uint8_t>(len >> 24));
  out.push_back(static_cast<std::uint8_t>(len >> 16));
  out.push_back(static_cast<std::uint8_t>(len >> 8));
  out.push_back(static_cast<std::uint8_t>(len));
  out.push_back(chaff ? kChaffFlag : kRealFlag);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

}  // namespace demark::runtime
