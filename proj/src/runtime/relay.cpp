#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "demark/core/error.hpp"
#include "demark/runtime/defense_engine.hpp"

namespace demark::runtime {

namespace {

class Socket {
 public:
  explicit Socket(int fd = -1) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  ~Socket() { close(); }
  int get() const noexcept { return fd_; }
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_;
};

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* info = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &info) != 0 || info == nullptr) {
    throw Error(ErrorKind::Io, "cannot resolve " + host);
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(info->ai_addr)->sin_addr;
  ::freeaddrinfo(info);
  return addr;
}

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

bool read_exact(int fd, std::uint8_t* data, std::size_t size, bool& eof_at_start) {
  std::size_t got = 0;
  eof_at_start = false;
  while (got < size) {
    const ssize_t r = ::recv(fd, data + got, size - got, 0);
    if (r == 0) {
      eof_at_start = got == 0;
      return false;
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace

bool write_all(int fd, const std::uint8_t* data, std::size_t size) {
  std::size_t sent = 0;
  while (sent < size) {
    const ssize_t r = ::send(fd, data + sent, size - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(r);
  }
  return true;
}

bool read_frame(int fd, Payload& payload, bool& chaff) {
  std::uint8_t header[5];
  bool eof = false;
  if (!read_exact(fd, header, sizeof header, eof)) {
    if (eof) return false;
    throw Error(ErrorKind::Io, "connection closed inside a frame header");
  }
  const std::uint32_t len = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                            (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
  if (len > kMaxFrame) throw Error(ErrorKind::Format, "frame length " + std::to_string(len) + " too large");
  if (header[4] != kRealFlag && header[4] != kChaffFlag) throw Error(ErrorKind::Format, "bad frame flag");
  chaff = header[4] == kChaffFlag;
  payload.resize(len);
  if (len > 0 && !read_exact(fd, payload.data(), len, eof)) {
    throw Error(ErrorKind::Io, "connection closed inside a frame payload");
  }
  return true;
}

RelayReport run_relay(const RelayConfig& config, const defense::DefenseModel& model) {
  Socket listener(::socket(AF_INET, SOCK_STREAM, 0));
  if (listener.get() < 0) throw Error(ErrorKind::Io, errno_text("socket"));
  const int one = 1;
  ::setsockopt(listener.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(config.listen_host, config.listen_port);
  if (::bind(listener.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw Error(ErrorKind::Io, errno_text("bind"));
  }
  if (::listen(listener.get(), 1) != 0) throw Error(ErrorKind::Io, errno_text("listen"));
  socklen_t alen = sizeof addr;
  ::getsockname(listener.get(), reinterpret_cast<sockaddr*>(&addr), &alen);
  if (config.on_listening) config.on_listening(ntohs(addr.sin_port));

  Socket upstream(::accept(listener.get(), nullptr, nullptr));
  if (upstream.get() < 0) throw Error(ErrorKind::Io, errno_text("accept"));
  listener.close();

  Socket downstream(::socket(AF_INET, SOCK_STREAM, 0));
  if (downstream.get() < 0) throw Error(ErrorKind::Io, errno_text("socket"));
  sockaddr_in fwd = resolve(config.forward_host, config.forward_port);
  if (::connect(downstream.get(), reinterpret_cast<sockaddr*>(&fwd), sizeof fwd) != 0) {
    throw Error(ErrorKind::Io, errno_text("connect"));
  }
  ::setsockopt(downstream.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

  DefenseState state = init_defense(model, model.n(), config.seed);
  state.chaff_bytes = config.chaff_bytes;
  WallClock clock;
  std::atomic<bool> upstream_done{false};
  std::atomic<std::uint64_t> frames_in{0};

  std::thread reader([&] {
    Payload payload;
    bool chaff = false;
    try {
      while (read_frame(upstream.get(), payload, chaff)) {
        // Upstream chaff would be indistinguishable after re-timing; drop it here.
        if (!chaff) state.on_arrival(payload, clock.now_ms());
        ++frames_in;
      }
    } catch (const Error&) {
      // Treated as the end of the upstream flow.
    }
    upstream_done = true;
  });

  RelayReport report;
  std::uint64_t lost_in_flight = 0;
  report.generated = state.pending_ipds();
  clock.reset_deadline();
  while (true) {
    const bool stop = upstream_done.load() || (config.stop && config.stop->load());
    if (stop && state.queued_packets() == 0) break;
    if (state.pending_ipds().empty()) {
      refill(state);
      const auto y = state.pending_ipds();
      report.generated.insert(report.generated.end(), y.begin(), y.end());
    }
    PacketEvent ev = sender_step(state, clock);
    const auto frame = encode_frame(ev.payload, ev.chaff);
    if (!write_all(downstream.get(), frame.data(), frame.size())) {
      report.downstream_failed = true;
      lost_in_flight = ev.chaff ? 0 : 1;
      break;
    }
    report.departure_ms.push_back(ev.time_ms);
    (ev.chaff ? report.chaff_out : report.real_out)++;
  }
  // Unblocks the reader if upstream is still open.
  ::shutdown(upstream.get(), SHUT_RDWR);
  reader.join();
  if (report.downstream_failed) report.undelivered = lost_in_flight + state.queued_packets();
  report.frames_in = frames_in.load();
  report.upstream_closed = upstream_done.load();
  ::shutdown(downstream.get(), SHUT_WR);
  return report;
}

}  // namespace demark::runtime
