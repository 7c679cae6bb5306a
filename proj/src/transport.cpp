// SPDX-License-Identifier: Apache-2.0
#include "dda/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace dda {

std::string to_string(TransportMode mode) {
  return mode == TransportMode::Tcp ? "tcp" : "loopback";
}

TransportMode transport_mode_from_string(const std::string& name) {
  if (name == "loopback") return TransportMode::Loopback;
  if (name == "tcp") return TransportMode::Tcp;
  throw std::invalid_argument("unknown transport '" + name + "'");
}

std::vector<std::uint8_t> Channel::write_then_read(std::span<const std::uint8_t> frame_bytes) {
  write(frame_bytes);
  return read_frame_bytes();
}

// ---------------------------------------------------------------------------
// Endpoint

Endpoint::Endpoint(TransportMode mode, std::unique_ptr<Channel> channel)
    : mode_(mode), channel_(std::move(channel)) {}

void Endpoint::note_sent(const std::vector<std::uint8_t>& bytes) {
  counters_.frames_sent += 1;
  counters_.bytes_sent += bytes.size();
  if (recording_) log_.records.push_back({Direction::Sent, bytes});
}

SyncFrame Endpoint::accept_incoming(std::vector<std::uint8_t> bytes) {
  SyncFrame frame = decode_frame(bytes);
  counters_.frames_received += 1;
  counters_.bytes_received += bytes.size();
  if (recording_) log_.records.push_back({Direction::Received, std::move(bytes)});
  return frame;
}

void Endpoint::send(const SyncFrame& frame) {
  auto bytes = encode_frame(frame);
  channel_->write(bytes);
  note_sent(bytes);
}

SyncFrame Endpoint::receive() { return accept_incoming(channel_->read_frame_bytes()); }

SyncFrame Endpoint::exchange(const SyncFrame& out) {
  auto bytes = encode_frame(out);
  auto incoming = channel_->write_then_read(bytes);
  note_sent(bytes);
  SyncFrame in = accept_incoming(std::move(incoming));
  if (in.step != out.step) {
    throw ProtocolError("step mismatch: local " + std::to_string(out.step) + ", peer " +
                        std::to_string(in.step));
  }
  if (in.type != out.type) {
    throw ProtocolError("message type mismatch at step " + std::to_string(out.step) +
                        ": local " + to_string(out.type) + ", peer " + to_string(in.type));
  }
  return in;
}

// ---------------------------------------------------------------------------
// Loopback

namespace {

struct LoopbackState {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<std::vector<std::uint8_t>> inbox[2];
  bool closed[2] = {false, false};
};

class LoopbackChannel : public Channel {
 public:
  LoopbackChannel(std::shared_ptr<LoopbackState> state, int side)
      : state_(std::move(state)), side_(side) {}

  ~LoopbackChannel() override {
    std::lock_guard lock(state_->mutex);
    state_->closed[side_] = true;
    state_->ready.notify_all();
  }

  void write(std::span<const std::uint8_t> frame_bytes) override {
    std::lock_guard lock(state_->mutex);
    if (state_->closed[1 - side_]) throw ConnectionError("loopback peer closed");
    state_->inbox[1 - side_].emplace_back(frame_bytes.begin(), frame_bytes.end());
    state_->ready.notify_all();
  }

  std::vector<std::uint8_t> read_frame_bytes() override {
    std::unique_lock lock(state_->mutex);
    auto& box = state_->inbox[side_];
    state_->ready.wait(lock, [&] { return !box.empty() || state_->closed[1 - side_]; });
    if (box.empty()) throw ConnectionError("loopback peer disconnected");
    auto bytes = std::move(box.front());
    box.pop_front();
    return bytes;
  }

 private:
  std::shared_ptr<LoopbackState> state_;
  int side_;
};

// ---------------------------------------------------------------------------
// TCP

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

class TcpChannel : public Channel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpChannel() override { ::close(fd_); }

  void write(std::span<const std::uint8_t> bytes) override {
    std::size_t done = 0;
    while (done < bytes.size()) {
      const ssize_t n = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ConnectionError(errno_text("send"));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  std::vector<std::uint8_t> read_frame_bytes() override {
    std::vector<std::uint8_t> bytes(kFrameHeaderSize);
    read_exact(bytes.data(), kFrameHeaderSize);
    const std::uint32_t len = peek_payload_len(bytes);
    bytes.resize(kFrameOverhead + len);
    read_exact(bytes.data() + kFrameHeaderSize, len + kFrameTrailerSize);
    return bytes;
  }

  std::vector<std::uint8_t> write_then_read(std::span<const std::uint8_t> bytes) override {
    // Both peers write at once; a concurrent writer keeps large frames from
    // filling both socket buffers.
    std::exception_ptr write_error;
    std::thread writer([&] {
      try {
        write(bytes);
      } catch (...) {
        write_error = std::current_exception();
      }
    });
    std::vector<std::uint8_t> in;
    std::exception_ptr read_error;
    try {
      in = read_frame_bytes();
    } catch (...) {
      read_error = std::current_exception();
      ::shutdown(fd_, SHUT_RDWR);
    }
    writer.join();
    if (write_error) std::rethrow_exception(write_error);
    if (read_error) std::rethrow_exception(read_error);
    return in;
  }

 private:
  void read_exact(std::uint8_t* dst, std::size_t n) {
    std::size_t done = 0;
    while (done < n) {
      const ssize_t got = ::recv(fd_, dst + done, n - done, 0);
      if (got == 0) throw ConnectionError("peer closed the TCP connection");
      if (got < 0) {
        if (errno == EINTR) continue;
        throw ConnectionError(errno_text("recv"));
      }
      done += static_cast<std::size_t>(got);
    }
  }

  int fd_;
};

}  // namespace

std::pair<Endpoint, Endpoint> make_loopback_pair() {
  auto state = std::make_shared<LoopbackState>();
  return {Endpoint(TransportMode::Loopback, std::make_unique<LoopbackChannel>(state, 0)),
          Endpoint(TransportMode::Loopback, std::make_unique<LoopbackChannel>(state, 1))};
}

TcpListener::TcpListener(std::uint16_t port, const std::string& bind_address) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw ConnectionError(errno_text("socket"));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw ConnectionError("bad bind address '" + bind_address + "'");
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 ||
      ::listen(fd_, 1) < 0) {
    const std::string msg = errno_text("bind/listen");
    ::close(fd_);
    throw ConnectionError(msg);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

Endpoint TcpListener::accept(std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  const int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  if (ready <= 0) throw ConnectionError("timed out waiting for a TCP peer");
  const int conn = ::accept(fd_, nullptr, nullptr);
  if (conn < 0) throw ConnectionError(errno_text("accept"));
  return Endpoint(TransportMode::Tcp, std::make_unique<TcpChannel>(conn));
}

Endpoint tcp_connect(const std::string& host, std::uint16_t port,
                     std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &found) != 0 || !found) {
    throw ConnectionError("cannot resolve '" + host + "'");
  }
  const sockaddr_in target = *reinterpret_cast<sockaddr_in*>(found->ai_addr);
  ::freeaddrinfo(found);

  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ConnectionError(errno_text("socket"));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&target), sizeof(target)) == 0) {
      return Endpoint(TransportMode::Tcp, std::make_unique<TcpChannel>(fd));
    }
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) {
      throw ConnectionError("could not connect to " + host + ":" + std::to_string(port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

std::pair<Endpoint, Endpoint> make_tcp_pair() {
  TcpListener listener(0);
  Endpoint client = tcp_connect("127.0.0.1", listener.port());
  Endpoint server = listener.accept();
  return {std::move(client), std::move(server)};
}

std::pair<Endpoint, Endpoint> make_endpoint_pair(TransportMode mode) {
  return mode == TransportMode::Tcp ? make_tcp_pair() : make_loopback_pair();
}

// ---------------------------------------------------------------------------
// FrameLog persistence

void FrameLog::save(const std::filesystem::path& dir, const std::string& stem) const {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir / (stem + ".bin"), std::ios::binary);
  nlohmann::json index;
  index["collaborator_domain"] = collaborator_domain;
  index["target_domain"] = target_domain;
  index["extractor_params"] = extractor_params;
  index["frames"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& rec : records) {
    bin.write(reinterpret_cast<const char*>(rec.bytes.data()),
              static_cast<std::streamsize>(rec.bytes.size()));
    SyncFrame f = decode_frame(rec.bytes);
    index["frames"].push_back({{"offset", offset},
                               {"length", rec.bytes.size()},
                               {"direction", rec.direction == Direction::Sent ? "sent" : "received"},
                               {"msg_type", to_string(f.type)},
                               {"domain_id", f.domain_id},
                               {"step", f.step}});
    offset += rec.bytes.size();
  }
  if (!bin) throw std::runtime_error("failed writing " + (dir / (stem + ".bin")).string());
  std::ofstream(dir / (stem + ".json")) << index.dump(2) << '\n';
}

FrameLog FrameLog::load(const std::filesystem::path& dir, const std::string& stem) {
  std::ifstream index_file(dir / (stem + ".json"));
  if (!index_file) throw std::runtime_error("missing frame index " + (dir / (stem + ".json")).string());
  const nlohmann::json index = nlohmann::json::parse(index_file);
  std::ifstream bin(dir / (stem + ".bin"), std::ios::binary);
  std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(bin)),
                                 std::istreambuf_iterator<char>());
  FrameLog log;
  log.collaborator_domain = index.at("collaborator_domain").get<std::uint16_t>();
  log.target_domain = index.at("target_domain").get<std::uint16_t>();
  log.extractor_params = index.at("extractor_params").get<std::size_t>();
  for (const auto& entry : index.at("frames")) {
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto length = entry.at("length").get<std::size_t>();
    if (offset + length > blob.size()) throw DecodeError("frame index points past the log");
    std::vector<std::uint8_t> bytes(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                                    blob.begin() + static_cast<std::ptrdiff_t>(offset + length));
    const Direction dir_flag =
        entry.at("direction").get<std::string>() == "sent" ? Direction::Sent : Direction::Received;
    log.records.push_back({dir_flag, std::move(bytes)});
  }
  return log;
}

}  // namespace dda
