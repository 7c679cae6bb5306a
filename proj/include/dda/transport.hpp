// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dda/frame.hpp"

namespace dda {

enum class TransportMode { Loopback, Tcp };
std::string to_string(TransportMode mode);
TransportMode transport_mode_from_string(const std::string& name);

/// Peer went away or the socket failed.
class ConnectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Peers disagree about where they are in the protocol.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TransportCounters {
  std::uint64_t frames_sent = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t frames_received = 0;
  std::uint64_t bytes_received = 0;

  bool operator==(const TransportCounters&) const = default;
};

enum class Direction { Sent, Received };

struct FrameRecord {
  Direction direction;
  std::vector<std::uint8_t> bytes;  // exactly as on the wire
};

/// Frames seen by one endpoint, in order. On disk: `<stem>.bin` holds the
/// encoded frames back to back and `<stem>.json` indexes them.
struct FrameLog {
  /// Domain id of the collaborator / candidate side of the run.
  std::uint16_t collaborator_domain = 0;
  std::uint16_t target_domain = 0;
  /// Parameter count of the extractor shared through ModelInit.
  std::size_t extractor_params = 0;
  std::vector<FrameRecord> records;

  void save(const std::filesystem::path& dir, const std::string& stem) const;
  static FrameLog load(const std::filesystem::path& dir, const std::string& stem);
};

/// Byte pipe carrying whole encoded frames.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void write(std::span<const std::uint8_t> frame_bytes) = 0;
  virtual std::vector<std::uint8_t> read_frame_bytes() = 0;
  /// Sends and receives one frame each. The default writes first; stream
  /// transports override it to write and read concurrently.
  virtual std::vector<std::uint8_t> write_then_read(std::span<const std::uint8_t> frame_bytes);
};

/// One side of a two-party connection, with byte accounting.
class Endpoint {
 public:
  Endpoint(TransportMode mode, std::unique_ptr<Channel> channel);
  Endpoint(Endpoint&&) noexcept = default;
  Endpoint& operator=(Endpoint&&) noexcept = default;

  void send(const SyncFrame& frame);
  SyncFrame receive();
  /// Lockstep rendezvous: both peers send a frame of the same type for the
  /// same step and receive the other's. Mismatches raise ProtocolError.
  SyncFrame exchange(const SyncFrame& out);

  TransportMode mode() const { return mode_; }
  const TransportCounters& counters() const { return counters_; }

  void record_frames(bool on) { recording_ = on; }
  FrameLog& log() { return log_; }
  const FrameLog& log() const { return log_; }

 private:
  SyncFrame accept_incoming(std::vector<std::uint8_t> bytes);
  void note_sent(const std::vector<std::uint8_t>& bytes);

  TransportMode mode_;
  std::unique_ptr<Channel> channel_;
  TransportCounters counters_;
  bool recording_ = false;
  FrameLog log_;
};

/// Two connected in-process endpoints.
std::pair<Endpoint, Endpoint> make_loopback_pair();

class TcpListener {
 public:
  /// Port 0 picks an ephemeral port.
  explicit TcpListener(std::uint16_t port, const std::string& bind_address = "127.0.0.1");
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  Endpoint accept(std::chrono::milliseconds timeout = std::chrono::minutes(5));

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Connects, retrying until `timeout` while the listener comes up.
Endpoint tcp_connect(const std::string& host, std::uint16_t port,
                     std::chrono::milliseconds timeout = std::chrono::seconds(30));

/// Two endpoints joined by a real TCP connection over 127.0.0.1.
std::pair<Endpoint, Endpoint> make_tcp_pair();

/// Pair in the requested mode.
std::pair<Endpoint, Endpoint> make_endpoint_pair(TransportMode mode);

}  // namespace dda
