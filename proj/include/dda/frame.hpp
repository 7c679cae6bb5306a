// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dda {

// Wire layout (little-endian):
//   0  magic "FRDA"      4 bytes
//   4  version           u8  (= 1)
//   5  msg_type          u8
//   6  domain_id         u16
//   8  step              u32
//  12  payload_len       u32 (bytes)
//  16  payload           payload_len bytes
//  ..  crc32             u32 over header + payload
inline constexpr std::array<std::uint8_t, 4> kFrameMagic = {'F', 'R', 'D', 'A'};
inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 16;
inline constexpr std::size_t kFrameTrailerSize = 4;
inline constexpr std::size_t kFrameOverhead = kFrameHeaderSize + kFrameTrailerSize;
/// Decoder refuses payloads above this size.
inline constexpr std::uint32_t kMaxPayloadBytes = 1u << 30;

enum class MsgType : std::uint8_t {
  Hello = 0,
  DiscGradBuffer = 1,
  W1Stats = 2,
  ModelInit = 3,
  Bye = 4,
};

std::string to_string(MsgType type);

struct SyncFrame {
  MsgType type = MsgType::Hello;
  std::uint16_t domain_id = 0;
  std::uint32_t step = 0;
  std::vector<std::uint8_t> payload;

  static SyncFrame with_reals(MsgType type, std::uint16_t domain_id, std::uint32_t step,
                              std::span<const float> reals);
  /// Payload decoded as little-endian float32 values.
  std::vector<float> reals() const;
  std::size_t encoded_size() const { return kFrameOverhead + payload.size(); }

  bool operator==(const SyncFrame&) const = default;
};

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class TruncatedFrameError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};
class BadMagicError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};
class VersionMismatchError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};
class CrcMismatchError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};
/// Unknown message type, bad payload length, or trailing bytes.
class MalformedFrameError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

std::vector<std::uint8_t> encode_frame(const SyncFrame& frame);
SyncFrame decode_frame(std::span<const std::uint8_t> bytes);

/// Reads payload_len out of a complete 16-byte header (after magic/version
/// checks); used by stream readers to size the remaining read.
std::uint32_t peek_payload_len(std::span<const std::uint8_t> header);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace dda
