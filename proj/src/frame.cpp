// SPDX-License-Identifier: Apache-2.0
#include "dda/frame.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include <zlib.h>

namespace dda {
namespace {

void store_le(std::uint8_t* p, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

bool carries_reals(MsgType type) {
  return type == MsgType::DiscGradBuffer || type == MsgType::W1Stats ||
         type == MsgType::ModelInit;
}

void check_magic_version(std::span<const std::uint8_t> bytes) {
  if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), bytes.begin())) {
    throw BadMagicError("frame magic is not FRDA");
  }
  if (bytes[4] != kFrameVersion) {
    throw VersionMismatchError("frame version " + std::to_string(bytes[4]) + ", expected " +
                               std::to_string(kFrameVersion));
  }
}

}  // namespace

std::string to_string(MsgType type) {
  switch (type) {
    case MsgType::Hello:
      return "Hello";
    case MsgType::DiscGradBuffer:
      return "DiscGradBuffer";
    case MsgType::W1Stats:
      return "W1Stats";
    case MsgType::ModelInit:
      return "ModelInit";
    case MsgType::Bye:
      return "Bye";
  }
  return "Unknown(" + std::to_string(static_cast<int>(type)) + ")";
}

SyncFrame SyncFrame::with_reals(MsgType type, std::uint16_t domain_id, std::uint32_t step,
                                std::span<const float> reals) {
  static_assert(std::endian::native == std::endian::little, "wire format assumes a LE host");
  SyncFrame f{type, domain_id, step, std::vector<std::uint8_t>(reals.size_bytes())};
  if (!reals.empty()) std::memcpy(f.payload.data(), reals.data(), reals.size_bytes());
  return f;
}

std::vector<float> SyncFrame::reals() const {
  if (payload.size() % 4 != 0) {
    throw MalformedFrameError("payload of " + std::to_string(payload.size()) +
                              " bytes is not a float32 array");
  }
  std::vector<float> out(payload.size() / 4);
  if (!out.empty()) std::memcpy(out.data(), payload.data(), payload.size());
  return out;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_frame(const SyncFrame& frame) {
  if (frame.payload.size() > kMaxPayloadBytes) throw MalformedFrameError("payload too large");
  std::vector<std::uint8_t> out(kFrameHeaderSize + frame.payload.size() + kFrameTrailerSize);
  std::uint8_t* p = out.data();
  std::memcpy(p, kFrameMagic.data(), kFrameMagic.size());
  p[4] = kFrameVersion;
  p[5] = static_cast<std::uint8_t>(frame.type);
  store_le(p + 6, frame.domain_id, 2);
  store_le(p + 8, frame.step, 4);
  store_le(p + 12, static_cast<std::uint32_t>(frame.payload.size()), 4);
  if (!frame.payload.empty()) {
    std::memcpy(p + kFrameHeaderSize, frame.payload.data(), frame.payload.size());
  }
  const std::size_t body = kFrameHeaderSize + frame.payload.size();
  store_le(p + body, crc32(std::span<const std::uint8_t>(out.data(), body)), 4);
  return out;
}

std::uint32_t peek_payload_len(std::span<const std::uint8_t> header) {
  if (header.size() < kFrameHeaderSize) throw TruncatedFrameError("incomplete frame header");
  check_magic_version(header);
  const std::uint32_t len = get_u32(header.data() + 12);
  if (len > kMaxPayloadBytes) throw MalformedFrameError("payload_len exceeds limit");
  return len;
}

SyncFrame decode_frame(std::span<const std::uint8_t> bytes) {
  const std::uint32_t len = peek_payload_len(bytes);
  const std::size_t total = kFrameOverhead + len;
  if (bytes.size() < total) {
    throw TruncatedFrameError("frame needs " + std::to_string(total) + " bytes, got " +
                              std::to_string(bytes.size()));
  }
  if (bytes.size() > total) {
    throw MalformedFrameError(std::to_string(bytes.size() - total) + " trailing bytes");
  }
  const std::uint32_t expected = get_u32(bytes.data() + kFrameHeaderSize + len);
  if (crc32(bytes.first(kFrameHeaderSize + len)) != expected) {
    throw CrcMismatchError("frame CRC mismatch");
  }
  const std::uint8_t raw_type = bytes[5];
  if (raw_type > static_cast<std::uint8_t>(MsgType::Bye)) {
    throw MalformedFrameError("unknown msg_type " + std::to_string(raw_type));
  }
  SyncFrame frame;
  frame.type = static_cast<MsgType>(raw_type);
  frame.domain_id = get_u16(bytes.data() + 6);
  frame.step = get_u32(bytes.data() + 8);
  if (carries_reals(frame.type) && len % 4 != 0) {
    throw MalformedFrameError(to_string(frame.type) + " payload length not a multiple of 4");
  }
  frame.payload.assign(bytes.begin() + kFrameHeaderSize,
                       bytes.begin() + kFrameHeaderSize + len);
  return frame;
}

}  // namespace dda
