#pragma once

#include <string>

#include "dpmkv/common.hpp"

namespace dpmkv {

// Two-way message framing, also the unit of byte accounting:
//   kind:1B | key_len:1B | key | value_len:4B little-endian | value
enum class MsgKind : uint8_t {
  GetReq,
  GetResp,
  PutReq,
  PutResp,
  Lookup,
  Create,
  AllocBuffers,
  RetireBatch,
  EpochPing,
};

inline constexpr uint64_t kMsgHdrBytes = 6;

inline uint64_t msg_bytes(const std::string& key, uint64_t value_len) {
  return kMsgHdrBytes + key.size() + value_len;
}

inline Bytes encode_msg(MsgKind kind, const std::string& key, ByteSpan value) {
  if (key.size() > 255) raise(Err::Config, "key too long for framing");
  Bytes out;
  out.reserve(kMsgHdrBytes + key.size() + value.size());
  out.push_back(static_cast<uint8_t>(kind));
  out.push_back(static_cast<uint8_t>(key.size()));
  out.insert(out.end(), key.begin(), key.end());
  uint32_t vlen = static_cast<uint32_t>(value.size());
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t(vlen >> (8 * i)));
  out.insert(out.end(), value.begin(), value.end());
  return out;
}

struct DecodedMsg {
  MsgKind kind;
  std::string key;
  Bytes value;
};

inline DecodedMsg decode_msg(ByteSpan bytes) {
  if (bytes.size() < kMsgHdrBytes) raise(Err::Corrupt, "short message");
  DecodedMsg m;
  m.kind = static_cast<MsgKind>(bytes[0]);
  uint8_t klen = bytes[1];
  if (bytes.size() < 2u + klen + 4u) raise(Err::Corrupt, "truncated key");
  m.key.assign(bytes.begin() + 2, bytes.begin() + 2 + klen);
  uint32_t vlen = 0;
  for (int i = 3; i >= 0; --i) vlen = (vlen << 8) | bytes[2 + klen + i];
  if (bytes.size() != kMsgHdrBytes + klen + vlen) {
    raise(Err::Corrupt, "bad value length");
  }
  m.value.assign(bytes.begin() + 2 + klen + 4, bytes.end());
  return m;
}

}  // namespace dpmkv
