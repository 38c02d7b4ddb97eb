#pragma once

#include <string>

#include "dpmkv/common.hpp"

namespace dpmkv {

// Self-describing test payloads: every 8-byte word encodes
// (key hash : 32 | generation : 24 | word index : 8), so any torn mixture of
// two generations or two keys is detectable from any two words.

inline uint32_t key_hash32(const std::string& key) {
  uint32_t h = 2166136261u;
  for (unsigned char c : key) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

inline uint64_t stamp_word(uint32_t key_hash, uint32_t generation,
                           uint32_t index) {
  return (uint64_t(key_hash) << 32) | (uint64_t(generation & 0xffffff) << 8) |
         uint64_t(index & 0xff);
}

inline Bytes make_stamped(const std::string& key, uint32_t generation,
                          uint32_t size_bytes) {
  if (size_bytes % kWordBytes != 0) {
    raise(Err::Config, "stamped size must be a word multiple");
  }
  Bytes out(size_bytes);
  uint32_t h = key_hash32(key);
  for (uint32_t i = 0; i < size_bytes / kWordBytes; ++i) {
    store_u64(out.data() + i * kWordBytes, stamp_word(h, generation, i));
  }
  return out;
}

struct StampReport {
  bool consistent = false;
  uint32_t key_hash = 0;
  uint32_t generation = 0;
  std::string detail;
};

inline StampReport stamp_check(ByteSpan bytes) {
  if (bytes.size() % kWordBytes != 0) {
    raise(Err::Config, "stamp_check needs a word multiple");
  }
  StampReport rep;
  if (bytes.empty()) {
    rep.consistent = true;
    return rep;
  }
  uint64_t first = load_u64(bytes, 0);
  rep.key_hash = uint32_t(first >> 32);
  rep.generation = uint32_t((first >> 8) & 0xffffff);
  for (size_t i = 0; i < bytes.size() / kWordBytes; ++i) {
    uint64_t w = load_u64(bytes, i * kWordBytes);
    uint32_t kh = uint32_t(w >> 32);
    uint32_t gen = uint32_t((w >> 8) & 0xffffff);
    if (kh != rep.key_hash || gen != rep.generation) {
      rep.consistent = false;
      rep.detail = "word " + std::to_string(i) + " carries key " +
                   std::to_string(kh) + " gen " + std::to_string(gen) +
                   ", word 0 carries key " + std::to_string(rep.key_hash) +
                   " gen " + std::to_string(rep.generation);
      return rep;
    }
  }
  rep.consistent = true;
  return rep;
}

}  // namespace dpmkv
