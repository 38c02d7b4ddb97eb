#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpmkv {

using Bytes = std::vector<uint8_t>;
using ByteSpan = std::span<const uint8_t>;

// Atomic grain of the fabric. Every write is applied as sub-writes of at
// most this many bytes, split at aligned word boundaries.
inline constexpr uint32_t kWordBytes = 8;

enum class Err {
  DeviceUnavailable,
  OutOfRange,
  Misaligned,
  RecoverOnDead,
  BoundExceeded,
  Deadlock,
  KeyExists,
  KeyNotFound,
  ValueTooLarge,
  OutOfSpace,
  ReadTimeout,
  Corrupt,
  Config,
};

class SimError : public std::runtime_error {
 public:
  SimError(Err code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void raise(Err code, const std::string& msg) {
  throw SimError(code, msg);
}

inline const char* err_name(Err e) {
  switch (e) {
    case Err::DeviceUnavailable: return "DeviceUnavailable";
    case Err::OutOfRange: return "OutOfRange";
    case Err::Misaligned: return "Misaligned";
    case Err::RecoverOnDead: return "RecoverOnDead";
    case Err::BoundExceeded: return "BoundExceeded";
    case Err::Deadlock: return "Deadlock";
    case Err::KeyExists: return "KeyExists";
    case Err::KeyNotFound: return "KeyNotFound";
    case Err::ValueTooLarge: return "ValueTooLarge";
    case Err::OutOfSpace: return "OutOfSpace";
    case Err::ReadTimeout: return "ReadTimeout";
    case Err::Corrupt: return "Corrupt";
    case Err::Config: return "Config";
  }
  return "?";
}

// Little-endian word packing, independent of host order.
inline uint64_t load_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline void store_u64(uint8_t* p, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    p[i] = static_cast<uint8_t>(v & 0xff);
    v >>= 8;
  }
}

inline uint64_t load_u64(ByteSpan s, size_t off = 0) {
  return load_u64(s.data() + off);
}

// Network endpoints. A link is an unordered endpoint pair.
struct Endpoint {
  enum class Kind : uint8_t { Cn, Coord, Ms, Dpm, Ext };
  Kind kind = Kind::Ext;
  int16_t index = 0;

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;

  static Endpoint cn(int i) { return {Kind::Cn, static_cast<int16_t>(i)}; }
  static Endpoint coord() { return {Kind::Coord, 0}; }
  static Endpoint ms() { return {Kind::Ms, 0}; }
  static Endpoint dpm(int i) { return {Kind::Dpm, static_cast<int16_t>(i)}; }
  static Endpoint ext() { return {Kind::Ext, 0}; }

  std::string str() const {
    switch (kind) {
      case Kind::Cn: return "cn" + std::to_string(index);
      case Kind::Coord: return "coord";
      case Kind::Ms: return "ms";
      case Kind::Dpm: return "dpm" + std::to_string(index);
      case Kind::Ext: return "ext";
    }
    return "?";
  }
};

class Scheduler;
class Fabric;

// Execution context of one protocol task. Created by the scheduler (or by
// Fabric::external_ctx for direct, unscheduled access).
struct TaskCtx {
  int id = -1;
  std::string name = "ext";
  Endpoint ep = Endpoint::ext();
  Scheduler* sched = nullptr;
};

}  // namespace dpmkv
