#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "dpmkv/common.hpp"

namespace dpmkv {

enum class DeviceState : uint8_t { Alive, Crashed, Dead };

// A passive memory device. Writes are applied as 8-byte sub-writes in
// increasing address order; an ack does not imply durability. A later read
// on the same connection confirms every earlier write whose last byte lies
// at or below the read's coverage point (ordered delivery). A successful
// CAS is durable immediately.
//
// Crash truncates the image to the durable state: all confirmed sub-writes
// plus an arbitrary prefix (per connection, in issue order) of the
// unconfirmed ones. The prefix is a parameter so a fault harness can
// enumerate every survivable image.
class DpmDevice {
 public:
  DpmDevice(int id, uint64_t capacity, bool track_durability);

  int id() const { return id_; }
  uint64_t capacity() const { return capacity_; }
  DeviceState state() const { return state_; }
  bool tracking() const { return tracking_; }

  Bytes read(int conn, uint64_t addr, uint64_t len);
  // parent_end overrides the last-byte address of the logical write this
  // data belongs to, letting the fabric apply one write as several calls.
  void write(int conn, uint64_t addr, ByteSpan data,
             std::optional<uint64_t> parent_end = std::nullopt);
  uint64_t cas(int conn, uint64_t addr, uint64_t expect, uint64_t desired);

  // keep_prefix: number of pending sub-writes (in global apply order across
  // connections) that survive in addition to the confirmed state. nullopt
  // keeps none — the adversarial minimum.
  void crash(bool permanent, std::optional<uint64_t> keep_prefix);
  void recover();

  uint64_t pending_subwrites() const;
  uint64_t confirmed_subwrites(int conn) const;

  // Test access: raw views of the current and durable images.
  ByteSpan applied_view() const { return applied_; }
  ByteSpan durable_view() const;

 private:
  struct SubWrite {
    uint64_t seq;
    uint64_t addr;
    uint8_t len;
    uint8_t data[kWordBytes];
    uint64_t parent_end;  // last byte address of the whole write op
  };

  void require_alive() const;
  void check_range(uint64_t addr, uint64_t len) const;
  void apply_durable(const SubWrite& w);
  void confirm_through(int conn, uint64_t coverage_end);

  int id_;
  uint64_t capacity_;
  bool tracking_;
  DeviceState state_ = DeviceState::Alive;
  Bytes applied_;
  Bytes durable_;                     // tracking mode only
  std::vector<uint64_t> word_seq_;    // last durable seq per aligned word
  std::unordered_map<uint64_t, uint64_t> byte_seq_;  // partial-word bytes
  std::map<int, std::deque<SubWrite>> pending_;
  std::map<int, uint64_t> confirmed_count_;
  uint64_t next_seq_ = 1;
};

}  // namespace dpmkv
