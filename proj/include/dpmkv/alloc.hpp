#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "dpmkv/common.hpp"

namespace dpmkv {

// Carves device space into chunks of uniform slot size and recycles freed
// slots per (size class, device). Word 0 of every device is reserved so a
// zero pointer is never a valid location.
class ChunkAllocator {
 public:
  struct Slot {
    int device = -1;
    uint64_t addr = 0;
  };

  ChunkAllocator(std::vector<uint64_t> device_capacities,
                 uint32_t chunk_slots = 64);

  // Tries devices in the given preference order; any device when empty.
  std::optional<Slot> alloc(uint32_t slot_bytes,
                            const std::vector<int>& device_pref = {});
  void free(const Slot& s, uint32_t slot_bytes);

  uint64_t free_slots(uint32_t slot_bytes, int device) const;
  uint64_t remaining_bytes(int device) const;
  int device_count() const { return static_cast<int>(bump_.size()); }

 private:
  uint32_t chunk_slots_;
  std::vector<uint64_t> capacity_;
  std::vector<uint64_t> bump_;
  // (slot_bytes, device) -> free slot addresses
  std::map<std::pair<uint32_t, int>, std::vector<uint64_t>> free_;
};

}  // namespace dpmkv
