#include "dpmkv/alloc.hpp"

#include <numeric>

namespace dpmkv {

ChunkAllocator::ChunkAllocator(std::vector<uint64_t> device_capacities,
                               uint32_t chunk_slots)
    : chunk_slots_(chunk_slots), capacity_(std::move(device_capacities)) {
  bump_.assign(capacity_.size(), kWordBytes);  // word 0 reserved
}

std::optional<ChunkAllocator::Slot> ChunkAllocator::alloc(
    uint32_t slot_bytes, const std::vector<int>& device_pref) {
  std::vector<int> order = device_pref;
  if (order.empty()) {
    order.resize(capacity_.size());
    std::iota(order.begin(), order.end(), 0);
  }
  for (int dev : order) {
    auto it = free_.find({slot_bytes, dev});
    if (it != free_.end() && !it->second.empty()) {
      uint64_t addr = it->second.back();
      it->second.pop_back();
      return Slot{dev, addr};
    }
  }
  // Carve a fresh chunk on the first device with room.
  for (int dev : order) {
    uint64_t need = uint64_t(slot_bytes);
    if (bump_[dev] + need > capacity_[dev]) continue;
    uint64_t slots_left = (capacity_[dev] - bump_[dev]) / slot_bytes;
    uint64_t take = std::min<uint64_t>(slots_left, chunk_slots_);
    uint64_t base = bump_[dev];
    bump_[dev] += take * slot_bytes;
    auto& fl = free_[{slot_bytes, dev}];
    // First slot returned immediately; the rest join the free list so that
    // later allocations pop in ascending address order.
    for (uint64_t i = take; i-- > 1;) fl.push_back(base + i * slot_bytes);
    return Slot{dev, base};
  }
  return std::nullopt;
}

void ChunkAllocator::free(const Slot& s, uint32_t slot_bytes) {
  free_[{slot_bytes, s.device}].push_back(s.addr);
}

uint64_t ChunkAllocator::free_slots(uint32_t slot_bytes, int device) const {
  auto it = free_.find({slot_bytes, device});
  uint64_t n = it == free_.end() ? 0 : it->second.size();
  if (device >= 0 && device < int(capacity_.size()) &&
      bump_[device] < capacity_[device]) {
    n += (capacity_[device] - bump_[device]) / slot_bytes;
  }
  return n;
}

uint64_t ChunkAllocator::remaining_bytes(int device) const {
  return capacity_.at(device) - bump_.at(device);
}

}  // namespace dpmkv
