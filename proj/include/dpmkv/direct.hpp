#pragma once

#include <array>
#include <atomic>
#include <vector>

#include "dpmkv/alloc.hpp"
#include "dpmkv/fabric.hpp"
#include "dpmkv/kv.hpp"
#include "dpmkv/registry.hpp"

namespace dpmkv {

// Direct-connection store: compute nodes reach devices with one-sided ops
// only. Every entry owns two fixed spaces per replica — committed (where
// reads go) and uncommitted (the redo copy written first) — so no space is
// ever allocated after create. An 8-byte word at the start of the committed
// space is the entry lock, acquired by CAS 0->1 and released by writing 0.
//
// Two read protocols share the write path:
//   lock variant  — lock, read, unlock (3 RTTs); writes frame the payload
//                   with a per-write unique tag at both ends.
//   crc variant   — single read validated by a CRC stored next to the
//                   payload (1 RTT, unbounded retry under contention).
struct DirectConfig {
  bool crc_variant = false;
  int replication = 1;
  std::vector<int> devices;
};

class DirectStore : public KvStore {
 public:
  DirectStore(Fabric& fabric, DirectConfig cfg);

  void create(TaskCtx& ctx, const std::string& key, uint32_t size) override;
  void put(TaskCtx& ctx, const std::string& key, ByteSpan value) override;
  Bytes get(TaskCtx& ctx, const std::string& key) override;
  void del(TaskCtx& ctx, const std::string& key) override;
  void recover_device(TaskCtx& ctx, int device) override;
  uint64_t cn_metadata_bytes(int cn) const override;
  StoreKind kind() const override {
    return cfg_.crc_variant ? StoreKind::DirectCrc : StoreKind::DirectLock;
  }

  // Audit hook: DPM bytes held by one entry on one replica device.
  uint64_t allocated_bytes(const std::string& key) const;

 private:
  struct Meta {
    uint32_t size = 0;
    // One (committed, uncommitted) pair per replica; uncommitted space
    // starts space_bytes after committed on the same device.
    std::vector<ChunkAllocator::Slot> replicas;
  };

  uint32_t space_bytes(uint32_t size) const;
  uint64_t payload_off() const { return 16; }
  uint64_t next_tag(TaskCtx& ctx);
  void lock_entry(TaskCtx& ctx, const ChunkAllocator::Slot& primary);
  void unlock_entry(TaskCtx& ctx, const ChunkAllocator::Slot& primary);
  Bytes framed(const Meta& meta, ByteSpan value, uint64_t tag) const;
  bool space_valid(ByteSpan frame, uint32_t size) const;
  const ChunkAllocator::Slot& live_replica(const Meta& meta) const;

  Fabric& fabric_;
  DirectConfig cfg_;
  Registry<Meta> registry_;
  ChunkAllocator alloc_;
  std::array<std::atomic<uint64_t>, 64> tag_counters_{};
  std::atomic<uint32_t> rr_{0};
};

}  // namespace dpmkv
