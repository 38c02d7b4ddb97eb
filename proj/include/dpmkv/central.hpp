#pragma once

#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "dpmkv/alloc.hpp"
#include "dpmkv/fabric.hpp"
#include "dpmkv/kv.hpp"
#include "dpmkv/registry.hpp"

namespace dpmkv {

// Coordinator-mediated store. Compute nodes only speak RPC; the coordinator
// serializes per-key access with local read/write locks, performs
// out-of-place writes to the devices, and keeps all metadata in its local
// persistent memory. The metadata flush is the commit point: a put whose
// flush never happened rolls back on recovery.
struct CentralConfig {
  int replication = 1;
  std::vector<int> devices;
  uint32_t data_cache_entries = 0;  // FIFO write-through cache; 0 disables
  bool lb_reads = true;             // read the lighter-loaded live replica
};

class CentralStore : public KvStore {
 public:
  CentralStore(Fabric& fabric, CentralConfig cfg);

  void create(TaskCtx& ctx, const std::string& key, uint32_t size) override;
  void put(TaskCtx& ctx, const std::string& key, ByteSpan value) override;
  Bytes get(TaskCtx& ctx, const std::string& key) override;
  void del(TaskCtx& ctx, const std::string& key) override;
  void recover_device(TaskCtx& ctx, int device) override;
  uint64_t cn_metadata_bytes(int cn) const override;
  StoreKind kind() const override { return StoreKind::Central; }

  // Coordinator failover: primary key metadata is discarded and rebuilt
  // from the backup record.
  void fail_over_to_backup();
  // Metadata-log oracle: folding the flushed log must reproduce the live
  // committed locations.
  bool log_replay_matches() const;
  uint64_t cache_hits() const { return cache_hits_; }

 private:
  struct KeyMeta {
    uint32_t size = 0;
    std::vector<ChunkAllocator::Slot> committed;
    int readers = 0;
    bool writer = false;
    std::vector<ChunkAllocator::Slot> pending_free;
  };
  struct InFlight {
    std::string key;
    std::vector<ChunkAllocator::Slot> slots;
    bool flushed = false;
  };
  struct LogRec {
    std::string key;
    uint32_t size = 0;
    std::vector<ChunkAllocator::Slot> committed;  // empty means deleted
  };

  void lock_key(TaskCtx& ctx, const std::string& key, KeyMeta& m, bool write);
  void unlock_key(TaskCtx& ctx, const std::string& key, KeyMeta& m,
                  bool write);
  void reclaim_deferred(KeyMeta& m);
  const ChunkAllocator::Slot& pick_replica(const KeyMeta& m) const;
  void flush_meta(TaskCtx& ctx, const std::string& key, const KeyMeta& m);
  void cache_store(const std::string& key, const Bytes& payload);

  // Coordinator-side handlers, run inline under the caller's task.
  Bytes handle_get(TaskCtx& ctx, const std::string& key);
  void handle_put(TaskCtx& ctx, const std::string& key, ByteSpan value);

  Fabric& fabric_;
  CentralConfig cfg_;
  Registry<KeyMeta> meta_;
  ChunkAllocator alloc_;
  std::vector<LogRec> metadata_log_;  // simulated local PM, append-only
  std::map<std::string, LogRec> backup_;
  std::map<uint64_t, InFlight> in_flight_;
  uint64_t next_put_id_ = 1;
  // FIFO data cache
  std::map<std::string, Bytes> cache_;
  std::deque<std::string> cache_fifo_;
  uint64_t cache_hits_ = 0;
};

}  // namespace dpmkv
