#pragma once

#include <string>

#include "dpmkv/common.hpp"

namespace dpmkv {

enum class StoreKind { DirectLock, DirectCrc, Central, Sep };

inline const char* store_kind_name(StoreKind k) {
  switch (k) {
    case StoreKind::DirectLock: return "direct-lock";
    case StoreKind::DirectCrc: return "direct-crc";
    case StoreKind::Central: return "central";
    case StoreKind::Sep: return "sep";
  }
  return "?";
}

// Common key-value surface of the four stores. Entries have a fixed size
// chosen at create; put pads shorter values with zeros. Calls are made from
// scheduler tasks (or the fabric's external context when quiescent).
class KvStore {
 public:
  virtual ~KvStore() = default;

  virtual void create(TaskCtx& ctx, const std::string& key,
                      uint32_t size) = 0;
  virtual void put(TaskCtx& ctx, const std::string& key, ByteSpan value) = 0;
  virtual Bytes get(TaskCtx& ctx, const std::string& key) = 0;
  virtual void del(TaskCtx& ctx, const std::string& key) = 0;

  // Work a store defers off the operation critical path (shortcut updates,
  // batched retirement, pool refill). No-op for stores without any.
  virtual void drain_background(TaskCtx& ctx) { (void)ctx; }

  // Store-level repair after a transient device failure; the fabric-level
  // recover() must have run first.
  virtual void recover_device(TaskCtx& ctx, int device) {
    (void)ctx;
    (void)device;
  }

  // Bytes of per-key metadata a compute node holds for its own use.
  virtual uint64_t cn_metadata_bytes(int cn) const {
    (void)cn;
    return 0;
  }

  virtual StoreKind kind() const = 0;
};

}  // namespace dpmkv
