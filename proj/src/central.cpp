#include "dpmkv/central.hpp"

#include <algorithm>

#include "dpmkv/rpc.hpp"

namespace dpmkv {

namespace {

constexpr int kLockWaitToken = -7777;

std::vector<uint64_t> capacities(const Fabric& f, const std::vector<int>& devs) {
  std::vector<uint64_t> caps(f.device_count(), 0);
  for (int d : devs) caps[d] = f.device(d).capacity();
  return caps;
}

uint64_t key_token(const std::string& key) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void local_wait(TaskCtx& ctx, const std::string& key) {
  if (ctx.sched && ctx.sched->running()) {
    ctx.sched->retry_hint(ctx, kLockWaitToken, key_token(key), 1);
    ctx.sched->yield(ctx);
  }
}

void local_notify(TaskCtx& ctx, const std::string& key) {
  if (ctx.sched && ctx.sched->running()) {
    ctx.sched->notify_touch(kLockWaitToken, key_token(key), 1);
  }
}

}  // namespace

CentralStore::CentralStore(Fabric& fabric, CentralConfig cfg)
    : fabric_(fabric), cfg_(std::move(cfg)),
      alloc_(capacities(fabric, cfg_.devices)) {
  if (cfg_.devices.empty()) raise(Err::Config, "central store needs devices");
  if (cfg_.replication < 1 ||
      cfg_.replication > static_cast<int>(cfg_.devices.size())) {
    raise(Err::Config, "replication exceeds device count");
  }
}

void CentralStore::lock_key(TaskCtx& ctx, const std::string& key, KeyMeta& m,
                            bool write) {
  while (true) {
    if (!m.writer && (!write || m.readers == 0)) break;
    local_wait(ctx, key);
  }
  if (write) {
    m.writer = true;
  } else {
    ++m.readers;
  }
  reclaim_deferred(m);
}

void CentralStore::unlock_key(TaskCtx& ctx, const std::string& key, KeyMeta& m,
                              bool write) {
  if (write) {
    m.writer = false;
  } else {
    --m.readers;
  }
  local_notify(ctx, key);
}

void CentralStore::reclaim_deferred(KeyMeta& m) {
  for (const auto& s : m.pending_free) alloc_.free(s, m.size);
  m.pending_free.clear();
}

const ChunkAllocator::Slot& CentralStore::pick_replica(const KeyMeta& m) const {
  const ChunkAllocator::Slot* best = nullptr;
  for (const auto& s : m.committed) {
    if (fabric_.device(s.device).state() != DeviceState::Alive) continue;
    if (!cfg_.lb_reads) return s;
    if (!best ||
        fabric_.meter().device_bytes(s.device) <
            fabric_.meter().device_bytes(best->device)) {
      best = &s;
    }
  }
  if (!best) raise(Err::DeviceUnavailable, "no live replica");
  return *best;
}

void CentralStore::flush_meta(TaskCtx& ctx, const std::string& key,
                              const KeyMeta& m) {
  LogRec rec{key, m.size, m.committed};
  metadata_log_.push_back(rec);
  fabric_.flush_event(ctx);  // durability point, zero network rounds
  backup_[key] = std::move(rec);
}

void CentralStore::cache_store(const std::string& key, const Bytes& payload) {
  if (cfg_.data_cache_entries == 0) return;
  auto it = cache_.find(key);
  if (it != cache_.end()) {
    it->second = payload;
    return;
  }
  while (cache_.size() >= cfg_.data_cache_entries && !cache_fifo_.empty()) {
    cache_.erase(cache_fifo_.front());
    cache_fifo_.pop_front();
  }
  cache_.emplace(key, payload);
  cache_fifo_.push_back(key);
}

void CentralStore::create(TaskCtx& ctx, const std::string& key,
                          uint32_t size) {
  if (size % kWordBytes != 0) {
    raise(Err::Config, "entry size must be word-aligned");
  }
  fabric_.msg_round(ctx, ctx.ep, Endpoint::coord(), msg_bytes(key, 4),
                    kMsgHdrBytes + 1);
  KeyMeta m;
  m.size = size;
  for (int r = 0; r < cfg_.replication; ++r) {
    std::vector<int> pref;
    for (size_t i = 0; i < cfg_.devices.size(); ++i) {
      int d = cfg_.devices[(r + i) % cfg_.devices.size()];
      bool used = false;
      for (const auto& s : m.committed) used = used || s.device == d;
      if (!used) pref.push_back(d);
    }
    auto slot = alloc_.alloc(size, pref);
    if (!slot) raise(Err::OutOfSpace, "no space for entry");
    m.committed.push_back(*slot);
  }
  auto rec = meta_.create(ctx, key, std::move(m));
  flush_meta(ctx, key, *rec);
}

void CentralStore::del(TaskCtx& ctx, const std::string& key) {
  fabric_.msg_round(ctx, ctx.ep, Endpoint::coord(), msg_bytes(key, 0),
                    kMsgHdrBytes + 1);
  auto rec = meta_.require(key);
  lock_key(ctx, key, *rec, /*write=*/true);
  meta_.erase(ctx, key);
  for (const auto& s : rec->committed) alloc_.free(s, rec->size);
  reclaim_deferred(*rec);
  metadata_log_.push_back(LogRec{key, rec->size, {}});
  fabric_.flush_event(ctx);
  backup_.erase(key);
  cache_.erase(key);
  unlock_key(ctx, key, *rec, true);
}

Bytes CentralStore::handle_get(TaskCtx& ctx, const std::string& key) {
  auto rec = meta_.require(key);
  lock_key(ctx, key, *rec, /*write=*/false);
  Bytes payload;
  try {
    if (!meta_.find(key)) raise(Err::KeyNotFound, "deleted: " + key);
    auto it = cfg_.data_cache_entries ? cache_.find(key) : cache_.end();
    if (cfg_.data_cache_entries && it != cache_.end()) {
      ++cache_hits_;
      payload = it->second;
    } else {
      const auto& slot = pick_replica(*rec);
      payload = fabric_.read(ctx, slot.device, slot.addr, rec->size, true,
                             Endpoint::coord());
      cache_store(key, payload);
    }
  } catch (...) {
    unlock_key(ctx, key, *rec, false);
    throw;
  }
  unlock_key(ctx, key, *rec, false);
  return payload;
}

void CentralStore::handle_put(TaskCtx& ctx, const std::string& key,
                              ByteSpan value) {
  auto rec = meta_.require(key);
  if (value.size() > rec->size) raise(Err::ValueTooLarge, "value too large");
  Bytes padded(rec->size, 0);
  std::copy(value.begin(), value.end(), padded.begin());

  // Out-of-place: fresh spaces need no lock, nobody else can see them yet.
  uint64_t put_id = next_put_id_++;
  auto& flight = in_flight_[put_id];
  flight.key = key;
  for (int r = 0; r < cfg_.replication; ++r) {
    std::vector<int> pref;
    for (int d : cfg_.devices) {
      bool used = false;
      for (const auto& s : flight.slots) used = used || s.device == d;
      if (!used) pref.push_back(d);
    }
    // Direct new writes at the lighter-loaded devices.
    std::stable_sort(pref.begin(), pref.end(), [&](int a, int b) {
      return fabric_.meter().device_bytes(a) < fabric_.meter().device_bytes(b);
    });
    auto slot = alloc_.alloc(rec->size, pref);
    if (!slot) {
      for (const auto& s : flight.slots) alloc_.free(s, rec->size);
      in_flight_.erase(put_id);
      raise(Err::OutOfSpace, "free pool exhausted");
    }
    flight.slots.push_back(*slot);
  }

  std::vector<OneSidedOp> writes, reads;
  for (const auto& s : flight.slots) {
    writes.push_back(OneSidedOp::write(s.device, s.addr, padded, true));
    reads.push_back(OneSidedOp::read(s.device, s.addr + rec->size - 1, 1));
  }
  bool failed = false;
  Err fail_err = Err::DeviceUnavailable;
  for (auto& res : fabric_.batch(ctx, std::move(writes), Endpoint::coord())) {
    if (!res.ok) {
      failed = true;
      fail_err = res.err;
    }
  }
  if (!failed) {
    for (auto& res : fabric_.batch(ctx, std::move(reads), Endpoint::coord())) {
      if (!res.ok) {
        failed = true;
        fail_err = res.err;
      }
    }
  }
  if (failed) {
    // Keep the in-flight record for recover_device; slots on live devices
    // go straight back to the pool.
    std::vector<ChunkAllocator::Slot> keep;
    for (const auto& s : flight.slots) {
      if (fabric_.device(s.device).state() == DeviceState::Alive) {
        alloc_.free(s, rec->size);
      } else {
        keep.push_back(s);
      }
    }
    flight.slots = std::move(keep);
    if (flight.slots.empty()) in_flight_.erase(put_id);
    raise(fail_err, "put aborted by device failure");
  }

  lock_key(ctx, key, *rec, /*write=*/true);
  if (!meta_.find(key)) {
    for (const auto& s : flight.slots) alloc_.free(s, rec->size);
    in_flight_.erase(put_id);
    unlock_key(ctx, key, *rec, true);
    raise(Err::KeyNotFound, "deleted: " + key);
  }
  auto old = rec->committed;
  rec->committed = flight.slots;
  flush_meta(ctx, key, *rec);
  flight.flushed = true;
  for (const auto& s : old) rec->pending_free.push_back(s);
  cache_store(key, padded);
  unlock_key(ctx, key, *rec, true);
  in_flight_.erase(put_id);
}

Bytes CentralStore::get(TaskCtx& ctx, const std::string& key) {
  Bytes req = encode_msg(MsgKind::GetReq, key, {});
  auto rec = meta_.find(key);
  uint32_t size = rec ? rec->size : 0;
  fabric_.msg_round(ctx, ctx.ep, Endpoint::coord(), req.size(),
                    kMsgHdrBytes + size, size);
  DecodedMsg dm = decode_msg(req);
  Bytes payload = handle_get(ctx, dm.key);
  Bytes resp = encode_msg(MsgKind::GetResp, "", payload);
  return std::move(decode_msg(resp).value);
}

void CentralStore::put(TaskCtx& ctx, const std::string& key, ByteSpan value) {
  Bytes req = encode_msg(MsgKind::PutReq, key, value);
  fabric_.msg_round(ctx, ctx.ep, Endpoint::coord(), req.size(),
                    kMsgHdrBytes + 1, value.size());
  DecodedMsg dm = decode_msg(req);
  handle_put(ctx, dm.key, dm.value);
}

void CentralStore::recover_device(TaskCtx& ctx, int device) {
  (void)ctx;
  // Committed data was validated durable before its flush, so entries whose
  // committed copy lives here need no repair. Puts the crash interrupted
  // roll back: an unflushed redo copy is discarded, whatever its state.
  for (auto it = in_flight_.begin(); it != in_flight_.end();) {
    auto& flight = it->second;
    bool touches = false;
    for (const auto& s : flight.slots) touches = touches || s.device == device;
    if (touches && !flight.flushed) {
      auto rec = meta_.find(flight.key);
      if (rec) {
        for (const auto& s : flight.slots) alloc_.free(s, rec->size);
      }
      it = in_flight_.erase(it);
    } else {
      ++it;
    }
  }
}

void CentralStore::fail_over_to_backup() {
  TaskCtx& ctx = fabric_.external_ctx();
  std::vector<std::string> keys;
  meta_.for_each([&](const std::string& k, const KeyMeta&) { keys.push_back(k); });
  for (const auto& k : keys) meta_.erase(ctx, k);
  for (const auto& [k, rec] : backup_) {
    KeyMeta m;
    m.size = rec.size;
    m.committed = rec.committed;
    meta_.create(ctx, k, std::move(m));
  }
  cache_.clear();
  cache_fifo_.clear();
}

bool CentralStore::log_replay_matches() const {
  std::map<std::string, LogRec> folded;
  for (const auto& rec : metadata_log_) {
    if (rec.committed.empty()) {
      folded.erase(rec.key);
    } else {
      folded[rec.key] = rec;
    }
  }
  bool ok = true;
  size_t live = 0;
  meta_.for_each([&](const std::string& k, const KeyMeta& m) {
    ++live;
    auto it = folded.find(k);
    if (it == folded.end()) {
      ok = false;
      return;
    }
    if (it->second.committed.size() != m.committed.size()) {
      ok = false;
      return;
    }
    for (size_t i = 0; i < m.committed.size(); ++i) {
      if (it->second.committed[i].device != m.committed[i].device ||
          it->second.committed[i].addr != m.committed[i].addr) {
        ok = false;
      }
    }
  });
  return ok && live == folded.size();
}

uint64_t CentralStore::cn_metadata_bytes(int /*cn*/) const {
  // Compute nodes keep keys only; locations live at the coordinator.
  uint64_t total = 0;
  meta_.for_each([&](const std::string& key, const KeyMeta&) {
    total += key.size();
  });
  return total;
}

}  // namespace dpmkv
