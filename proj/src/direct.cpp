#include "dpmkv/direct.hpp"

#include <algorithm>

#include "dpmkv/crc32c.hpp"

namespace dpmkv {

namespace {

std::vector<uint64_t> capacities(const Fabric& f, const std::vector<int>& devs) {
  std::vector<uint64_t> caps(f.device_count(), 0);
  for (int d : devs) caps[d] = f.device(d).capacity();
  return caps;
}

int cn_index(const TaskCtx& ctx) {
  return ctx.ep.kind == Endpoint::Kind::Cn ? ctx.ep.index : 63;
}

}  // namespace

DirectStore::DirectStore(Fabric& fabric, DirectConfig cfg)
    : fabric_(fabric), cfg_(std::move(cfg)),
      alloc_(capacities(fabric, cfg_.devices)) {
  if (cfg_.devices.empty()) raise(Err::Config, "direct store needs devices");
  if (cfg_.replication < 1 ||
      cfg_.replication > static_cast<int>(cfg_.devices.size())) {
    raise(Err::Config, "replication exceeds device count");
  }
}

uint32_t DirectStore::space_bytes(uint32_t size) const {
  // [lock][frame word][payload] plus a trailing tag word in the lock
  // variant; sizes stay word-aligned.
  uint32_t s = 16 + size;
  if (!cfg_.crc_variant) s += 8;
  return s;
}

uint64_t DirectStore::next_tag(TaskCtx& ctx) {
  int cn = cn_index(ctx);
  uint64_t n = ++tag_counters_[cn];
  return (uint64_t(cn + 1) << 48) | n;
}

void DirectStore::create(TaskCtx& ctx, const std::string& key, uint32_t size) {
  if (size % kWordBytes != 0) {
    raise(Err::Config, "entry size must be word-aligned");
  }
  Meta meta;
  meta.size = size;
  uint32_t sb = space_bytes(size);
  uint32_t start = rr_++;
  for (int r = 0; r < cfg_.replication; ++r) {
    int dev = cfg_.devices[(start + r) % cfg_.devices.size()];
    std::vector<int> pref = {dev};
    for (int d : cfg_.devices) {
      if (d != dev) pref.push_back(d);
    }
    auto slot = alloc_.alloc(2 * sb, pref);
    if (!slot) raise(Err::OutOfSpace, "no space for entry");
    for (int i = 0; i < r; ++i) {
      if (meta.replicas[i].device == slot->device) {
        raise(Err::OutOfSpace, "cannot place replicas on distinct devices");
      }
    }
    meta.replicas.push_back(*slot);
  }
  if (cfg_.crc_variant && size > 0) {
    // Fresh entries read as zeros; seed the committed CRC to match.
    Bytes zeros(size, 0);
    Bytes crcw(8, 0);
    store_u64(crcw.data(), crc32c(zeros));
    std::vector<OneSidedOp> writes, reads;
    for (const auto& rep : meta.replicas) {
      writes.push_back(OneSidedOp::write(rep.device, rep.addr + 8, crcw));
      reads.push_back(OneSidedOp::read(rep.device, rep.addr + 15, 1));
    }
    for (auto& res : fabric_.batch(ctx, std::move(writes))) {
      if (!res.ok) raise(res.err, "create seed write failed");
    }
    for (auto& res : fabric_.batch(ctx, std::move(reads))) {
      if (!res.ok) raise(res.err, "create seed validation failed");
    }
  }
  registry_.create(ctx, key, std::move(meta));
}

void DirectStore::del(TaskCtx& ctx, const std::string& key) {
  auto meta = registry_.erase(ctx, key);
  uint32_t sb = space_bytes(meta->size);
  for (const auto& rep : meta->replicas) alloc_.free(rep, 2 * sb);
}

uint64_t DirectStore::allocated_bytes(const std::string& key) const {
  auto meta = registry_.require(key);
  return 2ull * space_bytes(meta->size);
}

const ChunkAllocator::Slot& DirectStore::live_replica(const Meta& meta) const {
  for (const auto& rep : meta.replicas) {
    if (fabric_.device(rep.device).state() == DeviceState::Alive) return rep;
  }
  raise(Err::DeviceUnavailable, "no live replica");
}

void DirectStore::lock_entry(TaskCtx& ctx, const ChunkAllocator::Slot& p) {
  while (fabric_.cas(ctx, p.device, p.addr, 0, 1) != 0) {
    fabric_.retry_hint(ctx, p.device, p.addr, kWordBytes);
  }
}

void DirectStore::unlock_entry(TaskCtx& ctx, const ChunkAllocator::Slot& p) {
  fabric_.write(ctx, p.device, p.addr, Bytes(kWordBytes, 0));
}

Bytes DirectStore::framed(const Meta& meta, ByteSpan value,
                          uint64_t tag) const {
  Bytes padded(meta.size, 0);
  std::copy(value.begin(), value.end(), padded.begin());
  Bytes frame;
  if (cfg_.crc_variant) {
    frame.resize(8 + meta.size);
    store_u64(frame.data(), crc32c(padded));
    std::copy(padded.begin(), padded.end(), frame.begin() + 8);
  } else {
    frame.resize(16 + meta.size);
    store_u64(frame.data(), tag);
    std::copy(padded.begin(), padded.end(), frame.begin() + 8);
    store_u64(frame.data() + 8 + meta.size, tag);
  }
  return frame;
}

bool DirectStore::space_valid(ByteSpan frame, uint32_t size) const {
  if (cfg_.crc_variant) {
    uint64_t stored = load_u64(frame, 0);
    return stored == crc32c(frame.subspan(8, size));
  }
  return load_u64(frame, 0) == load_u64(frame, 8 + size);
}

Bytes DirectStore::get(TaskCtx& ctx, const std::string& key) {
  auto meta = registry_.require(key);
  const auto& rep = live_replica(*meta);
  if (cfg_.crc_variant) {
    while (true) {
      Bytes frame =
          fabric_.read(ctx, rep.device, rep.addr + 8, 8 + meta->size, true);
      if (space_valid(frame, meta->size)) {
        return Bytes(frame.begin() + 8, frame.end());
      }
      // Concurrent write in flight; reread until the CRC validates.
      fabric_.retry_hint(ctx, rep.device, rep.addr + 8, 8 + meta->size);
    }
  }
  lock_entry(ctx, rep);
  Bytes payload = fabric_.read(ctx, rep.device, rep.addr + payload_off(),
                               meta->size, true);
  unlock_entry(ctx, rep);
  return payload;
}

void DirectStore::put(TaskCtx& ctx, const std::string& key, ByteSpan value) {
  auto meta = registry_.require(key);
  if (value.size() > meta->size) raise(Err::ValueTooLarge, "value too large");
  uint32_t sb = space_bytes(meta->size);
  Bytes frame = framed(*meta, value, next_tag(ctx));
  const auto& primary = meta->replicas.front();

  lock_entry(ctx, primary);
  bool failed = false;
  Err fail_err = Err::DeviceUnavailable;
  auto run_phase = [&](bool committed, bool write_phase) {
    std::vector<OneSidedOp> ops;
    for (const auto& rep : meta->replicas) {
      uint64_t base = rep.addr + (committed ? 0 : sb) + 8;
      if (write_phase) {
        ops.push_back(OneSidedOp::write(rep.device, base, frame, true));
      } else {
        ops.push_back(OneSidedOp::read(rep.device, base + frame.size() - 1, 1));
      }
    }
    for (auto& res : fabric_.batch(ctx, std::move(ops))) {
      if (!res.ok) {
        failed = true;
        fail_err = res.err;
      }
    }
  };
  // Redo copy first: write + validate all uncommitted spaces, then the
  // committed spaces, then release.
  run_phase(false, true);
  if (!failed) run_phase(false, false);
  if (!failed) run_phase(true, true);
  if (!failed) run_phase(true, false);
  if (failed) {
    // Mid-protocol device loss: leave the lock for recovery to release.
    raise(fail_err, "put aborted by device failure");
  }
  unlock_entry(ctx, primary);
}

void DirectStore::recover_device(TaskCtx& ctx, int device) {
  if (fabric_.device(device).state() != DeviceState::Alive) {
    raise(Err::DeviceUnavailable, "recover_device needs a live device");
  }
  registry_.for_each([&](const std::string&, const Meta& meta) {
    uint32_t sb = space_bytes(meta.size);
    uint32_t frame_bytes = sb - 8;
    for (const auto& rep : meta.replicas) {
      if (rep.device != device) continue;
      Bytes committed = fabric_.read(ctx, device, rep.addr + 8, frame_bytes);
      if (!space_valid(committed, meta.size)) {
        Bytes redo = fabric_.read(ctx, device, rep.addr + sb + 8, frame_bytes);
        if (!space_valid(redo, meta.size)) {
          raise(Err::Corrupt, "both spaces corrupt");
        }
        fabric_.write(ctx, device, rep.addr + 8, redo, true);
        fabric_.read(ctx, device, rep.addr + 8 + frame_bytes - 1, 1);
      }
      // Release any lock a crash-interrupted writer left behind.
      fabric_.write(ctx, device, rep.addr, Bytes(kWordBytes, 0));
    }
  });
}

uint64_t DirectStore::cn_metadata_bytes(int /*cn*/) const {
  // Every CN keeps the key plus the location of both spaces of each replica.
  uint64_t total = 0;
  registry_.for_each([&](const std::string& key, const Meta& meta) {
    total += key.size() + 4 + meta.replicas.size() * 2 * 12;
  });
  return total;
}

}  // namespace dpmkv
