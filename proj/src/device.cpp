#include "dpmkv/device.hpp"

#include <algorithm>
#include <cstring>

namespace dpmkv {

DpmDevice::DpmDevice(int id, uint64_t capacity, bool track_durability)
    : id_(id), capacity_(capacity), tracking_(track_durability) {
  applied_.assign(capacity_, 0);
  if (tracking_) {
    durable_.assign(capacity_, 0);
    word_seq_.assign((capacity_ + kWordBytes - 1) / kWordBytes, 0);
  }
}

void DpmDevice::require_alive() const {
  if (state_ != DeviceState::Alive) {
    raise(Err::DeviceUnavailable,
          "device " + std::to_string(id_) + " unavailable");
  }
}

void DpmDevice::check_range(uint64_t addr, uint64_t len) const {
  if (len == 0 || addr > capacity_ || capacity_ - addr < len) {
    raise(Err::OutOfRange, "range [" + std::to_string(addr) + ", +" +
                               std::to_string(len) + ") on device " +
                               std::to_string(id_));
  }
}

Bytes DpmDevice::read(int conn, uint64_t addr, uint64_t len) {
  require_alive();
  check_range(addr, len);
  if (tracking_) confirm_through(conn, addr + len - 1);
  return Bytes(applied_.begin() + addr, applied_.begin() + addr + len);
}

void DpmDevice::write(int conn, uint64_t addr, ByteSpan data,
                      std::optional<uint64_t> parent_end) {
  require_alive();
  check_range(addr, data.size());
  uint64_t end = parent_end.value_or(addr + data.size() - 1);
  uint64_t pos = addr;
  size_t off = 0;
  while (off < data.size()) {
    // Split at aligned word boundaries so each sub-write stays within one
    // atomic grain.
    uint64_t word_end = (pos / kWordBytes + 1) * kWordBytes;
    uint8_t n = static_cast<uint8_t>(
        std::min<uint64_t>(word_end - pos, data.size() - off));
    std::memcpy(applied_.data() + pos, data.data() + off, n);
    if (tracking_) {
      SubWrite w;
      w.seq = next_seq_++;
      w.addr = pos;
      w.len = n;
      std::memcpy(w.data, data.data() + off, n);
      w.parent_end = end;
      pending_[conn].push_back(w);
    }
    pos += n;
    off += n;
  }
}

uint64_t DpmDevice::cas(int conn, uint64_t addr, uint64_t expect,
                        uint64_t desired) {
  require_alive();
  if (addr % kWordBytes != 0) {
    raise(Err::Misaligned, "cas address " + std::to_string(addr));
  }
  check_range(addr, kWordBytes);
  uint64_t old = load_u64(applied_.data() + addr);
  if (old == expect) {
    store_u64(applied_.data() + addr, desired);
    if (tracking_) {
      // Durable on success: modeled as a self-confirming sub-write.
      SubWrite w;
      w.seq = next_seq_++;
      w.addr = addr;
      w.len = kWordBytes;
      store_u64(w.data, desired);
      w.parent_end = addr + kWordBytes - 1;
      apply_durable(w);
      ++confirmed_count_[conn];
    }
  }
  return old;
}

void DpmDevice::apply_durable(const SubWrite& w) {
  for (uint8_t i = 0; i < w.len; ++i) {
    uint64_t b = w.addr + i;
    uint64_t eff = word_seq_[b / kWordBytes];
    auto it = byte_seq_.find(b);
    if (it != byte_seq_.end()) eff = std::max(eff, it->second);
    if (w.seq > eff) durable_[b] = w.data[i];
  }
  if (w.addr % kWordBytes == 0 && w.len == kWordBytes) {
    uint64_t wi = w.addr / kWordBytes;
    word_seq_[wi] = std::max(word_seq_[wi], w.seq);
    for (uint8_t i = 0; i < w.len; ++i) byte_seq_.erase(w.addr + i);
  } else {
    for (uint8_t i = 0; i < w.len; ++i) {
      uint64_t b = w.addr + i;
      auto [it, inserted] = byte_seq_.try_emplace(b, w.seq);
      if (!inserted) it->second = std::max(it->second, w.seq);
    }
  }
}

void DpmDevice::confirm_through(int conn, uint64_t coverage_end) {
  auto it = pending_.find(conn);
  if (it == pending_.end() || it->second.empty()) return;
  auto& q = it->second;
  // Ordered delivery: confirming a write confirms everything issued before
  // it on the same connection. Find the last sub-write whose whole parent
  // write is covered.
  size_t upto = 0;
  for (size_t i = 0; i < q.size(); ++i) {
    if (q[i].parent_end <= coverage_end) upto = i + 1;
  }
  for (size_t i = 0; i < upto; ++i) {
    apply_durable(q[i]);
    ++confirmed_count_[conn];
  }
  q.erase(q.begin(), q.begin() + upto);
}

void DpmDevice::crash(bool permanent, std::optional<uint64_t> keep_prefix) {
  if (state_ == DeviceState::Dead) return;
  if (!tracking_) {
    raise(Err::Config, "crash requires durability tracking");
  }
  // Merge all pending sub-writes in global apply order and keep a prefix.
  std::vector<SubWrite> all;
  for (auto& [conn, q] : pending_) all.insert(all.end(), q.begin(), q.end());
  std::sort(all.begin(), all.end(),
            [](const SubWrite& a, const SubWrite& b) { return a.seq < b.seq; });
  uint64_t keep = keep_prefix.value_or(0);
  for (uint64_t i = 0; i < keep && i < all.size(); ++i) apply_durable(all[i]);
  pending_.clear();
  applied_ = durable_;
  state_ = permanent ? DeviceState::Dead : DeviceState::Crashed;
}

void DpmDevice::recover() {
  if (state_ == DeviceState::Dead) {
    raise(Err::RecoverOnDead, "device " + std::to_string(id_) + " is dead");
  }
  state_ = DeviceState::Alive;
}

uint64_t DpmDevice::pending_subwrites() const {
  uint64_t n = 0;
  for (auto& [conn, q] : pending_) n += q.size();
  return n;
}

uint64_t DpmDevice::confirmed_subwrites(int conn) const {
  auto it = confirmed_count_.find(conn);
  return it == confirmed_count_.end() ? 0 : it->second;
}

ByteSpan DpmDevice::durable_view() const {
  if (!tracking_) return applied_;
  return durable_;
}

}  // namespace dpmkv
