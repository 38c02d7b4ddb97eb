#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "dpmkv/common.hpp"
#include "dpmkv/device.hpp"
#include "dpmkv/meter.hpp"
#include "dpmkv/sched.hpp"

namespace dpmkv {

// Wire framing sizes used for byte accounting.
inline constexpr uint64_t kOneSidedReqHdr = 24;
inline constexpr uint64_t kOneSidedRespHdr = 8;
inline constexpr uint64_t kCasPayload = 16;
inline constexpr uint64_t kCasRespPayload = 8;

struct OneSidedOp {
  OpKind kind = OpKind::Read;
  int device = -1;
  uint64_t addr = 0;
  uint64_t len = 0;  // read length
  Bytes data;        // write payload
  uint64_t expect = 0;
  uint64_t desired = 0;
  // Marks value-payload transfers so traffic reports can separate data from
  // protocol chatter.
  bool data_bearing = false;

  static OneSidedOp read(int dev, uint64_t addr, uint64_t len,
                         bool data = false) {
    OneSidedOp op;
    op.kind = OpKind::Read;
    op.device = dev;
    op.addr = addr;
    op.len = len;
    op.data_bearing = data;
    return op;
  }
  static OneSidedOp write(int dev, uint64_t addr, Bytes bytes,
                          bool data = false) {
    OneSidedOp op;
    op.kind = OpKind::Write;
    op.device = dev;
    op.addr = addr;
    op.data = std::move(bytes);
    op.data_bearing = data;
    return op;
  }
  static OneSidedOp cas(int dev, uint64_t addr, uint64_t expect,
                        uint64_t desired) {
    OneSidedOp op;
    op.kind = OpKind::Cas;
    op.device = dev;
    op.addr = addr;
    op.expect = expect;
    op.desired = desired;
    return op;
  }
};

struct OpResult {
  bool ok = true;
  Err err = Err::DeviceUnavailable;
  Bytes bytes;
  uint64_t old_value = 0;
};

struct FaultEvent {
  uint64_t op_index = 0;
  int device = 0;
  bool permanent = false;
  // Pending sub-writes surviving beyond the confirmed state; none if unset.
  std::optional<uint64_t> keep_prefix;
};

struct FaultPlan {
  std::map<uint64_t, FaultEvent> events;

  void add(FaultEvent e) { events[e.op_index] = e; }
  bool empty() const { return events.empty(); }
  // Plain-text form: one event per line, "op_index device permanent [keep]".
  static FaultPlan parse(std::istream& in);
  static FaultPlan load(const std::string& path);
};

struct FabricConfig {
  bool durability_tracking = true;
  bool log_ops = true;
  // When a scheduler is attached, yield between the 8-byte sub-writes of a
  // write so concurrent tasks can observe partially applied data. Still one
  // round and one trace row per write.
  bool subwrite_interleaving = true;
};

// The simulated interconnect. All device access funnels through here; every
// batch of operations issued together costs one round and one scheduling
// decision.
class Fabric {
 public:
  explicit Fabric(FabricConfig cfg = {});

  int add_device(uint64_t capacity);
  DpmDevice& device(int id) { return *devices_.at(id); }
  const DpmDevice& device(int id) const { return *devices_.at(id); }
  int device_count() const { return static_cast<int>(devices_.size()); }

  void attach_scheduler(Scheduler* s) { sched_ = s; }
  void set_fault_plan(FaultPlan plan) { plan_ = std::move(plan); }
  using CrashHook =
      std::function<void(uint64_t op_index, int device, uint64_t pending)>;
  void set_crash_hook(CrashHook h) { crash_hook_ = std::move(h); }

  // One round; ops issued in parallel. Results are per op.
  std::vector<OpResult> batch(TaskCtx& ctx, std::vector<OneSidedOp> ops,
                              std::optional<Endpoint> as = {});

  // Single-op conveniences; throw on error.
  Bytes read(TaskCtx& ctx, int dev, uint64_t addr, uint64_t len,
             bool data = false, std::optional<Endpoint> as = {});
  void write(TaskCtx& ctx, int dev, uint64_t addr, Bytes bytes,
             bool data = false, std::optional<Endpoint> as = {});
  uint64_t cas(TaskCtx& ctx, int dev, uint64_t addr, uint64_t expect,
               uint64_t desired, std::optional<Endpoint> as = {});

  // Two-way message round (RPC or metadata traffic).
  void msg_round(TaskCtx& ctx, Endpoint from, Endpoint to, uint64_t fwd_bytes,
                 uint64_t rev_bytes, uint64_t data_bytes = 0);

  // Local durability event (e.g. a metadata flush): a crash-point boundary
  // in the op log, no network round.
  void flush_event(TaskCtx& ctx);

  // Announce a fruitless retry of an op on [addr, addr+len); lets the
  // exhaustive scheduler park this task until the range changes.
  void retry_hint(TaskCtx& ctx, int dev, uint64_t addr, uint64_t len);

  void crash(int dev, bool permanent,
             std::optional<uint64_t> keep_prefix = std::nullopt);
  void recover(int dev);

  uint64_t now() const { return meter_.rounds(); }
  Meter& meter() { return meter_; }
  const Meter& meter() const { return meter_; }
  TaskCtx& external_ctx() { return ext_ctx_; }
  bool tracking() const { return cfg_.durability_tracking; }

 private:
  void yield(TaskCtx& ctx);
  void check_faults(uint64_t op_index);

  FabricConfig cfg_;
  std::vector<std::unique_ptr<DpmDevice>> devices_;
  Meter meter_;
  Scheduler* sched_ = nullptr;
  FaultPlan plan_;
  CrashHook crash_hook_;
  TaskCtx ext_ctx_;
};

}  // namespace dpmkv
