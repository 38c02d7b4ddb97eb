#include "dpmkv/fabric.hpp"

#include <fstream>
#include <sstream>

namespace dpmkv {

FaultPlan FaultPlan::parse(std::istream& in) {
  FaultPlan plan;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    FaultEvent e;
    int perm = 0;
    if (!(ls >> e.op_index >> e.device >> perm)) continue;
    e.permanent = perm != 0;
    uint64_t keep = 0;
    if (ls >> keep) e.keep_prefix = keep;
    plan.add(e);
  }
  return plan;
}

FaultPlan FaultPlan::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Err::Config, "cannot open fault plan: " + path);
  return parse(in);
}

Fabric::Fabric(FabricConfig cfg) : cfg_(cfg) {
  meter_.set_log_ops(cfg_.log_ops);
  ext_ctx_.id = -1;
  ext_ctx_.name = "ext";
  ext_ctx_.ep = Endpoint::ext();
}

int Fabric::add_device(uint64_t capacity) {
  int id = static_cast<int>(devices_.size());
  devices_.push_back(
      std::make_unique<DpmDevice>(id, capacity, cfg_.durability_tracking));
  return id;
}

void Fabric::yield(TaskCtx& ctx) {
  if (ctx.sched && ctx.sched->running()) ctx.sched->yield(ctx);
}

void Fabric::check_faults(uint64_t op_index) {
  auto it = plan_.events.find(op_index);
  if (it == plan_.events.end()) return;
  const FaultEvent& e = it->second;
  DpmDevice& d = device(e.device);
  if (d.state() != DeviceState::Alive) return;
  uint64_t pending = d.pending_subwrites();
  if (crash_hook_) crash_hook_(op_index, e.device, pending);
  d.crash(e.permanent, e.keep_prefix);
}

std::vector<OpResult> Fabric::batch(TaskCtx& ctx, std::vector<OneSidedOp> ops,
                                    std::optional<Endpoint> as) {
  yield(ctx);
  Endpoint from = as.value_or(ctx.ep);
  uint64_t round = meter_.begin_round();
  meter_.count_task_round(ctx.id);
  if (from.kind == Endpoint::Kind::Coord || from.kind == Endpoint::Kind::Ms) {
    meter_.add_busy(from, 1);
  }
  std::vector<OpResult> results;
  results.reserve(ops.size());
  std::map<LinkKey, bool> link_seen;
  for (const OneSidedOp& op : ops) {
    OpResult res;
    DpmDevice& dev = device(op.device);
    uint64_t wire = 0, data = 0, log_len = 0;
    try {
      switch (op.kind) {
        case OpKind::Read:
          res.bytes = dev.read(ctx.id, op.addr, op.len);
          wire = kOneSidedReqHdr + kOneSidedRespHdr + op.len;
          data = op.data_bearing ? op.len : 0;
          log_len = op.len;
          break;
        case OpKind::Write: {
          bool stepwise = cfg_.subwrite_interleaving && ctx.sched &&
                          ctx.sched->running() && op.data.size() > kWordBytes;
          if (stepwise) {
            uint64_t end = op.addr + op.data.size() - 1;
            uint64_t pos = op.addr;
            size_t off = 0;
            while (off < op.data.size()) {
              uint64_t word_end = (pos / kWordBytes + 1) * kWordBytes;
              size_t n = std::min<uint64_t>(word_end - pos,
                                            op.data.size() - off);
              dev.write(ctx.id, pos,
                        ByteSpan(op.data.data() + off, n), end);
              if (sched_) sched_->notify_touch(op.device, pos, n);
              pos += n;
              off += n;
              if (off < op.data.size()) ctx.sched->yield(ctx);
            }
          } else {
            dev.write(ctx.id, op.addr, op.data);
            if (sched_) {
              sched_->notify_touch(op.device, op.addr, op.data.size());
            }
          }
          wire = kOneSidedReqHdr + op.data.size() + kOneSidedRespHdr;
          data = op.data_bearing ? op.data.size() : 0;
          log_len = op.data.size();
          break;
        }
        case OpKind::Cas: {
          res.old_value = dev.cas(ctx.id, op.addr, op.expect, op.desired);
          wire = kOneSidedReqHdr + kCasPayload + kOneSidedRespHdr +
                 kCasRespPayload;
          log_len = kWordBytes;
          if (sched_ && res.old_value == op.expect) {
            sched_->notify_touch(op.device, op.addr, kWordBytes);
          }
          break;
        }
        default:
          raise(Err::Config, "bad one-sided op kind");
      }
    } catch (const SimError& e) {
      res.ok = false;
      res.err = e.code();
      // A failed op still crosses the wire (request + error response).
      wire = kOneSidedReqHdr + kOneSidedRespHdr;
    }
    bool first_on_link =
        !std::exchange(link_seen[make_link(from, Endpoint::dpm(op.device))],
                       true);
    meter_.count_op(from, Endpoint::dpm(op.device), op.kind, wire, data, round,
                    first_on_link);
    meter_.count_device(op.device, op.kind, wire);
    OpRecord row;
    row.task = ctx.id;
    row.device = op.device;
    row.kind = op.kind;
    row.address = op.addr;
    row.length = log_len;
    row.round = round;
    uint64_t idx = meter_.log_op(row);
    check_faults(idx);
    results.push_back(std::move(res));
  }
  return results;
}

Bytes Fabric::read(TaskCtx& ctx, int dev, uint64_t addr, uint64_t len,
                   bool data, std::optional<Endpoint> as) {
  auto res = batch(ctx, {OneSidedOp::read(dev, addr, len, data)}, as);
  if (!res[0].ok) raise(res[0].err, "read failed");
  return std::move(res[0].bytes);
}

void Fabric::write(TaskCtx& ctx, int dev, uint64_t addr, Bytes bytes,
                   bool data, std::optional<Endpoint> as) {
  auto res =
      batch(ctx, {OneSidedOp::write(dev, addr, std::move(bytes), data)}, as);
  if (!res[0].ok) raise(res[0].err, "write failed");
}

uint64_t Fabric::cas(TaskCtx& ctx, int dev, uint64_t addr, uint64_t expect,
                     uint64_t desired, std::optional<Endpoint> as) {
  auto res = batch(ctx, {OneSidedOp::cas(dev, addr, expect, desired)}, as);
  if (!res[0].ok) raise(res[0].err, "cas failed");
  return res[0].old_value;
}

void Fabric::msg_round(TaskCtx& ctx, Endpoint from, Endpoint to,
                       uint64_t fwd_bytes, uint64_t rev_bytes,
                       uint64_t data_bytes) {
  yield(ctx);
  uint64_t round = meter_.begin_round();
  meter_.count_task_round(ctx.id);
  meter_.count_op(from, to, OpKind::Msg, fwd_bytes + rev_bytes, data_bytes,
                  round, true);
  if (to.kind == Endpoint::Kind::Coord || to.kind == Endpoint::Kind::Ms) {
    meter_.add_busy(to, 1);
  }
  OpRecord row;
  row.task = ctx.id;
  row.device = -1;
  row.kind = OpKind::Msg;
  row.address = 0;
  row.length = fwd_bytes + rev_bytes;
  row.round = round;
  uint64_t idx = meter_.log_op(row);
  check_faults(idx);
}

void Fabric::flush_event(TaskCtx& ctx) {
  yield(ctx);
  OpRecord row;
  row.task = ctx.id;
  row.device = -1;
  row.kind = OpKind::Flush;
  row.round = meter_.rounds();
  uint64_t idx = meter_.log_op(row);
  check_faults(idx);
}

void Fabric::retry_hint(TaskCtx& ctx, int dev, uint64_t addr, uint64_t len) {
  if (ctx.sched && ctx.sched->running()) ctx.sched->retry_hint(ctx, dev, addr, len);
}

void Fabric::crash(int dev, bool permanent,
                   std::optional<uint64_t> keep_prefix) {
  device(dev).crash(permanent, keep_prefix);
}

void Fabric::recover(int dev) { device(dev).recover(); }

}  // namespace dpmkv
