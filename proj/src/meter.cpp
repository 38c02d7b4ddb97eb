#include "dpmkv/meter.hpp"

#include <algorithm>

namespace dpmkv {

void Meter::count_op(Endpoint from, Endpoint to, OpKind kind, uint64_t bytes,
                     uint64_t data_bytes, uint64_t /*round*/,
                     bool new_link_round) {
  auto& s = links_[make_link(from, to)];
  if (new_link_round) ++s.rounds;
  ++s.by_class[static_cast<int>(kind)];
  s.bytes += bytes;
  s.data_bytes += data_bytes;
}

void Meter::count_device(int device, OpKind kind, uint64_t bytes) {
  auto& d = dev_[device];
  if (kind == OpKind::Cas) {
    ++d.cas_rounds;
  } else {
    ++d.rw_rounds;
  }
  d.bytes += bytes;
}

uint64_t Meter::log_op(const OpRecord& r) {
  uint64_t idx = op_index_++;
  if (log_ops_) {
    OpRecord row = r;
    row.index = idx;
    op_log_.push_back(row);
  }
  return idx;
}

uint64_t Meter::link_rounds(Endpoint a, Endpoint b) const {
  auto it = links_.find(make_link(a, b));
  return it == links_.end() ? 0 : it->second.rounds;
}

uint64_t Meter::link_bytes(Endpoint a, Endpoint b) const {
  auto it = links_.find(make_link(a, b));
  return it == links_.end() ? 0 : it->second.bytes;
}

uint64_t Meter::link_data_bytes(Endpoint a, Endpoint b) const {
  auto it = links_.find(make_link(a, b));
  return it == links_.end() ? 0 : it->second.data_bytes;
}

uint64_t Meter::task_rounds(int task) const {
  auto it = task_rounds_.find(task);
  return it == task_rounds_.end() ? 0 : it->second;
}

uint64_t Meter::device_bytes(int device) const {
  auto it = dev_.find(device);
  return it == dev_.end() ? 0 : it->second.bytes;
}

uint64_t Meter::device_rw_rounds(int device) const {
  auto it = dev_.find(device);
  return it == dev_.end() ? 0 : it->second.rw_rounds;
}

uint64_t Meter::device_cas_rounds(int device) const {
  auto it = dev_.find(device);
  return it == dev_.end() ? 0 : it->second.cas_rounds;
}

uint64_t Meter::busy_rounds(Endpoint center) const {
  auto it = busy_.find(center);
  return it == busy_.end() ? 0 : it->second;
}

uint64_t Meter::total_bytes() const {
  uint64_t t = 0;
  for (auto& [k, s] : links_) t += s.bytes;
  return t;
}

uint64_t Meter::total_data_bytes() const {
  uint64_t t = 0;
  for (auto& [k, s] : links_) t += s.data_bytes;
  return t;
}

uint64_t Meter::bytes_between(Endpoint::Kind a, Endpoint::Kind b) const {
  uint64_t t = 0;
  for (auto& [k, s] : links_) {
    if ((k.a.kind == a && k.b.kind == b) || (k.a.kind == b && k.b.kind == a)) {
      t += s.bytes;
    }
  }
  return t;
}

double Meter::makespan(const CapacityModel& cap) const {
  double m = 0;
  for (auto& [t, r] : task_rounds_) m = std::max(m, double(r));
  for (auto& [c, r] : busy_) {
    uint32_t h = c.kind == Endpoint::Kind::Coord ? cap.coord_handlers
                                                 : cap.ms_handlers;
    m = std::max(m, double(r) / double(std::max<uint32_t>(h, 1)));
  }
  for (auto& [d, s] : dev_) {
    m = std::max(m, double(s.rw_rounds) / double(std::max<uint32_t>(cap.dpm_rw, 1)));
    m = std::max(m, double(s.cas_rounds) / double(std::max<uint32_t>(cap.dpm_cas, 1)));
  }
  return m;
}

void Meter::export_trace_csv(std::ostream& os) const {
  os << "op_index,task,device,kind,address,length,round\n";
  for (const auto& r : op_log_) {
    os << r.index << ',' << r.task << ',' << r.device << ','
       << op_kind_name(r.kind) << ',' << r.address << ',' << r.length << ','
       << r.round << '\n';
  }
}

Meter::ReplaySummary Meter::replay(const std::vector<OpRecord>& log,
                                   const std::map<int, Endpoint>& task_ep) {
  ReplaySummary s;
  uint64_t last_round = 0;
  std::map<LinkKey, uint64_t> seen_round;  // last round counted per link
  for (const auto& r : log) {
    if (r.kind == OpKind::Flush) continue;
    s.rounds = std::max(s.rounds, r.round);
    last_round = std::max(last_round, r.round);
    Endpoint from = Endpoint::ext();
    auto it = task_ep.find(r.task);
    if (it != task_ep.end()) from = it->second;
    Endpoint to = r.device >= 0 ? Endpoint::dpm(r.device) : Endpoint::ext();
    if (r.kind == OpKind::Msg) continue;  // msg peers not in the trace schema
    LinkKey lk = make_link(from, to);
    auto& last = seen_round[lk];
    if (last != r.round) {
      ++s.link_rounds[lk];
      last = r.round;
    }
    if (r.device >= 0) s.device_bytes_total += r.length;
  }
  return s;
}

Meter::ReplaySummary Meter::summarize(
    const std::map<int, Endpoint>& task_ep) const {
  return replay(op_log_, task_ep);
}

}  // namespace dpmkv
