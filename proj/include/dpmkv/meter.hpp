#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dpmkv/common.hpp"

namespace dpmkv {

enum class OpKind : uint8_t { Read, Write, Cas, Msg, Flush };

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Read: return "read";
    case OpKind::Write: return "write";
    case OpKind::Cas: return "cas";
    case OpKind::Msg: return "msg";
    case OpKind::Flush: return "flush";
  }
  return "?";
}

// One row of the fabric trace. Msg rows use device = -1 and length =
// forward + reverse bytes; Flush rows mark local durability events and do
// not consume a round of their own.
struct OpRecord {
  uint64_t index = 0;
  int task = -1;
  int device = -1;
  OpKind kind = OpKind::Read;
  uint64_t address = 0;
  uint64_t length = 0;
  uint64_t round = 0;
};

struct LinkKey {
  Endpoint a, b;  // normalized: a <= b
  friend auto operator<=>(const LinkKey&, const LinkKey&) = default;
};

inline LinkKey make_link(Endpoint x, Endpoint y) {
  return (y < x) ? LinkKey{y, x} : LinkKey{x, y};
}

struct LinkStats {
  uint64_t rounds = 0;
  uint64_t by_class[5] = {0, 0, 0, 0, 0};
  uint64_t bytes = 0;       // both directions
  uint64_t data_bytes = 0;  // payload-bearing portion only
};

// Concurrency assumed available at each service center, used to turn busy
// rounds into a makespan bound. One client task executes one round at a
// time; a DPM's atomic unit serializes CAS traffic much harder than its
// read/write path; coordinator and metadata-server handlers are pooled.
struct CapacityModel {
  uint32_t dpm_rw = 64;
  uint32_t dpm_cas = 4;
  uint32_t coord_handlers = 8;
  uint32_t ms_handlers = 8;
};

// Round, byte, and trace accounting for every fabric operation. A batch of
// operations issued together counts as one round; each distinct link the
// batch touches records one round as well.
class Meter {
 public:
  void set_log_ops(bool on) { log_ops_ = on; }
  bool log_ops() const { return log_ops_; }

  // Called by the fabric. Returns the round id of the batch.
  uint64_t begin_round() { return ++rounds_; }
  void count_op(Endpoint from, Endpoint to, OpKind kind, uint64_t bytes,
                uint64_t data_bytes, uint64_t round, bool new_link_round);
  void count_task_round(int task) { ++task_rounds_[task]; }
  void count_device(int device, OpKind kind, uint64_t bytes);
  void add_busy(Endpoint center, uint64_t rounds) { busy_[center] += rounds; }
  uint64_t log_op(const OpRecord& r);
  uint64_t next_op_index() const { return op_index_; }

  // Queries.
  uint64_t rounds() const { return rounds_; }
  uint64_t link_rounds(Endpoint a, Endpoint b) const;
  uint64_t link_bytes(Endpoint a, Endpoint b) const;
  uint64_t link_data_bytes(Endpoint a, Endpoint b) const;
  uint64_t task_rounds(int task) const;
  uint64_t device_bytes(int device) const;
  uint64_t device_rw_rounds(int device) const;
  uint64_t device_cas_rounds(int device) const;
  uint64_t busy_rounds(Endpoint center) const;
  uint64_t total_bytes() const;
  uint64_t total_data_bytes() const;
  uint64_t bytes_between(Endpoint::Kind a, Endpoint::Kind b) const;

  const std::vector<OpRecord>& op_log() const { return op_log_; }
  const std::map<LinkKey, LinkStats>& links() const { return links_; }

  // Lower bound on completion time under the capacity model: every task is
  // serial, and each service center can retire at most `capacity` rounds of
  // its class per time step.
  double makespan(const CapacityModel& cap = {}) const;

  void export_trace_csv(std::ostream& os) const;

  // Rebuilds link-round and byte totals from a trace; used to check that
  // replaying a trace reproduces the meters.
  struct ReplaySummary {
    uint64_t rounds = 0;
    std::map<LinkKey, uint64_t> link_rounds;
    uint64_t device_bytes_total = 0;
  };
  static ReplaySummary replay(const std::vector<OpRecord>& log,
                              const std::map<int, Endpoint>& task_ep);
  ReplaySummary summarize(const std::map<int, Endpoint>& task_ep) const;

 private:
  bool log_ops_ = true;
  uint64_t rounds_ = 0;
  uint64_t op_index_ = 0;
  std::map<LinkKey, LinkStats> links_;
  std::map<int, uint64_t> task_rounds_;
  std::map<Endpoint, uint64_t> busy_;
  struct DevStats {
    uint64_t rw_rounds = 0;
    uint64_t cas_rounds = 0;
    uint64_t bytes = 0;
  };
  std::map<int, DevStats> dev_;
  std::vector<OpRecord> op_log_;
};

}  // namespace dpmkv
