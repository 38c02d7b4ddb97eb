#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include "dpmkv/common.hpp"

namespace dpmkv {

// Cooperative scheduler that totally orders protocol tasks at their fabric
// operations. Exactly one task runs at a time; a grant executes one fabric
// operation and the compute that follows it, up to the next operation.
//
// Deterministic mode picks among runnable tasks with a seeded RNG. Traced
// mode follows a forced choice list (first runnable beyond the list) and
// reports the branching factor at every decision, which is what the
// exhaustive explorer consumes. A scheduler instance runs once.
class Scheduler {
 public:
  using TaskFn = std::function<void(TaskCtx&)>;

  Scheduler() = default;
  ~Scheduler();
  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  int spawn(std::string name, Endpoint ep, TaskFn fn);

  void run(uint64_t seed, uint64_t max_decisions = UINT64_MAX);
  std::vector<uint32_t> run_traced(const std::vector<uint32_t>& forced,
                                   uint64_t max_decisions = 1 << 22);

  // When set, a task that announces a fruitless retry is parked until some
  // other task writes the address range it is spinning on. Keeps exhaustive
  // exploration finite; ignored in seeded runs where retries are real work.
  void set_prune_retries(bool on) { prune_retries_ = on; }

  bool running() const { return running_; }
  uint64_t decisions() const { return decisions_; }

  // Fabric hooks.
  void yield(TaskCtx& ctx);
  void retry_hint(TaskCtx& ctx, int device, uint64_t addr, uint64_t len);
  void notify_touch(int device, uint64_t addr, uint64_t len);

 private:
  struct Task {
    std::string name;
    Endpoint ep;
    TaskFn fn;
    std::thread thread;
    std::unique_ptr<std::binary_semaphore> go;
    bool parked = false;
    bool finished = false;
    bool waiting = false;
    bool cancelled = false;
    int wait_dev = -1;
    uint64_t wait_addr = 0;
    uint64_t wait_len = 0;
    std::exception_ptr error;
  };

  void drive(bool traced, uint64_t seed, const std::vector<uint32_t>& forced,
             uint64_t max_decisions, std::vector<uint32_t>* factors);
  void grant(size_t i);
  void start_task(size_t i);
  void cancel_all();

  std::vector<Task> tasks_;
  std::counting_semaphore<1 << 20> done_{0};
  bool running_ = false;
  bool prune_retries_ = false;
  bool cancel_ = false;
  uint64_t decisions_ = 0;
};

struct ExploreResult {
  uint64_t interleavings = 0;
  bool bound_hit = false;
};

// Depth-first enumeration of schedules. run_branch builds a fresh world,
// runs it under the forced choices, and returns the branch factors the
// scheduler saw. Bounded by max_leaves completed runs.
ExploreResult explore(
    const std::function<std::vector<uint32_t>(const std::vector<uint32_t>&)>&
        run_branch,
    uint64_t max_leaves);

}  // namespace dpmkv
