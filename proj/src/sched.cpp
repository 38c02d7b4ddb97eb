#include "dpmkv/sched.hpp"

#include <algorithm>

namespace dpmkv {

// Thrown into parked tasks when a run is torn down early. Distinct from
// SimError so protocol-level catch clauses do not swallow it.
struct CancelledTask {};

Scheduler::~Scheduler() {
  for (auto& t : tasks_) {
    if (t.thread.joinable()) t.thread.join();
  }
}

int Scheduler::spawn(std::string name, Endpoint ep, TaskFn fn) {
  if (running_) raise(Err::Config, "spawn while running");
  Task t;
  t.name = std::move(name);
  t.ep = ep;
  t.fn = std::move(fn);
  t.go = std::make_unique<std::binary_semaphore>(0);
  tasks_.push_back(std::move(t));
  return static_cast<int>(tasks_.size() - 1);
}

void Scheduler::start_task(size_t i) {
  Task& t = tasks_[i];
  t.thread = std::thread([this, i] {
    Task& self = tasks_[i];
    TaskCtx ctx;
    ctx.id = static_cast<int>(i);
    ctx.name = self.name;
    ctx.ep = self.ep;
    ctx.sched = this;
    self.go->acquire();
    try {
      if (cancel_) throw CancelledTask{};
      self.fn(ctx);
    } catch (const CancelledTask&) {
      self.cancelled = true;
    } catch (...) {
      self.error = std::current_exception();
    }
    self.finished = true;
    done_.release();
  });
}

void Scheduler::grant(size_t i) {
  tasks_[i].parked = false;
  tasks_[i].go->release();
  done_.acquire();
}

void Scheduler::yield(TaskCtx& ctx) {
  Task& self = tasks_[ctx.id];
  self.parked = true;
  done_.release();
  self.go->acquire();
  if (cancel_) throw CancelledTask{};
}

void Scheduler::retry_hint(TaskCtx& ctx, int device, uint64_t addr,
                           uint64_t len) {
  if (!prune_retries_) return;
  Task& self = tasks_[ctx.id];
  self.waiting = true;
  self.wait_dev = device;
  self.wait_addr = addr;
  self.wait_len = len;
}

void Scheduler::notify_touch(int device, uint64_t addr, uint64_t len) {
  if (!prune_retries_) return;
  for (auto& t : tasks_) {
    if (t.waiting && t.wait_dev == device && addr < t.wait_addr + t.wait_len &&
        t.wait_addr < addr + len) {
      t.waiting = false;
    }
  }
}

void Scheduler::run(uint64_t seed, uint64_t max_decisions) {
  drive(false, seed, {}, max_decisions, nullptr);
}

std::vector<uint32_t> Scheduler::run_traced(const std::vector<uint32_t>& forced,
                                            uint64_t max_decisions) {
  std::vector<uint32_t> factors;
  drive(true, 0, forced, max_decisions, &factors);
  return factors;
}

void Scheduler::cancel_all() {
  cancel_ = true;
  while (true) {
    bool any = false;
    for (size_t i = 0; i < tasks_.size(); ++i) {
      if (!tasks_[i].finished && tasks_[i].parked) {
        any = true;
        grant(i);
      }
    }
    bool all_done = true;
    for (auto& t : tasks_) all_done = all_done && t.finished;
    if (all_done) break;
    if (!any) break;  // nothing grantable; threads must already be finishing
  }
  for (auto& t : tasks_) {
    if (t.thread.joinable()) t.thread.join();
  }
}

void Scheduler::drive(bool traced, uint64_t seed,
                      const std::vector<uint32_t>& forced,
                      uint64_t max_decisions,
                      std::vector<uint32_t>* factors) {
  if (running_) raise(Err::Config, "scheduler reuse");
  running_ = true;
  // Task startup is not a scheduling choice: run every task in id order up
  // to its first fabric operation (or completion).
  for (size_t i = 0; i < tasks_.size(); ++i) {
    start_task(i);
    grant(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<size_t> ready;
  size_t step = 0;
  while (true) {
    ready.clear();
    bool any_unfinished = false;
    for (size_t i = 0; i < tasks_.size(); ++i) {
      if (tasks_[i].finished) continue;
      any_unfinished = true;
      if (tasks_[i].parked && !tasks_[i].waiting) ready.push_back(i);
    }
    if (!any_unfinished) break;
    if (ready.empty()) {
      cancel_all();
      running_ = false;
      raise(Err::Deadlock, "all live tasks are waiting");
    }
    if (decisions_ >= max_decisions) {
      cancel_all();
      running_ = false;
      raise(Err::BoundExceeded, "scheduler decision bound reached");
    }
    size_t choice;
    if (traced) {
      if (factors) factors->push_back(static_cast<uint32_t>(ready.size()));
      uint32_t pick = step < forced.size() ? forced[step] : 0;
      if (pick >= ready.size()) {
        cancel_all();
        running_ = false;
        raise(Err::Config, "forced choice out of range");
      }
      choice = ready[pick];
    } else {
      choice = ready[rng() % ready.size()];
    }
    ++decisions_;
    ++step;
    grant(choice);
  }
  running_ = false;
  for (auto& t : tasks_) {
    if (t.thread.joinable()) t.thread.join();
  }
  for (auto& t : tasks_) {
    if (t.error) std::rethrow_exception(t.error);
  }
}

ExploreResult explore(
    const std::function<std::vector<uint32_t>(const std::vector<uint32_t>&)>&
        run_branch,
    uint64_t max_leaves) {
  ExploreResult res;
  std::vector<uint32_t> prefix;
  while (true) {
    std::vector<uint32_t> factors = run_branch(prefix);
    ++res.interleavings;
    // Advance to the next schedule: bump the deepest choice that still has
    // an unexplored sibling.
    size_t depth = factors.size();
    bool advanced = false;
    for (size_t i = depth; i-- > 0;) {
      uint32_t chosen = i < prefix.size() ? prefix[i] : 0;
      if (chosen + 1 < factors[i]) {
        prefix.resize(i + 1);
        prefix[i] = chosen + 1;
        advanced = true;
        break;
      }
    }
    if (!advanced) break;
    if (res.interleavings >= max_leaves) {
      res.bound_hit = true;
      break;
    }
  }
  return res;
}

}  // namespace dpmkv
