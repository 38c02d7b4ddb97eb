#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

#include "dpmkv/fabric.hpp"
#include "dpmkv/registry.hpp"
#include "dpmkv/sched.hpp"
#include "dpmkv/stamp.hpp"

using namespace dpmkv;

namespace {

Bytes fill(size_t n, uint8_t v) { return Bytes(n, v); }

}  // namespace

TEST_CASE("read of a fresh device returns zeros") {
  Fabric f;
  int d = f.add_device(1 << 12);
  auto& ctx = f.external_ctx();
  Bytes b = f.read(ctx, d, 0, 8);
  CHECK(b == fill(8, 0));
}

TEST_CASE("read-your-write without interleaving") {
  Fabric f;
  int d = f.add_device(1 << 12);
  auto& ctx = f.external_ctx();
  Bytes data(16);
  for (int i = 0; i < 16; ++i) data[i] = uint8_t(i + 1);
  f.write(ctx, d, 64, data);
  CHECK(f.read(ctx, d, 64, 16) == data);
}

TEST_CASE("out-of-range and unavailable errors") {
  Fabric f;
  int d = f.add_device(128);
  auto& ctx = f.external_ctx();
  CHECK_THROWS_AS(f.read(ctx, d, 120, 16), SimError);
  f.crash(d, false);
  try {
    f.read(ctx, d, 0, 8);
    FAIL("expected DeviceUnavailable");
  } catch (const SimError& e) {
    CHECK(e.code() == Err::DeviceUnavailable);
  }
  f.recover(d);
  CHECK(f.read(ctx, d, 0, 8) == fill(8, 0));
}

TEST_CASE("permanent crash refuses recovery and all ops") {
  Fabric f;
  int d = f.add_device(128);
  auto& ctx = f.external_ctx();
  f.crash(d, true);
  try {
    f.recover(d);
    FAIL("expected RecoverOnDead");
  } catch (const SimError& e) {
    CHECK(e.code() == Err::RecoverOnDead);
  }
  CHECK_THROWS_AS(f.write(ctx, d, 0, fill(8, 1)), SimError);
}

TEST_CASE("cas basics") {
  Fabric f;
  int d = f.add_device(128);
  auto& ctx = f.external_ctx();
  CHECK(f.cas(ctx, d, 0, 0, 1) == 0);
  CHECK(load_u64(f.read(ctx, d, 0, 8), 0) == 1);
  // Identical retry fails and leaves the word alone.
  CHECK(f.cas(ctx, d, 0, 0, 1) == 1);
  CHECK(load_u64(f.read(ctx, d, 0, 8), 0) == 1);
  CHECK_THROWS_AS(f.cas(ctx, d, 4, 0, 1), SimError);  // misaligned
}

TEST_CASE("unconfirmed writes may be lost at crash; prefixes are address-increasing") {
  // One 24-byte write acked but never validated: any prefix of its three
  // sub-writes may survive. Enumerate all of them.
  for (uint64_t keep = 0; keep <= 3; ++keep) {
    Fabric f;
    int d = f.add_device(256);
    auto& ctx = f.external_ctx();
    Bytes data(24);
    for (int i = 0; i < 24; ++i) data[i] = uint8_t(0x40 + i);
    f.write(ctx, d, 8, data);
    CHECK(f.device(d).pending_subwrites() == 3);
    f.crash(d, false, keep);
    f.recover(d);
    Bytes img = f.read(ctx, d, 8, 24);
    for (uint64_t w = 0; w < 3; ++w) {
      Bytes expect = w < keep ? Bytes(data.begin() + w * 8, data.begin() + w * 8 + 8)
                              : fill(8, 0);
      Bytes got(img.begin() + w * 8, img.begin() + w * 8 + 8);
      CHECK(got == expect);
    }
  }
}

TEST_CASE("validation read confirms the whole write") {
  Fabric f;
  int d = f.add_device(256);
  auto& ctx = f.external_ctx();
  Bytes data(24, 0xAB);
  f.write(ctx, d, 8, data);
  // Read of the last byte of the range confirms all of it.
  f.read(ctx, d, 8 + 24 - 1, 1);
  CHECK(f.device(d).pending_subwrites() == 0);
  f.crash(d, false);
  f.recover(d);
  CHECK(f.read(ctx, d, 8, 24) == data);
}

TEST_CASE("a low read does not confirm a higher write") {
  Fabric f;
  int d = f.add_device(256);
  auto& ctx = f.external_ctx();
  f.write(ctx, d, 128, fill(8, 0xCD));
  f.read(ctx, d, 0, 8);  // coverage point below the write
  CHECK(f.device(d).pending_subwrites() == 1);
  f.crash(d, false);
  f.recover(d);
  CHECK(f.read(ctx, d, 128, 8) == fill(8, 0));
}

TEST_CASE("confirmation is per connection") {
  Fabric f;
  int d = f.add_device(256);
  TaskCtx a{0, "a", Endpoint::cn(0), nullptr};
  TaskCtx b{1, "b", Endpoint::cn(1), nullptr};
  f.write(a, d, 0, fill(8, 1));
  // A read on another connection confirms nothing for task a.
  f.read(b, d, 0, 8);
  CHECK(f.device(d).pending_subwrites() == 1);
  f.read(a, d, 7, 1);
  CHECK(f.device(d).pending_subwrites() == 0);
}

TEST_CASE("successful cas is durable immediately") {
  Fabric f;
  int d = f.add_device(128);
  auto& ctx = f.external_ctx();
  f.cas(ctx, d, 0, 0, 42);
  f.crash(d, false);
  f.recover(d);
  CHECK(load_u64(f.read(ctx, d, 0, 8), 0) == 42);
}

TEST_CASE("crash keeps everything confirmed by a later same-connection read") {
  Fabric f;
  int d = f.add_device(512);
  auto& ctx = f.external_ctx();
  f.write(ctx, d, 0, fill(16, 0x11));
  f.write(ctx, d, 64, fill(16, 0x22));
  // Validating the second write confirms the first too (ordered delivery).
  f.read(ctx, d, 64 + 15, 1);
  CHECK(f.device(d).pending_subwrites() == 0);
  f.crash(d, false);
  f.recover(d);
  CHECK(f.read(ctx, d, 0, 16) == fill(16, 0x11));
  CHECK(f.read(ctx, d, 64, 16) == fill(16, 0x22));
}

TEST_CASE("meter counts one round per batch and per link") {
  Fabric f;
  int d0 = f.add_device(256);
  int d1 = f.add_device(256);
  auto& ctx = f.external_ctx();
  uint64_t before = f.meter().rounds();
  std::vector<OneSidedOp> ops;
  ops.push_back(OneSidedOp::write(d0, 0, fill(8, 1)));
  ops.push_back(OneSidedOp::write(d1, 0, fill(8, 2)));
  f.batch(ctx, ops);
  CHECK(f.meter().rounds() == before + 1);
  CHECK(f.meter().link_rounds(Endpoint::ext(), Endpoint::dpm(d0)) == 1);
  CHECK(f.meter().link_rounds(Endpoint::ext(), Endpoint::dpm(d1)) == 1);
  CHECK(f.meter().task_rounds(ctx.id) == 1);
}

TEST_CASE("trace replay reproduces link rounds") {
  Fabric f;
  int d0 = f.add_device(256);
  int d1 = f.add_device(256);
  auto& ctx = f.external_ctx();
  f.write(ctx, d0, 0, fill(24, 3));
  f.read(ctx, d0, 23, 1);
  f.cas(ctx, d1, 8, 0, 9);
  std::vector<OneSidedOp> ops;
  ops.push_back(OneSidedOp::read(d0, 0, 8));
  ops.push_back(OneSidedOp::read(d1, 0, 8));
  f.batch(ctx, ops);
  std::map<int, Endpoint> eps{{ctx.id, Endpoint::ext()}};
  auto sum = f.meter().summarize(eps);
  CHECK(sum.rounds == f.meter().rounds());
  CHECK(sum.link_rounds[make_link(Endpoint::ext(), Endpoint::dpm(d0))] ==
        f.meter().link_rounds(Endpoint::ext(), Endpoint::dpm(d0)));
  CHECK(sum.link_rounds[make_link(Endpoint::ext(), Endpoint::dpm(d1))] ==
        f.meter().link_rounds(Endpoint::ext(), Endpoint::dpm(d1)));
}

TEST_CASE("trace csv has the pinned header") {
  Fabric f;
  int d = f.add_device(128);
  auto& ctx = f.external_ctx();
  f.write(ctx, d, 0, fill(8, 1));
  std::ostringstream os;
  f.meter().export_trace_csv(os);
  std::string s = os.str();
  CHECK(s.rfind("op_index,task,device,kind,address,length,round\n", 0) == 0);
}

TEST_CASE("fault plan parses and triggers at the named op index") {
  std::istringstream in("2 0 0\n");
  FaultPlan plan = FaultPlan::parse(in);
  REQUIRE(plan.events.size() == 1);
  Fabric f;
  int d = f.add_device(256);
  f.set_fault_plan(plan);
  auto& ctx = f.external_ctx();
  f.write(ctx, d, 0, fill(8, 1));   // op 0
  f.read(ctx, d, 7, 1);             // op 1, confirms the write
  f.write(ctx, d, 8, fill(8, 2));   // op 2, crash fires after this
  CHECK(f.device(d).state() == DeviceState::Crashed);
  f.recover(d);
  CHECK(f.read(ctx, d, 0, 8) == fill(8, 1));   // confirmed survives
  CHECK(f.read(ctx, d, 8, 8) == fill(8, 0));   // unconfirmed dropped
}

// --- scheduler ---------------------------------------------------------

TEST_CASE("single task runs in program order") {
  Fabric f;
  int d = f.add_device(256);
  Scheduler s;
  f.attach_scheduler(&s);
  s.spawn("t", Endpoint::cn(0), [&](TaskCtx& ctx) {
    f.write(ctx, d, 0, fill(8, 1));
    f.write(ctx, d, 8, fill(8, 2));
    f.write(ctx, d, 16, fill(8, 3));
  });
  s.run(/*seed=*/7);
  const auto& log = f.meter().op_log();
  REQUIRE(log.size() == 3);
  CHECK(log[0].address == 0);
  CHECK(log[1].address == 8);
  CHECK(log[2].address == 16);
}

TEST_CASE("same seed gives identical traces and meters") {
  auto run = [](uint64_t seed) {
    Fabric f;
    int d = f.add_device(4096);
    Scheduler s;
    f.attach_scheduler(&s);
    for (int t = 0; t < 3; ++t) {
      s.spawn("t" + std::to_string(t), Endpoint::cn(t), [&f, d, t](TaskCtx& ctx) {
        for (int i = 0; i < 5; ++i) {
          f.write(ctx, d, uint64_t(t) * 64 + uint64_t(i) * 8, fill(8, uint8_t(t)));
        }
      });
    }
    s.run(seed);
    std::ostringstream os;
    f.meter().export_trace_csv(os);
    return os.str();
  };
  CHECK(run(123) == run(123));
  CHECK(run(123) != run(124));
}

TEST_CASE("two 2-op tasks have exactly 6 interleavings") {
  auto branch = [](const std::vector<uint32_t>& forced) {
    Fabric f;
    int d = f.add_device(256);
    Scheduler s;
    f.attach_scheduler(&s);
    for (int t = 0; t < 2; ++t) {
      s.spawn("t" + std::to_string(t), Endpoint::cn(t), [&f, d, t](TaskCtx& ctx) {
        f.write(ctx, d, uint64_t(t) * 64, fill(8, 1));
        f.write(ctx, d, uint64_t(t) * 64 + 8, fill(8, 2));
      });
    }
    return s.run_traced(forced);
  };
  auto res = explore(branch, 1 << 20);
  CHECK_FALSE(res.bound_hit);
  CHECK(res.interleavings == 6);
}

TEST_CASE("two racing cas: exactly one succeeds under every interleaving") {
  auto branch = [](const std::vector<uint32_t>& forced) {
    Fabric f;
    int d = f.add_device(128);
    Scheduler s;
    f.attach_scheduler(&s);
    int winners = 0;
    for (int t = 0; t < 2; ++t) {
      s.spawn("t" + std::to_string(t), Endpoint::cn(t), [&f, d, &winners](TaskCtx& ctx) {
        if (f.cas(ctx, d, 0, 0, 1) == 0) ++winners;
      });
    }
    auto factors = s.run_traced(forced);
    CHECK(winners == 1);
    return factors;
  };
  auto res = explore(branch, 1 << 20);
  CHECK(res.interleavings == 2);
}

TEST_CASE("interleaved reader sees word-aligned prefixes only") {
  // Writer splits 32 bytes into 4 sub-writes issued as separate rounds by
  // the fabric write; a reader interleaved anywhere sees the first k words
  // new and the rest old, never a torn word.
  auto branch = [](const std::vector<uint32_t>& forced) {
    Fabric f;
    int d = f.add_device(256);
    Scheduler s;
    f.attach_scheduler(&s);
    Bytes newv = make_stamped("k", 2, 32);
    auto oldv = make_stamped("k", 1, 32);
    f.write(f.external_ctx(), d, 0, oldv);
    s.spawn("w", Endpoint::cn(0), [&f, d, &newv](TaskCtx& ctx) {
      f.write(ctx, d, 0, newv);
    });
    s.spawn("r", Endpoint::cn(1), [&f, d](TaskCtx& ctx) {
      Bytes got = f.read(ctx, d, 0, 32);
      // Every word is either generation 1 or 2, and new words form a prefix.
      bool seen_old = false;
      for (int w = 0; w < 4; ++w) {
        uint64_t word = load_u64(got, w * 8);
        uint32_t gen = uint32_t((word >> 8) & 0xffffff);
        REQUIRE((gen == 1 || gen == 2));
        if (gen == 1) seen_old = true;
        if (gen == 2) REQUIRE_FALSE(seen_old);  // ordered application
      }
    });
    return s.run_traced(forced);
  };
  auto res = explore(branch, 1 << 20);
  CHECK(res.interleavings > 1);
}

TEST_CASE("explore respects its bound") {
  auto branch = [](const std::vector<uint32_t>& forced) {
    Fabric f;
    int d = f.add_device(1024);
    Scheduler s;
    f.attach_scheduler(&s);
    for (int t = 0; t < 3; ++t) {
      s.spawn("t", Endpoint::cn(t), [&f, d, t](TaskCtx& ctx) {
        for (int i = 0; i < 4; ++i)
          f.write(ctx, d, uint64_t(t) * 128 + uint64_t(i) * 8, fill(8, 1));
      });
    }
    return s.run_traced(forced);
  };
  auto res = explore(branch, 10);
  CHECK(res.bound_hit);
  CHECK(res.interleavings == 10);
}

// --- stamp and registry -------------------------------------------------

TEST_CASE("stamp check classifies consistent and torn payloads") {
  Bytes v = make_stamped("a", 7, 64);
  auto rep = stamp_check(v);
  CHECK(rep.consistent);
  CHECK(rep.generation == 7);

  Bytes torn = make_stamped("a", 7, 64);
  Bytes v8 = make_stamped("a", 8, 64);
  std::copy(v8.begin() + 32, v8.end(), torn.begin() + 32);
  CHECK_FALSE(stamp_check(torn).consistent);

  Bytes other = make_stamped("b", 7, 64);
  std::copy(other.begin(), other.begin() + 8, v.begin());
  CHECK_FALSE(stamp_check(v).consistent);

  CHECK(stamp_check(Bytes{}).consistent);
}

TEST_CASE("registry create/delete semantics") {
  Registry<int> reg;
  TaskCtx ctx;
  reg.create(ctx, "a", 1);
  CHECK_THROWS_AS(reg.create(ctx, "a", 2), SimError);
  reg.erase(ctx, "a");
  reg.create(ctx, "a", 3);
  CHECK(*reg.find("a") == 3);
  CHECK_THROWS_AS(reg.erase(ctx, "zz"), SimError);
}

namespace {

// Sequential-consistency oracle for two tasks each running create("k") then
// erase("k"): enumerates every merge of the two programs against a
// sequential registry and accepts if some merge reproduces the outcomes.
bool history_is_sequential(const std::array<bool, 2>& created,
                           const std::array<bool, 2>& erased) {
  // Encode each task's program as [create, erase]; a merge is a choice of
  // which task moves at each step.
  for (int mask = 0; mask < 16; ++mask) {
    int pos[2] = {0, 0};
    bool present = false;
    std::array<bool, 2> c{}, e{};
    bool valid = true;
    for (int step = 0; step < 4 && valid; ++step) {
      int t = (mask >> step) & 1;
      if (pos[t] >= 2) {
        valid = false;
        break;
      }
      if (pos[t] == 0) {
        c[t] = !present;
        if (!present) present = true;
      } else {
        e[t] = present;
        if (present) present = false;
      }
      ++pos[t];
    }
    if (valid && pos[0] == 2 && pos[1] == 2 && c == created && e == erased) {
      return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("registry is linearizable under exhaustive interleaving") {
  auto branch = [](const std::vector<uint32_t>& forced) {
    Registry<int> reg;
    reg.set_hook([](TaskCtx& c) {
      if (c.sched && c.sched->running()) c.sched->yield(c);
    });
    Scheduler s;
    std::array<bool, 2> created{}, erased{};
    for (int t = 0; t < 2; ++t) {
      s.spawn("t", Endpoint::cn(t), [&reg, &created, &erased, t](TaskCtx& ctx) {
        try {
          reg.create(ctx, "k", 1);
          created[t] = true;
        } catch (const SimError& e) {
          CHECK(e.code() == Err::KeyExists);
        }
        try {
          reg.erase(ctx, "k");
          erased[t] = true;
        } catch (const SimError& e) {
          CHECK(e.code() == Err::KeyNotFound);
        }
      });
    }
    auto factors = s.run_traced(forced);
    CHECK(history_is_sequential(created, erased));
    return factors;
  };
  auto res = explore(branch, 1 << 20);
  CHECK(res.interleavings >= 6);
}
