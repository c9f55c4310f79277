// Global kernel snapshot: pools, scheduler bookkeeping, per-thread service
// locals and owned-block sets.
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "buddysim/pool.hpp"

namespace buddysim {

enum class ThreadState : std::uint8_t { Ready, Running, Blocked };

const char* to_string(ThreadState s);

enum class RetCode : std::uint8_t { Ok, NoMem, Again, Timeout, SizeErr };

const char* to_string(RetCode r);

// Waiting mode of an allocation request.
struct TimeoutMode {
  enum class Kind : std::uint8_t { Forever, NoWait, Ticks } kind = Kind::Forever;
  std::uint64_t ticks = 0; // >= 1 when kind == Ticks

  static TimeoutMode forever() { return {Kind::Forever, 0}; }
  static TimeoutMode no_wait() { return {Kind::NoWait, 0}; }
  static TimeoutMode after(std::uint64_t n) { return {Kind::Ticks, n}; }

  bool is_forever() const { return kind == Kind::Forever; }
  bool is_no_wait() const { return kind == Kind::NoWait; }
  bool is_ticks() const { return kind == Kind::Ticks; }
  bool operator==(const TimeoutMode&) const = default;
};

std::string to_string(const TimeoutMode& m);

// Switchable reintroductions of the three implementation defects.
struct BugConfig {
  bool bug1_split = false;          // keep level_empty() in the split-loop guard
  bool bug2_forever_eagain = false; // return EAGAIN to the caller, EAGAIN on expiry
  bool bug3_nonterm = false;        // report oversize requests as ENOMEM

  bool any() const { return bug1_split || bug2_forever_eagain || bug3_nonterm; }
  bool operator==(const BugConfig&) const = default;
};

// Per-thread copies of the service-local variables.
struct ThreadLocals {
  std::vector<std::uint64_t> lsizes;
  std::int64_t alloc_l = -1;
  std::int64_t free_l = -1;
  std::int64_t lvl = 0;
  std::uint64_t lsz = 0;
  std::uint64_t bn = 0;
  std::uint64_t bb = 0;
  std::int64_t i = 0;
  std::uint64_t blk = 0;
  std::uint64_t block_pt = 0;
  bool free_block_r = false;
  bool need_resched = false;
  ThreadId th = 0;
  std::uint64_t endt = 0;
  std::optional<BlockId> freeing_node;
  std::optional<BlockId> allocating_node;
  RetCode ret = RetCode::Ok;
  std::optional<BlockId> mempoolalloc_ret;

  bool operator==(const ThreadLocals&) const = default;
};

struct KernelState {
  std::vector<MemPool> pools;
  std::optional<ThreadId> cur;
  std::uint64_t tick = 0;
  std::vector<ThreadState> thd_state;
  std::vector<ThreadLocals> locals;
  std::vector<std::set<BlockId>> mblocks;

  std::size_t thread_count() const { return thd_state.size(); }
};

// The actor performing a transition.
struct Domain {
  enum class Kind : std::uint8_t { Scheduler, Timer, Thread } kind = Kind::Scheduler;
  ThreadId thread = 0; // meaningful when kind == Thread

  static Domain scheduler() { return {Kind::Scheduler, 0}; }
  static Domain timer() { return {Kind::Timer, 0}; }
  static Domain of_thread(ThreadId t) { return {Kind::Thread, t}; }

  bool is_thread() const { return kind == Kind::Thread; }
  bool operator==(const Domain&) const = default;
};

std::string to_string(const Domain& d);

// 64-bit structural digest over (pools, cur, tick, thd_state, locals,
// mblocks), with deterministic field and container order.
std::uint64_t state_digest(const KernelState& s);

// Incremental FNV-1a helper shared by the digest implementations.
struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  void feed(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  }
  void feed_bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  }
};

void feed_state(Fnv1a& f, const KernelState& s);

} // namespace buddysim
