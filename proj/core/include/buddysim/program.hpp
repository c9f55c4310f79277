// The alloc and free kernel services as small-step event programs. A Step is
// the unit of interleaving; ATOM spans execute as a single step.
#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "buddysim/kernel_state.hpp"

namespace buddysim {

enum class StepKind : std::uint8_t { EventOccur, ProgramStep, AtomicBlock };

const char* to_string(StepKind k);
std::optional<StepKind> step_kind_from_string(const std::string& s);

// Result of executing one step: where the program continues, and whether the
// step was a free_block loop iteration (consumed by the termination checker).
struct StepOutcome {
  std::optional<std::size_t> jump; // absent: fall through to pc + 1
  bool free_block_iteration = false;
};

struct Step {
  std::string label;
  StepKind kind = StepKind::ProgramStep;
  // AWAIT guard evaluated in addition to the scheduling condition; a step
  // with an unsatisfied guard is simply not enabled.
  std::function<bool(const KernelState&)> await;
  std::function<StepOutcome(KernelState&)> run;
};

// One compiled event body. Steps never run on real threads; the simulator
// interleaves them.
struct Program {
  std::string event_name;
  ThreadId thread = 0;
  std::vector<Step> steps;
  // Set for alloc programs so the timer can identify armed deadlines.
  std::optional<TimeoutMode> alloc_mode;
  PoolRef pool = 0;
  std::uint64_t alloc_size = 0;
  std::optional<BlockId> free_block_arg;
};

using ProgramPtr = std::shared_ptr<const Program>;

// Result of the pool_alloc level scan.
struct LevelScan {
  std::vector<std::uint64_t> lsizes;
  std::int64_t alloc_l = -1;
  std::int64_t free_l = -1;
};

// Walks the level-size table as pool_alloc does: lsizes[0] = align4(max_sz),
// lsizes[i] = align4(lsizes[i-1] / 4), stopping once the level size drops
// below the request. alloc_l is the deepest level still large enough; free_l
// the deepest visited level with a nonempty free list.
LevelScan compute_lsizes_and_levels(const MemPool& pool, std::uint64_t size);

// Pops the head of the free list at free_l, marks the block ALLOCATING and
// records it in locals.allocating_node/bn/blk. Returns the block address, or
// nothing when the list is empty (the caller backs out untouched).
std::optional<std::uint64_t> alloc_block(MemPool& pool, PoolRef pref,
                                         ThreadLocals& locals, std::int64_t free_l,
                                         std::uint64_t lsz);

// Splits the ALLOCATING block at locals.lvl into four children: the quarter
// holding blk stays ALLOCATING, the other three become FREE and join the
// child free list when they fit. allocating_node advances to the child.
void break_block(MemPool& pool, PoolRef pref, ThreadLocals& locals,
                 const std::vector<std::uint64_t>& lsizes);

// Compiles the k_mem_pool_alloc event (retry loop included) for thread t.
ProgramPtr compile_alloc_program(ThreadId t, const std::string& thread_label,
                                 PoolRef pool, const std::string& pool_name,
                                 std::uint64_t size, TimeoutMode mode,
                                 const BugConfig& bugs);

// Compiles the k_mem_pool_free event for thread t releasing block b.
ProgramPtr compile_free_program(ThreadId t, const std::string& thread_label,
                                const std::string& pool_name, const BlockId& b);

// Runs an alloc program to completion with no interleaving. With NOWAIT mode
// this is exactly the bare pool_alloc helper; used by tests and single-shot
// callers.
struct PoolAllocResult {
  RetCode ret = RetCode::Ok;
  std::optional<BlockId> block;
};
PoolAllocResult pool_alloc(KernelState& state, ThreadId t, PoolRef pool,
                           std::uint64_t size, const BugConfig& bugs);

} // namespace buddysim
