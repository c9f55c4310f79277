#include <doctest.h>

#include "buddysim/program.hpp"
#include "buddysim/safety.hpp"
#include "test_helpers.hpp"

using namespace buddysim;
using namespace buddysim::testing;

namespace {

KernelState fresh_pool_a_state(std::size_t threads = 1) {
  return make_state({init_pool(pool_a_config())}, threads);
}

// Drives a compiled program sequentially (no interleaving), with the thread
// scheduled. Returns the number of executed steps.
std::size_t run_sequential(KernelState& s, ThreadId t, const ProgramPtr& prog,
                           std::size_t step_limit = 10000) {
  s.cur = t;
  s.thd_state[t] = ThreadState::Running;
  std::size_t pc = 0, steps = 0;
  while (pc < prog->steps.size() && steps < step_limit) {
    const auto& step = prog->steps[pc];
    if (step.await && !step.await(s))
      throw std::logic_error("sequential run blocked at " + step.label);
    auto out = step.run(s);
    pc = out.jump ? *out.jump : pc + 1;
    ++steps;
  }
  return steps;
}

} // namespace

TEST_CASE("compute_lsizes_and_levels walks the level table like pool_alloc") {
  const KernelState s = fresh_pool_a_state();

  SUBCASE("size 50 -> alloc at level 1, free blocks at level 0") {
    auto scan = compute_lsizes_and_levels(s.pools[0], 50);
    CHECK(scan.lsizes == std::vector<std::uint64_t>{256, 64});
    CHECK(scan.alloc_l == 1);
    CHECK(scan.free_l == 0);
  }
  SUBCASE("size 300 exceeds the pool") {
    auto scan = compute_lsizes_and_levels(s.pools[0], 300);
    CHECK(scan.alloc_l == -1);
  }
  SUBCASE("size 256 fits exactly at level 0") {
    auto scan = compute_lsizes_and_levels(s.pools[0], 256);
    CHECK(scan.alloc_l == 0);
    CHECK(scan.free_l == 0);
  }
  SUBCASE("free_l never exceeds alloc_l") {
    for (std::uint64_t size = 1; size <= 300; ++size) {
      auto scan = compute_lsizes_and_levels(s.pools[0], size);
      CHECK(scan.free_l <= scan.alloc_l);
    }
  }
}

TEST_CASE("alloc_block pops the head and marks it ALLOCATING") {
  KernelState s = fresh_pool_a_state();
  auto& l = s.locals[0];

  auto blk = alloc_block(s.pools[0], 0, l, 0, 256);
  REQUIRE(blk.has_value());
  CHECK(*blk == 0);
  CHECK(get_bit(s.pools[0], 0, 0) == BlockState::Allocating);
  CHECK(l.allocating_node == BlockId{0, 0, 0, 0});
  CHECK(level_empty(s.pools[0], 0));

  SUBCASE("an emptied level backs out leaving no trace") {
    const MemPool before = s.pools[0];
    ThreadLocals before_locals = l;
    auto none = alloc_block(s.pools[0], 0, l, 0, 256);
    CHECK_FALSE(none.has_value());
    CHECK(s.pools[0].levels == before.levels);
    CHECK(l == before_locals);
  }
}

TEST_CASE("break_block splits one block into four children") {
  KernelState s = fresh_pool_a_state();
  auto& l = s.locals[0];
  auto blk = alloc_block(s.pools[0], 0, l, 0, 256);
  REQUIRE(blk.has_value());
  l.lvl = 0;

  break_block(s.pools[0], 0, l, {256, 64});

  CHECK(get_bit(s.pools[0], 0, 0) == BlockState::Divided);
  CHECK(s.pools[0].levels[1].bits ==
        std::vector<BlockState>{BlockState::Allocating, BlockState::Free,
                                BlockState::Free, BlockState::Free});
  CHECK(s.pools[0].levels[1].free_list ==
        std::vector<std::uint64_t>{64, 128, 192});
  CHECK(l.allocating_node == BlockId{0, 1, 0, 0});
}

TEST_CASE("pool_alloc on a fresh pool splits down to the requested level") {
  KernelState s = fresh_pool_a_state();
  auto res = pool_alloc(s, 0, 0, 50, BugConfig{});
  CHECK(res.ret == RetCode::Ok);
  REQUIRE(res.block.has_value());
  CHECK(res.block->level == 1);
  CHECK(res.block->block == 0);
  CHECK(res.block->data == 0);
  CHECK(get_bit(s.pools[0], 1, 0) == BlockState::Allocated);
  CHECK(s.mblocks[0].count(*res.block) == 1);
  CHECK(state_inv(s));
}

TEST_CASE("pool_alloc distinguishes oversize requests from exhaustion") {
  SUBCASE("oversize returns ESIZEERR when fixed") {
    KernelState s = fresh_pool_a_state();
    auto res = pool_alloc(s, 0, 0, 300, BugConfig{});
    CHECK(res.ret == RetCode::SizeErr);
    CHECK_FALSE(res.block.has_value());
  }
  SUBCASE("oversize returns ENOMEM with bug3 on") {
    KernelState s = fresh_pool_a_state();
    BugConfig bugs;
    bugs.bug3_nonterm = true;
    auto res = pool_alloc(s, 0, 0, 300, bugs);
    CHECK(res.ret == RetCode::NoMem);
  }
  SUBCASE("no free block returns ENOMEM") {
    KernelState s = fresh_pool_a_state();
    auto first = pool_alloc(s, 0, 0, 256, BugConfig{});
    REQUIRE(first.ret == RetCode::Ok);
    auto res = pool_alloc(s, 0, 0, 256, BugConfig{});
    CHECK(res.ret == RetCode::NoMem);
  }
}

TEST_CASE("free_block coalesces an alloc/free round-trip back to the initial pool") {
  KernelState s = fresh_pool_a_state();
  const MemPool fresh = init_pool(pool_a_config());

  auto res = pool_alloc(s, 0, 0, 50, BugConfig{});
  REQUIRE(res.ret == RetCode::Ok);

  auto prog = compile_free_program(0, "t1", "POOL_A", *res.block);
  run_sequential(s, 0, prog);

  CHECK(s.pools[0].levels == fresh.levels);
  CHECK(s.pools[0].wait_q.empty());
  CHECK(s.mblocks[0].empty());
  CHECK_FALSE(s.locals[0].freeing_node.has_value());
  CHECK(state_inv(s));
}

TEST_CASE("free_block mid-trace states show FREEING then FREE on the parent") {
  KernelState s = fresh_pool_a_state();
  auto res = pool_alloc(s, 0, 0, 50, BugConfig{});
  REQUIRE(res.ret == RetCode::Ok);
  // level 1 holds [ALLOCATED, FREE, FREE, FREE]: freeing (1,0) must coalesce.

  auto prog = compile_free_program(0, "t1", "POOL_A", *res.block);
  s.cur = 0;
  s.thd_state[0] = ThreadState::Running;
  std::size_t pc = 0;
  bool saw_parent_freeing = false;
  int coalesce_iterations = 0;
  while (pc < prog->steps.size()) {
    const auto& step = prog->steps[pc];
    if (step.await && !step.await(s)) FAIL("blocked await");
    auto out = step.run(s);
    if (out.free_block_iteration) ++coalesce_iterations;
    if (get_bit(s.pools[0], 0, 0) == BlockState::Freeing)
      saw_parent_freeing = true;
    pc = out.jump ? *out.jump : pc + 1;
  }
  CHECK(saw_parent_freeing);
  CHECK(get_bit(s.pools[0], 0, 0) == BlockState::Free);
  CHECK(s.pools[0].levels[1].bits ==
        std::vector<BlockState>(4, BlockState::NoExist));
  CHECK(s.pools[0].levels[0].free_list == std::vector<std::uint64_t>{0});
  // Loop variant: at most level(b) + 1 = 2 iterations.
  CHECK(coalesce_iterations <= 2);
}

TEST_CASE("free of a level-0 block with no partners appends and stops") {
  KernelState s = fresh_pool_a_state();
  auto res = pool_alloc(s, 0, 0, 256, BugConfig{});
  REQUIRE(res.ret == RetCode::Ok);
  REQUIRE(res.block->level == 0);

  auto prog = compile_free_program(0, "t1", "POOL_A", *res.block);
  s.cur = 0;
  s.thd_state[0] = ThreadState::Running;
  std::size_t pc = 0;
  int iterations = 0;
  while (pc < prog->steps.size()) {
    const auto& step = prog->steps[pc];
    auto out = step.run(s);
    if (out.free_block_iteration) ++iterations;
    pc = out.jump ? *out.jump : pc + 1;
  }
  CHECK(iterations == 1);
  CHECK(s.pools[0].levels[0].free_list == std::vector<std::uint64_t>{0});
}

TEST_CASE("coalescing cascades one level and stops at busy partners") {
  // Pool with five levels; block 174 at level 4 has partners 172, 173, 175
  // free, and the parent quad 40..43 at level 3 is otherwise allocated.
  PoolConfig cfg;
  cfg.id = "DEEP";
  cfg.buf = 0;
  cfg.max_sz = 4096;
  cfg.n_max = 1;
  cfg.n_levels = 5;
  KernelState s = make_state({init_pool(cfg)}, 1);
  auto& mp = s.pools[0];

  // Build the path 0 -> 2 -> 10 -> 43 -> 172..175 by hand.
  auto divide = [&](std::uint32_t level, std::uint64_t block) {
    set_bit(mp, level, block, BlockState::Divided);
    for (std::uint64_t j = 0; j < 4; ++j)
      set_bit(mp, level + 1, 4 * block + j, BlockState::Allocated);
  };
  free_list_remove(mp, 0, 0);
  divide(0, 0);
  divide(1, 2);
  divide(2, 10);
  divide(3, 43);
  const std::uint64_t lsz4 = 16;
  for (std::uint64_t b : {172, 173, 175}) {
    set_bit(mp, 4, b, BlockState::Free);
    free_list_append(mp, 4, b * lsz4);
  }
  REQUIRE(state_inv(s));

  const BlockId victim{0, 4, 174, 174 * lsz4};
  s.mblocks[0].insert(victim);
  auto prog = compile_free_program(0, "t1", "DEEP", victim);
  s.cur = 0;
  s.thd_state[0] = ThreadState::Running;
  std::size_t pc = 0;
  bool parent_43_freeing = false;
  while (pc < prog->steps.size()) {
    const auto& step = prog->steps[pc];
    if (step.await && !step.await(s)) FAIL("blocked await");
    auto out = step.run(s);
    if (get_bit(mp, 3, 43) == BlockState::Freeing) parent_43_freeing = true;
    pc = out.jump ? *out.jump : pc + 1;
  }
  // The quad 172..175 coalesced into parent 43, which then could not merge
  // further (partners 40..42 are allocated) and landed in the level-3 list.
  CHECK(parent_43_freeing);
  for (std::uint64_t b : {172, 173, 174, 175})
    CHECK(get_bit(mp, 4, b) == BlockState::NoExist);
  CHECK(get_bit(mp, 3, 43) == BlockState::Free);
  const std::uint64_t lsz3 = 64;
  CHECK(mp.levels[3].free_list == std::vector<std::uint64_t>{43 * lsz3});
  CHECK(state_inv(s));
}

TEST_CASE("split-loop guard differs only in the level_empty condition") {
  // With bug1 on, a block released at alloc_l between the level scan and the
  // guard read stops the split early; the program then publishes a block id
  // at alloc_l whose span is the larger block.
  PoolConfig cfg;
  cfg.id = "WIDE";
  cfg.buf = 0;
  cfg.max_sz = 256;
  cfg.n_max = 2;
  cfg.n_levels = 2;

  auto prepare = [&]() {
    KernelState s = make_state({init_pool(cfg)}, 1);
    // Thread 0 owns all four children of block 0; block 1 is still FREE, so
    // a size-50 request scans free_l = 0 with level 1 empty.
    for (int k = 0; k < 4; ++k) {
      auto r = pool_alloc(s, 0, 0, 50, BugConfig{});
      REQUIRE(r.ret == RetCode::Ok);
    }
    REQUIRE(level_empty(s.pools[0], 1));
    REQUIRE_FALSE(level_empty(s.pools[0], 0));
    return s;
  };

  // Runs the alloc program, applying `concurrent_release` right before the
  // first split-guard evaluation (the irq-unlocked window of the loop).
  auto run_with_release = [&](KernelState& s, const BugConfig& bugs) {
    auto prog = compile_alloc_program(0, "t1", 0, "WIDE", 50,
                                      TimeoutMode::no_wait(), bugs);
    s.cur = 0;
    s.thd_state[0] = ThreadState::Running;
    std::size_t pc = 0;
    bool released = false;
    while (pc < prog->steps.size()) {
      const auto& step = prog->steps[pc];
      if (step.label == "split_guard" && !released) {
        set_bit(s.pools[0], 1, 1, BlockState::Free);
        s.mblocks[0].erase(BlockId{0, 1, 1, 64});
        free_list_append(s.pools[0], 1, 64);
        released = true;
      }
      auto out = step.run(s);
      pc = out.jump ? *out.jump : pc + 1;
    }
    REQUIRE(released);
    return PoolAllocResult{s.locals[0].ret, s.locals[0].mempoolalloc_ret};
  };

  SUBCASE("fixed guard keeps splitting to alloc_l") {
    KernelState s = prepare();
    auto res = run_with_release(s, BugConfig{});
    REQUIRE(res.ret == RetCode::Ok);
    REQUIRE(res.block.has_value());
    CHECK(res.block->level == 1);
    CHECK(get_bit(s.pools[0], res.block->level, res.block->block) ==
          BlockState::Allocated);
  }
  SUBCASE("bug1 guard stops early and misreports the level") {
    KernelState s = prepare();
    BugConfig bugs;
    bugs.bug1_split = true;
    auto res = run_with_release(s, bugs);
    REQUIRE(res.ret == RetCode::Ok);
    REQUIRE(res.block.has_value());
    // Claimed coordinates say level 1, but the block actually allocated is
    // the whole level-0 block 1.
    CHECK(res.block->level == 1);
    CHECK(res.block->data == 256);
    CHECK(get_bit(s.pools[0], 0, 1) == BlockState::Allocated);
    CHECK(get_bit(s.pools[0], res.block->level, res.block->block) !=
          BlockState::Allocated);
  }
}

TEST_CASE("freeing a block someone else is freeing does not progress") {
  KernelState s = fresh_pool_a_state(2);
  auto res = pool_alloc(s, 0, 0, 50, BugConfig{});
  REQUIRE(res.ret == RetCode::Ok);
  // Another thread has already claimed the block for release.
  set_bit(s.pools[0], res.block->level, res.block->block, BlockState::Freeing);
  s.locals[1].freeing_node = *res.block;

  auto prog = compile_free_program(0, "t1", "POOL_A", *res.block);
  // The occurrence guard holds, the acquire guard does not.
  CHECK(prog->steps[0].await(s));
  REQUIRE(prog->steps[1].await);
  CHECK_FALSE(prog->steps[1].await(s));
}
