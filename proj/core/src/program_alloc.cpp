#include <memory>

#include "buddysim/program.hpp"

namespace buddysim {

const char* to_string(StepKind k) {
  switch (k) {
    case StepKind::EventOccur: return "EVENT_OCCUR";
    case StepKind::ProgramStep: return "PROGRAM_STEP";
    case StepKind::AtomicBlock: return "ATOMIC_BLOCK";
  }
  return "?";
}

std::optional<StepKind> step_kind_from_string(const std::string& s) {
  if (s == "EVENT_OCCUR") return StepKind::EventOccur;
  if (s == "PROGRAM_STEP") return StepKind::ProgramStep;
  if (s == "ATOMIC_BLOCK") return StepKind::AtomicBlock;
  return std::nullopt;
}

LevelScan compute_lsizes_and_levels(const MemPool& pool, std::uint64_t size) {
  LevelScan scan;
  const auto& cfg = pool.config;
  for (std::uint32_t i = 0; i < cfg.n_levels; ++i) {
    if (i == 0) {
      scan.lsizes.push_back(align4(cfg.max_sz));
    } else {
      scan.lsizes.push_back(align4(scan.lsizes[i - 1] / 4));
    }
    if (scan.lsizes[i] < size) break;
    scan.alloc_l = i;
    if (!level_empty(pool, i)) scan.free_l = i;
  }
  return scan;
}

std::optional<std::uint64_t> alloc_block(MemPool& pool, PoolRef pref,
                                         ThreadLocals& locals, std::int64_t free_l,
                                         std::uint64_t lsz) {
  const auto level = static_cast<std::uint32_t>(free_l);
  if (level_empty(pool, level)) return std::nullopt;
  auto& fl = pool.levels[level].free_list;
  const std::uint64_t addr = fl.front();
  fl.erase(fl.begin());
  const std::uint64_t bn = block_num(pool, addr, lsz);
  set_bit(pool, level, bn, BlockState::Allocating);
  locals.blk = addr;
  locals.bn = bn;
  locals.allocating_node = BlockId{pref, level, bn, addr};
  return addr;
}

void break_block(MemPool& pool, PoolRef pref, ThreadLocals& locals,
                 const std::vector<std::uint64_t>& lsizes) {
  const auto level = static_cast<std::uint32_t>(locals.lvl);
  const std::uint64_t lsz = lsizes[level];
  const std::uint64_t child_sz = lsizes[level + 1];
  const std::uint64_t bn = block_num(pool, locals.blk, lsz);
  set_bit(pool, level, bn, BlockState::Divided);
  for (std::uint64_t j = 0; j < 4; ++j) {
    const std::uint64_t child = 4 * bn + j;
    const std::uint64_t addr = block_ptr(pool, child_sz, child);
    if (j == 0) {
      // The quarter containing blk stays under allocation.
      set_bit(pool, level + 1, child, BlockState::Allocating);
    } else {
      set_bit(pool, level + 1, child, BlockState::Free);
      if (block_fits(pool, addr, child_sz)) free_list_append(pool, level + 1, addr);
    }
  }
  locals.bn = 4 * bn;
  locals.allocating_node = BlockId{pref, level + 1, 4 * bn, locals.blk};
}

namespace {

struct AllocLayout {
  std::size_t loop_top = 0;
  std::size_t compute_body = 0;
  std::size_t after_compute = 0;
  std::size_t split_guard = 0;
  std::size_t finalize = 0;
  std::size_t filter = 0;
  std::size_t end = 0;
};

} // namespace

ProgramPtr compile_alloc_program(ThreadId t, const std::string& thread_label,
                                 PoolRef pool, const std::string& pool_name,
                                 std::uint64_t size, TimeoutMode mode,
                                 const BugConfig& bugs) {
  auto prog = std::make_shared<Program>();
  prog->event_name = "alloc(" + pool_name + "," + std::to_string(size) + "," +
                     to_string(mode) + ")@" + thread_label;
  prog->thread = t;
  prog->alloc_mode = mode;
  prog->pool = pool;
  prog->alloc_size = size;

  auto lay = std::make_shared<AllocLayout>();
  auto& steps = prog->steps;
  const bool bug1 = bugs.bug1_split;
  const bool bug2 = bugs.bug2_forever_eagain;
  const bool bug3 = bugs.bug3_nonterm;

  // WHEN guard: the pool must be registered.
  steps.push_back({"occur", StepKind::EventOccur,
                   [pool](const KernelState& s) { return pool < s.pools.size(); },
                   [](KernelState&) { return StepOutcome{}; }});

  if (mode.is_ticks()) {
    const std::uint64_t n = mode.ticks;
    steps.push_back({"arm_endt", StepKind::ProgramStep, nullptr,
                     [t, n](KernelState& s) {
                       s.locals[t].endt = s.tick + n;
                       return StepOutcome{};
                     }});
  }

  lay->loop_top = steps.size();
  steps.push_back({"locals_init", StepKind::ProgramStep, nullptr,
                   [t](KernelState& s) {
                     auto& l = s.locals[t];
                     l.lsizes.clear();
                     l.alloc_l = -1;
                     l.free_l = -1;
                     l.i = 0;
                     l.ret = RetCode::Ok;
                     l.mempoolalloc_ret.reset();
                     return StepOutcome{};
                   }});
  steps.push_back({"lsizes_head", StepKind::ProgramStep, nullptr,
                   [t, pool](KernelState& s) {
                     auto& l = s.locals[t];
                     l.lsizes.assign(1, align4(s.pools[pool].config.max_sz));
                     return StepOutcome{};
                   }});

  lay->compute_body = steps.size();
  steps.push_back({"scan_lsize", StepKind::ProgramStep, nullptr,
                   [t](KernelState& s) {
                     auto& l = s.locals[t];
                     if (l.i > 0)
                       l.lsizes.push_back(align4(l.lsizes[l.i - 1] / 4));
                     return StepOutcome{};
                   }});
  steps.push_back({"scan_alloc_l", StepKind::ProgramStep, nullptr,
                   [t, size, lay](KernelState& s) {
                     auto& l = s.locals[t];
                     if (l.lsizes[l.i] < size)
                       return StepOutcome{lay->after_compute};
                     l.alloc_l = l.i;
                     return StepOutcome{};
                   }});
  steps.push_back({"scan_free_l", StepKind::ProgramStep, nullptr,
                   [t, pool, lay](KernelState& s) {
                     auto& l = s.locals[t];
                     if (!level_empty(s.pools[pool], static_cast<std::uint32_t>(l.i)))
                       l.free_l = l.i;
                     l.i += 1;
                     if (l.i < static_cast<std::int64_t>(s.pools[pool].config.n_levels))
                       return StepOutcome{lay->compute_body};
                     return StepOutcome{lay->after_compute};
                   }});

  lay->after_compute = steps.size();
  steps.push_back({"size_check", StepKind::ProgramStep, nullptr,
                   [t, bug3, lay](KernelState& s) {
                     auto& l = s.locals[t];
                     if (l.alloc_l < 0) {
                       l.ret = bug3 ? RetCode::NoMem : RetCode::SizeErr;
                       return StepOutcome{lay->filter};
                     }
                     if (l.free_l < 0) {
                       l.ret = RetCode::NoMem;
                       return StepOutcome{lay->filter};
                     }
                     return StepOutcome{};
                   }});
  steps.push_back({"alloc_block", StepKind::AtomicBlock, nullptr,
                   [t, pool, lay](KernelState& s) {
                     auto& l = s.locals[t];
                     auto blk = alloc_block(s.pools[pool], pool, l,
                                            l.free_l, l.lsizes[l.free_l]);
                     if (!blk) {
                       l.ret = RetCode::Again;
                       return StepOutcome{lay->filter};
                     }
                     return StepOutcome{};
                   }});
  steps.push_back({"split_init", StepKind::ProgramStep, nullptr,
                   [t](KernelState& s) {
                     auto& l = s.locals[t];
                     l.lvl = l.free_l;
                     return StepOutcome{};
                   }});

  lay->split_guard = steps.size();
  steps.push_back({"split_guard", StepKind::ProgramStep, nullptr,
                   [t, pool, bug1, lay](KernelState& s) {
                     auto& l = s.locals[t];
                     bool more = l.lvl < l.alloc_l;
                     if (bug1)
                       more = level_empty(s.pools[pool],
                                          static_cast<std::uint32_t>(l.alloc_l)) &&
                              more;
                     if (!more) return StepOutcome{lay->finalize};
                     return StepOutcome{};
                   }});
  steps.push_back({"break_block", StepKind::AtomicBlock, nullptr,
                   [t, pool](KernelState& s) {
                     auto& l = s.locals[t];
                     break_block(s.pools[pool], pool, l, l.lsizes);
                     return StepOutcome{};
                   }});
  steps.push_back({"split_advance", StepKind::ProgramStep, nullptr,
                   [t, lay](KernelState& s) {
                     s.locals[t].lvl += 1;
                     return StepOutcome{lay->split_guard};
                   }});

  lay->finalize = steps.size();
  steps.push_back({"alloc_finalize", StepKind::AtomicBlock, nullptr,
                   [t, pool](KernelState& s) {
                     auto& l = s.locals[t];
                     auto& mp = s.pools[pool];
                     const auto lvl = static_cast<std::uint32_t>(l.lvl);
                     l.bn = block_num(mp, l.blk, l.lsizes[lvl]);
                     set_bit(mp, lvl, l.bn, BlockState::Allocated);
                     l.allocating_node.reset();
                     l.ret = RetCode::Ok;
                     const BlockId id{pool, static_cast<std::uint32_t>(l.alloc_l),
                                      block_num(mp, l.blk, l.lsizes[l.alloc_l]),
                                      l.blk};
                     l.mempoolalloc_ret = id;
                     s.mblocks[t].insert(id);
                     return StepOutcome{};
                   }});

  lay->filter = steps.size();
  steps.push_back({"ret_filter", StepKind::ProgramStep, nullptr,
                   [t, mode, bug2, lay](KernelState& s) {
                     auto& l = s.locals[t];
                     const bool done = l.ret == RetCode::Ok || mode.is_no_wait() ||
                                       (bug2 && l.ret == RetCode::Again) ||
                                       l.ret == RetCode::SizeErr;
                     if (done) return StepOutcome{lay->end};
                     return StepOutcome{};
                   }});
  steps.push_back({"pend", StepKind::AtomicBlock, nullptr,
                   [t, pool](KernelState& s) {
                     s.thd_state[t] = ThreadState::Blocked;
                     s.pools[pool].wait_q.push_back(t);
                     return StepOutcome{};
                   }});
  steps.push_back({"timeout_check", StepKind::ProgramStep, nullptr,
                   [t, mode, bug2, lay](KernelState& s) {
                     auto& l = s.locals[t];
                     if (mode.is_ticks() && s.tick > l.endt) {
                       l.ret = bug2 ? RetCode::Again : RetCode::Timeout;
                       l.mempoolalloc_ret.reset();
                       return StepOutcome{lay->end};
                     }
                     return StepOutcome{lay->loop_top};
                   }});

  lay->end = steps.size();
  return prog;
}

PoolAllocResult pool_alloc(KernelState& state, ThreadId t, PoolRef pool,
                           std::uint64_t size, const BugConfig& bugs) {
  // A NOWAIT run of the service is one pool_alloc attempt followed by an
  // immediate return, so the compiled program doubles as the bare helper.
  auto prog = compile_alloc_program(t, "t" + std::to_string(t), pool,
                                    state.pools[pool].config.id, size,
                                    TimeoutMode::no_wait(), bugs);
  std::size_t pc = 0;
  while (pc < prog->steps.size()) {
    const auto& step = prog->steps[pc];
    if (step.await && !step.await(state))
      throw std::logic_error("pool_alloc: blocked await in NOWAIT run");
    auto out = step.run(state);
    pc = out.jump ? *out.jump : pc + 1;
  }
  return {state.locals[t].ret, state.locals[t].mempoolalloc_ret};
}

} // namespace buddysim
