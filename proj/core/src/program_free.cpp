#include <memory>

#include "buddysim/program.hpp"

namespace buddysim {

namespace {

struct FreeLayout {
  std::size_t for_body = 0;
  std::size_t fb_r_set = 0;
  std::size_t while_top = 0;
  std::size_t drain = 0;
  std::size_t end = 0;
};

std::uint64_t pow4u(std::uint32_t n) { return std::uint64_t{1} << (2 * n); }

} // namespace

ProgramPtr compile_free_program(ThreadId t, const std::string& thread_label,
                                const std::string& pool_name, const BlockId& b) {
  auto prog = std::make_shared<Program>();
  prog->event_name = "free(" + pool_name + "," + std::to_string(b.level) + "," +
                     std::to_string(b.block) + ")@" + thread_label;
  prog->thread = t;
  prog->pool = b.pool;
  prog->free_block_arg = b;

  auto lay = std::make_shared<FreeLayout>();
  auto& steps = prog->steps;
  const PoolRef pref = b.pool;

  // WHEN guard: block coordinates in range and data consistent with them.
  steps.push_back({"occur", StepKind::EventOccur,
                   [b, pref](const KernelState& s) {
                     if (pref >= s.pools.size()) return false;
                     const auto& mp = s.pools[pref];
                     if (b.level >= mp.levels.size()) return false;
                     if (b.block >= mp.levels[b.level].bits.size()) return false;
                     const std::uint64_t lsz =
                         align4(mp.config.max_sz) / pow4u(b.level);
                     return b.data == block_ptr(mp, lsz, b.block);
                   },
                   [](KernelState&) { return StepOutcome{}; }});

  // Claim the block: only an ALLOCATED block can enter FREEING, and marking
  // it keeps any other thread from freeing the same block.
  steps.push_back({"acquire", StepKind::AtomicBlock,
                   [b, pref](const KernelState& s) {
                     return get_bit(s.pools[pref], b.level, b.block) ==
                            BlockState::Allocated;
                   },
                   [t, b, pref](KernelState& s) {
                     set_bit(s.pools[pref], b.level, b.block, BlockState::Freeing);
                     s.locals[t].freeing_node = b;
                     return StepOutcome{};
                   }});

  steps.push_back({"mblocks_remove", StepKind::ProgramStep, nullptr,
                   [t, b](KernelState& s) {
                     if (s.mblocks[t].erase(b) == 0)
                       throw std::logic_error("free of a block not owned by t" +
                                              std::to_string(t));
                     return StepOutcome{};
                   }});

  steps.push_back({"need_resched_init", StepKind::ProgramStep, nullptr,
                   [t](KernelState& s) {
                     s.locals[t].need_resched = false;
                     return StepOutcome{};
                   }});

  steps.push_back({"lsizes_head", StepKind::ProgramStep, nullptr,
                   [t, pref](KernelState& s) {
                     s.locals[t].lsizes.assign(
                         1, align4(s.pools[pref].config.max_sz));
                     return StepOutcome{};
                   }});
  steps.push_back({"lsizes_for_init", StepKind::ProgramStep, nullptr,
                   [t](KernelState& s) {
                     s.locals[t].i = 1;
                     return StepOutcome{};
                   }});
  lay->for_body = steps.size();
  steps.push_back({"lsizes_for_body", StepKind::ProgramStep, nullptr,
                   [t, b, lay](KernelState& s) {
                     auto& l = s.locals[t];
                     if (l.i > static_cast<std::int64_t>(b.level))
                       return StepOutcome{lay->fb_r_set};
                     l.lsizes.push_back(align4(l.lsizes[l.i - 1] / 4));
                     return StepOutcome{};
                   }});
  steps.push_back({"lsizes_for_incr", StepKind::ProgramStep, nullptr,
                   [t, lay](KernelState& s) {
                     s.locals[t].i += 1;
                     return StepOutcome{lay->for_body};
                   }});

  lay->fb_r_set = steps.size();
  steps.push_back({"fb_loop_arm", StepKind::ProgramStep, nullptr,
                   [t](KernelState& s) {
                     s.locals[t].free_block_r = true;
                     return StepOutcome{};
                   }});
  steps.push_back({"fb_init_bn", StepKind::ProgramStep, nullptr,
                   [t, b](KernelState& s) {
                     s.locals[t].bn = b.block;
                     return StepOutcome{};
                   }});
  steps.push_back({"fb_init_lvl", StepKind::ProgramStep, nullptr,
                   [t, b](KernelState& s) {
                     s.locals[t].lvl = b.level;
                     return StepOutcome{};
                   }});

  lay->while_top = steps.size();
  steps.push_back({"fb_while", StepKind::ProgramStep, nullptr,
                   [t, lay](KernelState& s) {
                     if (!s.locals[t].free_block_r) return StepOutcome{lay->drain};
                     return StepOutcome{};
                   }});
  steps.push_back({"fb_lsz", StepKind::ProgramStep, nullptr,
                   [t](KernelState& s) {
                     auto& l = s.locals[t];
                     l.lsz = l.lsizes[l.lvl];
                     return StepOutcome{};
                   }});
  steps.push_back({"fb_blk", StepKind::ProgramStep, nullptr,
                   [t, pref](KernelState& s) {
                     auto& l = s.locals[t];
                     l.blk = block_ptr(s.pools[pref], l.lsz, l.bn);
                     return StepOutcome{};
                   }});
  steps.push_back(
      {"fb_coalesce", StepKind::AtomicBlock, nullptr,
       [t, pref, lay](KernelState& s) {
         auto& l = s.locals[t];
         auto& mp = s.pools[pref];
         const auto lvl = static_cast<std::uint32_t>(l.lvl);
         set_bit(mp, lvl, l.bn, BlockState::Free);
         l.freeing_node.reset();
         if (l.lvl > 0 && partner_bits_free(mp, lvl, l.bn)) {
           for (l.i = 0; l.i < 4; ++l.i) {
             l.bb = (l.bn / 4) * 4 + l.i;
             set_bit(mp, lvl, l.bb, BlockState::NoExist);
             l.block_pt = block_ptr(mp, l.lsz, l.bb);
             if (l.bb != l.bn && block_fits(mp, l.block_pt, l.lsz))
               free_list_remove(mp, lvl, l.block_pt);
           }
           l.lvl -= 1;
           l.bn /= 4;
           set_bit(mp, static_cast<std::uint32_t>(l.lvl), l.bn, BlockState::Freeing);
           const std::uint64_t parent_sz =
               align4(mp.config.max_sz) / pow4u(static_cast<std::uint32_t>(l.lvl));
           l.freeing_node = BlockId{pref, static_cast<std::uint32_t>(l.lvl), l.bn,
                                    block_ptr(mp, parent_sz, l.bn)};
         } else {
           if (block_fits(mp, l.blk, l.lsz)) free_list_append(mp, lvl, l.blk);
           l.free_block_r = false;
         }
         StepOutcome out{lay->while_top};
         out.free_block_iteration = true;
         return out;
       }});

  // Wake every waiter of this pool and, when any was woken, yield so the
  // scheduler can run one of them.
  lay->drain = steps.size();
  steps.push_back({"wake_waiters", StepKind::AtomicBlock, nullptr,
                   [t, pref](KernelState& s) {
                     auto& l = s.locals[t];
                     auto& q = s.pools[pref].wait_q;
                     while (!q.empty()) {
                       l.th = q.front();
                       q.erase(q.begin());
                       s.thd_state[l.th] = ThreadState::Ready;
                       l.need_resched = true;
                     }
                     if (l.need_resched && s.thd_state[t] == ThreadState::Running)
                       s.thd_state[t] = ThreadState::Ready;
                     return StepOutcome{};
                   }});

  lay->end = steps.size();
  return prog;
}

} // namespace buddysim
