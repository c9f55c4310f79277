#include "buddysim/kernel_state.hpp"

namespace buddysim {

namespace {

void feed_block_id(Fnv1a& f, const BlockId& b) {
  f.feed(b.pool);
  f.feed(b.level);
  f.feed(b.block);
  f.feed(b.data);
}

void feed_opt_block(Fnv1a& f, const std::optional<BlockId>& b) {
  if (!b) {
    f.feed(0);
    return;
  }
  f.feed(1);
  feed_block_id(f, *b);
}

void feed_locals(Fnv1a& f, const ThreadLocals& l) {
  f.feed(l.lsizes.size());
  for (auto v : l.lsizes) f.feed(v);
  f.feed(static_cast<std::uint64_t>(l.alloc_l));
  f.feed(static_cast<std::uint64_t>(l.free_l));
  f.feed(static_cast<std::uint64_t>(l.lvl));
  f.feed(l.lsz);
  f.feed(l.bn);
  f.feed(l.bb);
  f.feed(static_cast<std::uint64_t>(l.i));
  f.feed(l.blk);
  f.feed(l.block_pt);
  f.feed(l.free_block_r ? 1 : 0);
  f.feed(l.need_resched ? 1 : 0);
  f.feed(l.th);
  f.feed(l.endt);
  feed_opt_block(f, l.freeing_node);
  feed_opt_block(f, l.allocating_node);
  f.feed(static_cast<std::uint64_t>(l.ret));
  feed_opt_block(f, l.mempoolalloc_ret);
}

void feed_pool(Fnv1a& f, const MemPool& p) {
  f.feed(p.config.buf);
  f.feed(p.config.max_sz);
  f.feed(p.config.n_max);
  f.feed(p.config.n_levels);
  f.feed(p.levels.size());
  for (const auto& lvl : p.levels) {
    f.feed(lvl.bits.size());
    for (auto b : lvl.bits) f.feed(static_cast<std::uint64_t>(b));
    f.feed(lvl.free_list.size());
    for (auto a : lvl.free_list) f.feed(a);
  }
  f.feed(p.wait_q.size());
  for (auto t : p.wait_q) f.feed(t);
}

} // namespace

void feed_state(Fnv1a& f, const KernelState& s) {
  f.feed(s.pools.size());
  for (const auto& p : s.pools) feed_pool(f, p);
  f.feed(s.cur ? 1 + static_cast<std::uint64_t>(*s.cur) : 0);
  f.feed(s.tick);
  f.feed(s.thd_state.size());
  for (auto st : s.thd_state) f.feed(static_cast<std::uint64_t>(st));
  for (const auto& l : s.locals) feed_locals(f, l);
  for (const auto& blocks : s.mblocks) {
    f.feed(blocks.size());
    for (const auto& b : blocks) feed_block_id(f, b); // std::set: sorted order
  }
}

std::uint64_t state_digest(const KernelState& s) {
  Fnv1a f;
  feed_state(f, s);
  return f.h;
}

} // namespace buddysim
