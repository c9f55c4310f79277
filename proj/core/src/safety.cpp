#include "buddysim/safety.hpp"

#include <algorithm>
#include <set>

namespace buddysim {

std::string to_string(const Witness& w) {
  std::string s = "pool " + std::to_string(w.pool);
  if (w.level) s += ", level " + std::to_string(*w.level);
  if (w.block) s += ", block " + std::to_string(*w.block);
  if (w.addr) s += ", addr " + std::to_string(*w.addr);
  if (w.thread) s += ", thread t" + std::to_string(*w.thread);
  if (!w.detail.empty()) s += ": " + w.detail;
  return s;
}

namespace {

std::uint64_t pow4(std::uint32_t n) { return std::uint64_t{1} << (2 * n); }

Witness slot_witness(PoolRef p, std::uint32_t level, std::uint64_t block,
                     std::string detail) {
  Witness w;
  w.pool = p;
  w.level = level;
  w.block = block;
  w.detail = std::move(detail);
  return w;
}

bool noexist_children(const MemPool& mp, std::uint32_t level, std::uint64_t first) {
  for (std::uint64_t j = 0; j < 4; ++j) {
    if (mp.levels[level].bits[first + j] != BlockState::NoExist) return false;
  }
  return true;
}

} // namespace

Verdict check_inv_bitmap(const KernelState& s) {
  for (PoolRef p = 0; p < s.pools.size(); ++p) {
    const auto& mp = s.pools[p];
    const std::uint32_t depth = static_cast<std::uint32_t>(mp.levels.size());
    for (std::uint32_t i = 0; i < depth; ++i) {
      const auto& bts = mp.levels[i].bits;
      for (std::uint64_t j = 0; j < bts.size(); ++j) {
        const BlockState b = bts[j];
        const bool has_parent = i > 0;
        const bool has_children = i + 1 < depth &&
                                  j * 4 + 3 < mp.levels[i + 1].bits.size();
        if (is_memblock(b)) {
          if (has_parent &&
              mp.levels[i - 1].bits[j / 4] != BlockState::Divided)
            return Verdict::fail(slot_witness(
                p, i, j, "physical block whose parent is not DIVIDED"));
          if (has_children && !noexist_children(mp, i + 1, j * 4))
            return Verdict::fail(slot_witness(
                p, i, j, "physical block with existing children"));
        }
        if (b == BlockState::Divided && has_parent &&
            mp.levels[i - 1].bits[j / 4] != BlockState::Divided)
          return Verdict::fail(
              slot_witness(p, i, j, "DIVIDED block whose parent is not DIVIDED"));
        if (b == BlockState::NoExist) {
          if (has_children && !noexist_children(mp, i + 1, j * 4))
            return Verdict::fail(
                slot_witness(p, i, j, "NOEXIST slot with existing children"));
          if (has_parent && mp.levels[i - 1].bits[j / 4] == BlockState::Divided)
            return Verdict::fail(
                slot_witness(p, i, j, "NOEXIST slot under a DIVIDED parent"));
        }
      }
    }
  }
  return Verdict::ok();
}

Verdict check_inv_bitmap0(const KernelState& s) {
  for (PoolRef p = 0; p < s.pools.size(); ++p) {
    const auto& bits0 = s.pools[p].levels.front().bits;
    for (std::uint64_t j = 0; j < bits0.size(); ++j) {
      if (bits0[j] == BlockState::NoExist)
        return Verdict::fail(slot_witness(p, 0, j, "NOEXIST at level 0"));
    }
  }
  return Verdict::ok();
}

Verdict check_inv_bitmapn(const KernelState& s) {
  for (PoolRef p = 0; p < s.pools.size(); ++p) {
    const auto& mp = s.pools[p];
    const auto last = static_cast<std::uint32_t>(mp.levels.size() - 1);
    const auto& bits = mp.levels[last].bits;
    for (std::uint64_t j = 0; j < bits.size(); ++j) {
      if (bits[j] == BlockState::Divided)
        return Verdict::fail(slot_witness(p, last, j, "DIVIDED at deepest level"));
    }
  }
  return Verdict::ok();
}

Verdict check_inv_mempool_info(const KernelState& s) {
  for (PoolRef p = 0; p < s.pools.size(); ++p) {
    const auto& mp = s.pools[p];
    const auto& cfg = mp.config;
    Witness w;
    w.pool = p;
    if (cfg.n_max == 0 || cfg.n_levels == 0) {
      w.detail = "n_max and n_levels must be positive";
      return Verdict::fail(w);
    }
    const std::uint64_t unit = 4 * pow4(cfg.n_levels);
    if (cfg.max_sz == 0 || cfg.max_sz % unit != 0) {
      w.detail = "no n > 0 with max_sz = 4n*4^n_levels";
      return Verdict::fail(w);
    }
    if (mp.levels.size() != cfg.n_levels) {
      w.detail = "level list length differs from n_levels";
      return Verdict::fail(w);
    }
    for (std::uint32_t i = 0; i < cfg.n_levels; ++i) {
      if (mp.levels[i].bits.size() != cfg.n_max * pow4(i)) {
        w.level = i;
        w.detail = "bitmap length differs from n_max*4^level";
        return Verdict::fail(w);
      }
    }
  }
  return Verdict::ok();
}

Verdict check_inv_not4free(const KernelState& s) {
  for (PoolRef p = 0; p < s.pools.size(); ++p) {
    const auto& mp = s.pools[p];
    for (std::uint32_t i = 1; i < mp.levels.size(); ++i) {
      const auto& bts = mp.levels[i].bits;
      for (std::uint64_t q = 0; q + 3 < bts.size(); q += 4) {
        if (bts[q] == BlockState::Free && bts[q + 1] == BlockState::Free &&
            bts[q + 2] == BlockState::Free && bts[q + 3] == BlockState::Free)
          return Verdict::fail(
              slot_witness(p, i, q, "four FREE partner blocks left uncoalesced"));
      }
    }
  }
  return Verdict::ok();
}

Verdict check_inv_freelist(const KernelState& s) {
  for (PoolRef p = 0; p < s.pools.size(); ++p) {
    const auto& mp = s.pools[p];
    for (std::uint32_t i = 0; i < mp.levels.size(); ++i) {
      const auto& bts = mp.levels[i].bits;
      const auto& fl = mp.levels[i].free_list;
      const std::uint64_t bs = mp.config.max_sz / pow4(i);
      for (std::uint64_t j = 0; j < bts.size(); ++j) {
        const std::uint64_t addr = mp.config.buf + j * bs;
        const bool listed = std::find(fl.begin(), fl.end(), addr) != fl.end();
        if ((bts[j] == BlockState::Free) != listed)
          return Verdict::fail(slot_witness(
              p, i, j,
              listed ? "free list holds a block whose bit is not FREE"
                     : "FREE bit missing from the free list"));
      }
      for (std::uint64_t k = 0; k < fl.size(); ++k) {
        const std::uint64_t entry = fl[k];
        Witness w;
        w.pool = p;
        w.level = i;
        w.addr = entry;
        if (entry < mp.config.buf || (entry - mp.config.buf) % bs != 0) {
          w.detail = "free list entry not aligned to the level block size";
          return Verdict::fail(w);
        }
        if ((entry - mp.config.buf) / bs >= bts.size()) {
          w.detail = "free list entry out of range";
          return Verdict::fail(w);
        }
        if (std::count(fl.begin(), fl.end(), entry) != 1) {
          w.detail = "duplicate free list entry";
          return Verdict::fail(w);
        }
      }
    }
  }
  return Verdict::ok();
}

Verdict check_inv_pools_notoverlap(const KernelState& s) {
  for (PoolRef a = 0; a < s.pools.size(); ++a) {
    for (PoolRef b = a + 1; b < s.pools.size(); ++b) {
      const auto& ca = s.pools[a].config;
      const auto& cb = s.pools[b].config;
      const bool disjoint =
          ca.buf + ca.span() <= cb.buf || cb.buf + cb.span() <= ca.buf;
      if (!disjoint) {
        Witness w;
        w.pool = a;
        w.detail = "window overlaps pool " + std::to_string(b);
        return Verdict::fail(w);
      }
    }
  }
  return Verdict::ok();
}

Verdict check_inv_thd_waitq(const KernelState& s) {
  std::vector<int> queued(s.thread_count(), 0);
  for (PoolRef p = 0; p < s.pools.size(); ++p) {
    const auto& q = s.pools[p].wait_q;
    for (ThreadId t : q) {
      Witness w;
      w.pool = p;
      w.thread = t;
      if (t >= s.thread_count()) {
        w.detail = "wait queue names an unknown thread";
        return Verdict::fail(w);
      }
      if (s.thd_state[t] != ThreadState::Blocked) {
        w.detail = "waiting thread is not BLOCKED";
        return Verdict::fail(w);
      }
      if (std::count(q.begin(), q.end(), t) != 1) {
        w.detail = "thread queued twice in one wait queue";
        return Verdict::fail(w);
      }
      if (++queued[t] > 1) {
        w.detail = "thread present in two wait queues";
        return Verdict::fail(w);
      }
    }
  }
  for (ThreadId t = 0; t < s.thread_count(); ++t) {
    if (s.thd_state[t] == ThreadState::Blocked && queued[t] == 0) {
      Witness w;
      w.thread = t;
      w.detail = "BLOCKED thread queued in no pool";
      return Verdict::fail(w);
    }
  }
  return Verdict::ok();
}

namespace {

bool slot_in_range(const KernelState& s, const BlockId& n) {
  return n.pool < s.pools.size() && n.level < s.pools[n.pool].levels.size() &&
         n.block < s.pools[n.pool].levels[n.level].bits.size();
}

bool same_slot(const BlockId& a, const BlockId& b) {
  return a.pool == b.pool && a.level == b.level && a.block == b.block;
}

} // namespace

Verdict check_inv_aux_vars(const KernelState& s) {
  const auto threads = s.thread_count();
  for (ThreadId t = 0; t < threads; ++t) {
    const auto& l = s.locals[t];
    if (l.freeing_node) {
      const auto& n = *l.freeing_node;
      if (!slot_in_range(s, n)) {
        Witness w;
        w.pool = n.pool;
        w.thread = t;
        w.detail = "freeing_node out of range";
        return Verdict::fail(w);
      }
      if (get_bit(s.pools[n.pool], n.level, n.block) != BlockState::Freeing) {
        Witness w = slot_witness(n.pool, n.level, n.block,
                                 "freeing_node names a block not FREEING");
        w.thread = t;
        return Verdict::fail(w);
      }
    }
    if (l.allocating_node) {
      const auto& n = *l.allocating_node;
      if (!slot_in_range(s, n)) {
        Witness w;
        w.pool = n.pool;
        w.thread = t;
        w.detail = "allocating_node out of range";
        return Verdict::fail(w);
      }
      if (get_bit(s.pools[n.pool], n.level, n.block) != BlockState::Allocating) {
        Witness w = slot_witness(n.pool, n.level, n.block,
                                 "allocating_node names a block not ALLOCATING");
        w.thread = t;
        return Verdict::fail(w);
      }
    }
  }
  // Every transient bit has an owner.
  for (PoolRef p = 0; p < s.pools.size(); ++p) {
    const auto& mp = s.pools[p];
    for (std::uint32_t i = 0; i < mp.levels.size(); ++i) {
      const auto& bts = mp.levels[i].bits;
      const std::uint64_t lsz = align4(mp.config.max_sz) / pow4(i);
      for (std::uint64_t j = 0; j < bts.size(); ++j) {
        if (bts[j] != BlockState::Freeing && bts[j] != BlockState::Allocating)
          continue;
        const BlockId n{p, i, j, block_ptr(mp, lsz, j)};
        bool owned = false;
        for (ThreadId t = 0; t < threads && !owned; ++t) {
          const auto& node = bts[j] == BlockState::Freeing
                                 ? s.locals[t].freeing_node
                                 : s.locals[t].allocating_node;
          owned = node && same_slot(*node, n);
        }
        if (!owned)
          return Verdict::fail(slot_witness(
              p, i, j,
              bts[j] == BlockState::Freeing ? "FREEING block with no owner"
                                            : "ALLOCATING block with no owner"));
      }
    }
  }
  // No aliasing between transient nodes, in any combination.
  for (ThreadId t1 = 0; t1 < threads; ++t1) {
    for (ThreadId t2 = 0; t2 < threads; ++t2) {
      const auto& f1 = s.locals[t1].freeing_node;
      const auto& f2 = s.locals[t2].freeing_node;
      const auto& a1 = s.locals[t1].allocating_node;
      const auto& a2 = s.locals[t2].allocating_node;
      if (t1 != t2 && f1 && f2 && same_slot(*f1, *f2)) {
        Witness w = slot_witness(f1->pool, f1->level, f1->block,
                                 "two threads freeing the same block");
        w.thread = t1;
        return Verdict::fail(w);
      }
      if (t1 != t2 && a1 && a2 && same_slot(*a1, *a2)) {
        Witness w = slot_witness(a1->pool, a1->level, a1->block,
                                 "two threads allocating the same block");
        w.thread = t1;
        return Verdict::fail(w);
      }
      if (a1 && f2 && same_slot(*a1, *f2)) {
        Witness w = slot_witness(a1->pool, a1->level, a1->block,
                                 "block simultaneously allocating and freeing");
        w.thread = t1;
        return Verdict::fail(w);
      }
    }
  }
  return Verdict::ok();
}

namespace {

bool addr_in_block(const MemPool& mp, std::uint64_t addr, std::uint32_t i,
                   std::uint64_t j) {
  if (i >= mp.levels.size()) return false;
  if (j >= mp.levels[i].bits.size()) return false;
  const BlockState b = mp.levels[i].bits[j];
  if (!is_memblock(b)) return false;
  const std::uint64_t bs = mp.config.max_sz / pow4(i);
  return addr >= j * bs && addr < (j + 1) * bs;
}

} // namespace

Verdict check_mem_part(const KernelState& s) {
  for (PoolRef p = 0; p < s.pools.size(); ++p) {
    const auto& mp = s.pools[p];
    const std::uint64_t span = mp.config.span();
    for (std::uint64_t addr = 0; addr < span; ++addr) {
      std::uint64_t covers = 0;
      for (std::uint32_t i = 0; i < mp.levels.size(); ++i) {
        for (std::uint64_t j = 0; j < mp.levels[i].bits.size(); ++j) {
          if (addr_in_block(mp, addr, i, j)) ++covers;
        }
      }
      if (covers != 1) {
        Witness w;
        w.pool = p;
        w.addr = addr;
        w.detail = covers == 0 ? "address covered by no live block"
                               : "address covered by " + std::to_string(covers) +
                                     " live blocks";
        return Verdict::fail(w);
      }
    }
  }
  return Verdict::ok();
}

Verdict check_mem_part_intervals(const KernelState& s) {
  for (PoolRef p = 0; p < s.pools.size(); ++p) {
    const auto& mp = s.pools[p];
    std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
    for (std::uint32_t i = 0; i < mp.levels.size(); ++i) {
      const std::uint64_t bs = mp.config.max_sz / pow4(i);
      const auto& bts = mp.levels[i].bits;
      for (std::uint64_t j = 0; j < bts.size(); ++j) {
        if (is_memblock(bts[j]))
          spans.emplace_back(mp.config.buf + j * bs, mp.config.buf + (j + 1) * bs);
      }
    }
    std::sort(spans.begin(), spans.end());
    std::uint64_t cursor = mp.config.buf;
    for (const auto& [lo, hi] : spans) {
      if (lo != cursor) {
        Witness w;
        w.pool = p;
        w.addr = cursor - mp.config.buf;
        w.detail = lo > cursor ? "gap between live blocks"
                               : "overlapping live blocks";
        return Verdict::fail(w);
      }
      cursor = hi;
    }
    if (cursor != mp.config.buf + mp.config.span()) {
      Witness w;
      w.pool = p;
      w.addr = cursor - mp.config.buf;
      w.detail = "live blocks stop before the end of the buffer";
      return Verdict::fail(w);
    }
  }
  return Verdict::ok();
}

bool state_inv(const KernelState& s) {
  return check_inv_bitmap(s).pass && check_inv_bitmap0(s).pass &&
         check_inv_bitmapn(s).pass && check_inv_mempool_info(s).pass &&
         check_inv_not4free(s).pass && check_inv_freelist(s).pass &&
         check_inv_pools_notoverlap(s).pass && check_inv_thd_waitq(s).pass &&
         check_inv_aux_vars(s).pass;
}

std::map<std::string, Verdict> check_all_invariants(const KernelState& s) {
  return {
      {"inv_bitmap", check_inv_bitmap(s)},
      {"inv_bitmap0", check_inv_bitmap0(s)},
      {"inv_bitmapn", check_inv_bitmapn(s)},
      {"inv_mempool_info", check_inv_mempool_info(s)},
      {"inv_bitmap_not4free", check_inv_not4free(s)},
      {"inv_bitmap_freelist", check_inv_freelist(s)},
      {"inv_pools_notoverlap", check_inv_pools_notoverlap(s)},
      {"inv_thd_waitq", check_inv_thd_waitq(s)},
      {"inv_aux_vars", check_inv_aux_vars(s)},
      {"mem_part", check_mem_part(s)},
  };
}

Verdict check_partition_theorem(const KernelState& s) {
  const bool antecedent = check_inv_mempool_info(s).pass &&
                          check_inv_bitmap(s).pass && check_inv_bitmap0(s).pass &&
                          check_inv_bitmapn(s).pass;
  if (!antecedent) return Verdict::ok();
  auto part = check_mem_part(s);
  if (part.pass) return Verdict::ok();
  Witness w = part.witness.value_or(Witness{});
  w.detail = "partition theorem refuted: well-shaped bitmaps but " +
             (part.witness ? part.witness->detail : std::string("mem_part fails"));
  return Verdict::fail(w);
}

} // namespace buddysim
