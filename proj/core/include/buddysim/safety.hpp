// Structural invariants of the pool forest and the block-level memory
// partition property, evaluated on kernel snapshots.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "buddysim/kernel_state.hpp"

namespace buddysim {

// Locates the first offending slot/address/thread in canonical order.
struct Witness {
  PoolRef pool = 0;
  std::optional<std::uint32_t> level;
  std::optional<std::uint64_t> block;
  std::optional<std::uint64_t> addr;
  std::optional<ThreadId> thread;
  std::string detail;
};

std::string to_string(const Witness& w);

struct Verdict {
  bool pass = true;
  std::optional<Witness> witness;

  static Verdict ok() { return {}; }
  static Verdict fail(Witness w) { return {false, std::move(w)}; }
  explicit operator bool() const { return pass; }
};

// Well-shaped quad forest: physical blocks have a DIVIDED parent and
// NOEXIST children, DIVIDED propagates upward, NOEXIST downward.
Verdict check_inv_bitmap(const KernelState& s);
// Level 0 holds no NOEXIST slot.
Verdict check_inv_bitmap0(const KernelState& s);
// The deepest level holds no DIVIDED slot.
Verdict check_inv_bitmapn(const KernelState& s);
// Pool configuration consistency: max_sz = 4n*4^n_levels for some n > 0,
// level count and bitmap lengths match.
Verdict check_inv_mempool_info(const KernelState& s);
// No aligned quadruple above level 0 is entirely FREE.
Verdict check_inv_not4free(const KernelState& s);
// Bitmap/free-list agreement: FREE iff listed; entries aligned, in range,
// distinct.
Verdict check_inv_freelist(const KernelState& s);
// Pool buffer windows are pairwise disjoint.
Verdict check_inv_pools_notoverlap(const KernelState& s);
// Wait-queue membership matches BLOCKED states; one queue per thread.
Verdict check_inv_thd_waitq(const KernelState& s);
// freeing/allocating nodes pair one-to-one with FREEING/ALLOCATING bits.
Verdict check_inv_aux_vars(const KernelState& s);
// Every relative address of every pool lies in exactly one live block.
Verdict check_mem_part(const KernelState& s);

// Independent route to the partition property: collects the live-block
// intervals and verifies they tile the buffer exactly.
Verdict check_mem_part_intervals(const KernelState& s);

// The conjunction of the seven invariant families (all checks above except
// mem_part); this is the `inv` referenced by the guarantee/rely relations.
bool state_inv(const KernelState& s);

inline const char* const kInvariantCheckNames[] = {
    "inv_bitmap",      "inv_bitmap0",       "inv_bitmapn",
    "inv_mempool_info", "inv_bitmap_not4free", "inv_bitmap_freelist",
    "inv_pools_notoverlap", "inv_thd_waitq",  "inv_aux_vars",
    "mem_part",
};

// All ten checks keyed by name.
std::map<std::string, Verdict> check_all_invariants(const KernelState& s);

// Memory-partition theorem, checked empirically: whenever inv_mempool_info,
// inv_bitmap, inv_bitmap0 and inv_bitmapn all hold, mem_part must hold.
// Fails only on a refutation (antecedent true, mem_part false).
Verdict check_partition_theorem(const KernelState& s);

} // namespace buddysim
