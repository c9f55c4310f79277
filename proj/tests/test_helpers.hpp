// Shared fixtures: the two canonical pools used throughout the tests.
#pragma once

#include "buddysim/kernel_state.hpp"
#include "buddysim/pool.hpp"

namespace buddysim::testing {

// One 256-byte level-0 block, two levels (level-1 blocks of 64).
inline PoolConfig pool_a_config() {
  PoolConfig cfg;
  cfg.id = "POOL_A";
  cfg.buf = 0;
  cfg.max_sz = 256;
  cfg.n_max = 1;
  cfg.n_levels = 2;
  return cfg;
}

// Two 64-byte level-0 blocks, two levels (level-1 blocks of 16).
inline PoolConfig pool_b_config() {
  PoolConfig cfg;
  cfg.id = "POOL_B";
  cfg.buf = 0;
  cfg.max_sz = 64;
  cfg.n_max = 2;
  cfg.n_levels = 2;
  return cfg;
}

// Kernel state holding the given pools and `threads` idle READY threads.
inline KernelState make_state(std::vector<MemPool> pools, std::size_t threads) {
  KernelState s;
  s.pools = std::move(pools);
  s.thd_state.assign(threads, ThreadState::Ready);
  s.locals.assign(threads, ThreadLocals{});
  s.mblocks.assign(threads, {});
  return s;
}

} // namespace buddysim::testing
