#include "buddysim/pool.hpp"

#include <algorithm>

namespace buddysim {

const char* to_string(BlockState s) {
  switch (s) {
    case BlockState::Allocated: return "ALLOCATED";
    case BlockState::Free: return "FREE";
    case BlockState::Divided: return "DIVIDED";
    case BlockState::NoExist: return "NOEXIST";
    case BlockState::Freeing: return "FREEING";
    case BlockState::Allocating: return "ALLOCATING";
  }
  return "?";
}

std::string to_string(const BlockId& b) {
  return "(p" + std::to_string(b.pool) + "," + std::to_string(b.level) + "," +
         std::to_string(b.block) + "@" + std::to_string(b.data) + ")";
}

namespace {

std::uint64_t pow4(std::uint32_t n) {
  return std::uint64_t{1} << (2 * n);
}

} // namespace

bool PoolConfig::valid(std::string* why) const {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (n_max == 0) return fail("n_max must be positive");
  if (n_levels == 0) return fail("n_levels must be positive");
  if (n_levels > 10) return fail("n_levels too large for simulation");
  if (n_max > (1u << 16)) return fail("n_max too large for simulation");
  // There must be an n > 0 with max_sz = (4*n) * 4^n_levels.
  const std::uint64_t unit = 4 * pow4(n_levels);
  if (max_sz == 0 || max_sz % unit != 0)
    return fail("max_sz must be a positive multiple of 4*4^n_levels");
  return true;
}

std::uint64_t align4(std::uint64_t x) {
  return (x + 3) & ~std::uint64_t{3};
}

std::uint64_t block_size(const PoolConfig& cfg, std::uint32_t level) {
  if (level >= cfg.n_levels)
    throw std::out_of_range("block_size: level " + std::to_string(level) +
                            " out of range for pool " + cfg.id);
  return cfg.max_sz / pow4(level);
}

std::uint64_t block_ptr(const MemPool& pool, std::uint64_t lsz, std::uint64_t block) {
  return pool.config.buf + lsz * block;
}

std::uint64_t block_num(const MemPool& pool, std::uint64_t data, std::uint64_t lsz) {
  const std::uint64_t off = data - pool.config.buf;
  if (lsz == 0 || off % lsz != 0)
    throw std::invalid_argument("block_num: address " + std::to_string(data) +
                                " not aligned to block size " + std::to_string(lsz));
  return off / lsz;
}

std::uint64_t slots_at_level(const PoolConfig& cfg, std::uint32_t level) {
  return cfg.n_max * pow4(level);
}

namespace {

void check_slot(const MemPool& pool, std::uint32_t level, std::uint64_t block,
                const char* who) {
  if (level >= pool.levels.size())
    throw std::out_of_range(std::string(who) + ": level out of range");
  if (block >= pool.levels[level].bits.size())
    throw std::out_of_range(std::string(who) + ": block out of range");
}

} // namespace

BlockState get_bit(const MemPool& pool, std::uint32_t level, std::uint64_t block) {
  check_slot(pool, level, block, "get_bit");
  return pool.levels[level].bits[block];
}

void set_bit(MemPool& pool, std::uint32_t level, std::uint64_t block, BlockState st) {
  check_slot(pool, level, block, "set_bit");
  pool.levels[level].bits[block] = st;
}

bool level_empty(const MemPool& pool, std::uint32_t level) {
  if (level >= pool.levels.size())
    throw std::out_of_range("level_empty: level out of range");
  return pool.levels[level].free_list.empty();
}

bool block_fits(const MemPool& pool, std::uint64_t ptr, std::uint64_t sz) {
  return (ptr - pool.config.buf) + sz <= pool.config.span();
}

bool partner_bits_free(const MemPool& pool, std::uint32_t level, std::uint64_t block) {
  check_slot(pool, level, block, "partner_bits_free");
  const std::uint64_t base = (block / 4) * 4;
  for (std::uint64_t j = 0; j < 4; ++j) {
    if (pool.levels[level].bits[base + j] != BlockState::Free) return false;
  }
  return true;
}

void free_list_append(MemPool& pool, std::uint32_t level, std::uint64_t addr) {
  if (level >= pool.levels.size())
    throw std::out_of_range("free_list_append: level out of range");
  auto& fl = pool.levels[level].free_list;
  if (std::find(fl.begin(), fl.end(), addr) != fl.end())
    throw std::invalid_argument("free_list_append: address " + std::to_string(addr) +
                                " already present at level " + std::to_string(level));
  fl.push_back(addr);
}

void free_list_remove(MemPool& pool, std::uint32_t level, std::uint64_t addr) {
  if (level >= pool.levels.size())
    throw std::out_of_range("free_list_remove: level out of range");
  auto& fl = pool.levels[level].free_list;
  auto it = std::find(fl.begin(), fl.end(), addr);
  if (it == fl.end())
    throw std::logic_error("free_list_remove: address " + std::to_string(addr) +
                           " absent at level " + std::to_string(level));
  fl.erase(it);
}

MemPool init_pool(const PoolConfig& cfg) {
  std::string why;
  if (!cfg.valid(&why)) throw std::invalid_argument("init_pool(" + cfg.id + "): " + why);

  MemPool pool;
  pool.config = cfg;
  pool.levels.resize(cfg.n_levels);
  for (std::uint32_t i = 0; i < cfg.n_levels; ++i) {
    pool.levels[i].bits.assign(slots_at_level(cfg, i),
                               i == 0 ? BlockState::Free : BlockState::NoExist);
  }
  for (std::uint64_t b = 0; b < cfg.n_max; ++b) {
    pool.levels[0].free_list.push_back(block_ptr(pool, cfg.max_sz, b));
  }
  return pool;
}

} // namespace buddysim
