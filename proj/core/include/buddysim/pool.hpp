// Quad-buddy memory pool model: configuration, per-level bitmaps and free
// lists, and the address arithmetic shared by the services and the checkers.
#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace buddysim {

// Index of a pool within the kernel state's pool table.
using PoolRef = std::uint32_t;
// Index of a thread within the scenario's thread table.
using ThreadId = std::uint32_t;

// State of one bitmap slot. DIVIDED marks a purely logical block whose four
// children exist; NOEXIST marks a slot below an undivided block. ALLOCATING
// and FREEING are the transient states owned by exactly one thread.
enum class BlockState : std::uint8_t {
  Allocated,
  Free,
  Divided,
  NoExist,
  Freeing,
  Allocating,
};

const char* to_string(BlockState s);

// A slot is a physical block when a real memory region corresponds to it.
inline bool is_memblock(BlockState s) {
  return s == BlockState::Allocated || s == BlockState::Free ||
         s == BlockState::Allocating || s == BlockState::Freeing;
}

struct PoolConfig {
  std::string id;
  std::uint64_t buf = 0;      // base address of the pool window, bytes
  std::uint64_t max_sz = 0;   // level-0 block size, bytes
  std::uint64_t n_max = 0;    // number of level-0 blocks
  std::uint32_t n_levels = 0; // number of levels

  std::uint64_t span() const { return n_max * max_sz; }
  bool valid(std::string* why = nullptr) const;
};

struct LevelInfo {
  std::vector<BlockState> bits;
  std::vector<std::uint64_t> free_list; // block start addresses, buf-based

  bool operator==(const LevelInfo&) const = default;
};

struct MemPool {
  PoolConfig config;
  std::vector<LevelInfo> levels;
  std::vector<ThreadId> wait_q;
};

// Names one memory block: (pool, level, block index) plus its start address.
struct BlockId {
  PoolRef pool = 0;
  std::uint32_t level = 0;
  std::uint64_t block = 0;
  std::uint64_t data = 0;

  auto operator<=>(const BlockId&) const = default;
};

std::string to_string(const BlockId& b);

// Rounds x up to the next multiple of 4.
std::uint64_t align4(std::uint64_t x);

// Size of a block at `level`; throws std::out_of_range for level >= n_levels.
std::uint64_t block_size(const PoolConfig& cfg, std::uint32_t level);

// Start address of block `block` given the level block size `lsz`.
std::uint64_t block_ptr(const MemPool& pool, std::uint64_t lsz, std::uint64_t block);

// Inverse of block_ptr; throws std::invalid_argument if (data - buf) is not a
// multiple of lsz.
std::uint64_t block_num(const MemPool& pool, std::uint64_t data, std::uint64_t lsz);

// Number of bitmap slots at a level: n_max * 4^level.
std::uint64_t slots_at_level(const PoolConfig& cfg, std::uint32_t level);

BlockState get_bit(const MemPool& pool, std::uint32_t level, std::uint64_t block);
void set_bit(MemPool& pool, std::uint32_t level, std::uint64_t block, BlockState st);

bool level_empty(const MemPool& pool, std::uint32_t level);

// True iff [ptr, ptr + sz) lies inside the pool buffer window.
bool block_fits(const MemPool& pool, std::uint64_t ptr, std::uint64_t sz);

// True iff all four partners in the quad containing `block` are FREE.
// Meaningful for level > 0; level 0 blocks are never coalesced.
bool partner_bits_free(const MemPool& pool, std::uint32_t level, std::uint64_t block);

// Appends addr, keeping entries distinct; throws std::invalid_argument if the
// address is already present.
void free_list_append(MemPool& pool, std::uint32_t level, std::uint64_t addr);

// Removes exactly addr; throws std::logic_error if absent.
void free_list_remove(MemPool& pool, std::uint32_t level, std::uint64_t addr);

// Builds the initial pool: all level-0 blocks FREE and listed in index order,
// every other level NOEXIST with empty free lists, empty wait queue.
// Throws std::invalid_argument on a config violating the pool invariants.
MemPool init_pool(const PoolConfig& cfg);

} // namespace buddysim
