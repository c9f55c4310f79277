// Scenario files: pools, per-thread scripts, bug toggles, check selection and
// run parameters.
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "buddysim/kernel_state.hpp"

namespace buddysim {

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Op {
  enum class Kind : std::uint8_t { Alloc, Free } kind = Kind::Alloc;
  // Alloc
  PoolRef pool = 0;
  std::uint64_t size = 0;
  TimeoutMode timeout;
  // Free: references the k-th alloc of the same script
  std::size_t alloc_index = 0;
};

struct ThreadSpec {
  std::string id;
  std::vector<Op> script;
};

enum class RunMode : std::uint8_t { Random, Exhaustive, Replay };

const char* to_string(RunMode m);

// Named check families that can be toggled per run.
inline const char* const kCheckNames[] = {
    "invariants", "mem_part", "integrity", "guarantee",
    "rely",       "postconditions", "termination",
};

struct Scenario {
  std::vector<PoolConfig> pools;
  std::vector<ThreadSpec> threads;
  BugConfig bugs;
  std::set<std::string> checks; // empty never happens: defaults to all
  RunMode mode = RunMode::Random;
  std::uint64_t seed = 0;
  std::uint64_t max_steps = 10000;
  std::uint64_t depth_bound = 500;
  // Exploration only: ticks are explored while tick < tick_limit, plus as
  // many more as needed to expire an armed deadline.
  std::uint64_t tick_limit = 3;

  std::uint64_t digest() const;
  ThreadId thread_index(const std::string& id) const;
};

// Parses and validates a scenario file (JSON). Pools without an explicit
// `buf` get consecutive disjoint windows. Throws ScenarioError with the
// offending field path on any problem.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& text, const std::string& origin);

// Initial kernel state for a scenario: initialized pools, no current thread,
// all threads READY.
KernelState initial_state(const Scenario& sc);

std::optional<BugConfig> parse_bug_list(const std::string& list, std::string* err);
std::optional<std::set<std::string>> parse_check_list(const std::string& list,
                                                      std::string* err);

} // namespace buddysim
