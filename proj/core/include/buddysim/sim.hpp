// Small-step interleaving executor over the event programs: enabled-step
// computation, random scheduling, bounded exhaustive exploration, and trace
// record/replay.
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "buddysim/program.hpp"
#include "buddysim/report.hpp"
#include "buddysim/scenario.hpp"
#include "buddysim/security.hpp"

namespace buddysim {

struct TraceEntry {
  std::uint64_t index = 0;
  Domain domain;
  std::string event_name;
  StepKind step_kind = StepKind::ProgramStep;
  std::uint32_t choice = 0;
  std::uint64_t pre_digest = 0;
  std::uint64_t post_digest = 0;
};

struct Trace {
  std::uint64_t scenario_digest = 0;
  std::string code_version;
  std::uint64_t seed = 0;
  std::vector<TraceEntry> entries;

  void save(const std::string& path) const;
  static Trace load(const std::string& path);
};

// Per-thread execution context (position in the script and in the current
// event program). Part of the exploration state.
struct ThreadExec {
  std::size_t script_idx = 0;
  ProgramPtr program;       // compiled current event, null between events
  std::size_t pc = 0;
  bool event_active = false;
  std::vector<std::optional<BlockId>> alloc_results;
  std::uint32_t free_loop_iters = 0;

  bool done(std::size_t script_len) const {
    return !program && script_idx >= script_len;
  }
};

struct SimState {
  KernelState kernel;
  std::vector<ThreadExec> exec;
};

// One enabled transition.
struct Candidate {
  Domain domain;
  enum class Kind : std::uint8_t { ThreadStep, Schedule, Tick } kind =
      Kind::ThreadStep;
  ThreadId thread = 0; // acting or scheduled thread
};

// Deliberate state corruption applied after a chosen transition; exists so
// the checkers can be shown to fail.
using FaultInjector =
    std::function<void(KernelState&, const TransitionLabel&, std::uint64_t step)>;

struct RunOptions {
  bool fail_fast = false;
  FaultInjector injector;
  // Called as each violation is recorded (streaming reports).
  std::function<void(const Violation&)> on_violation;
  // Random mode only: run the per-state check families every N-th step.
  // Event contracts (postconditions, termination) always run; exhaustive
  // exploration always checks every state.
  std::uint64_t check_stride = 1;
};

class Simulator {
 public:
  explicit Simulator(const Scenario& scenario);

  const Scenario& scenario() const { return scenario_; }
  const SimState& state() const { return state_; }
  SimState& mutable_state() { return state_; }

  // All transitions runnable from `s`, in canonical order (thread steps by
  // thread index, then schedules by thread index, then tick). In exploration
  // mode the tick is capped by the scenario tick limit unless an armed
  // deadline still needs it.
  std::vector<Candidate> enabled(const SimState& s, bool exploring) const;

  // Executes one candidate in place and describes the transition.
  TransitionLabel apply(SimState& s, const Candidate& cand) const;

  // Compiles pending events and skips frees whose alloc never succeeded.
  void normalize(SimState& s) const;

  bool quiescent(const SimState& s) const;

  // Digest used by visited-state pruning: kernel state plus every execution
  // context (program counters and recorded results).
  std::uint64_t exploration_digest(const SimState& s) const;

  void set_fault_injector(FaultInjector f) { injector_ = std::move(f); }

  const std::string& thread_name(ThreadId t) const {
    return scenario_.threads[t].id;
  }

 private:
  Scenario scenario_;
  SimState state_;
  FaultInjector injector_;

  friend struct RunContext;
};

struct RunResult {
  Trace trace;
  RunReport report;
};

// Seeded uniform choice among enabled transitions; checkers run after every
// step (or every check_stride-th for the state families). Identical seed and
// scenario give a bit-identical trace.
RunResult run_random(const Scenario& scenario, std::uint64_t seed,
                     std::uint64_t max_steps, const RunOptions& opts = {});

// Re-executes a recorded choice sequence, verifying digests entry by entry.
// Throws ScenarioError on scenario mismatch or digest divergence.
RunResult replay(const Scenario& scenario, const Trace& recorded);

struct ExplorationReport {
  RunReport report;
  // Shortest choice sequences reaching each distinct violation.
  bool complete = false; // every path ended script-complete within bounds
};

// Breadth-first enumeration of all schedules up to depth_bound with
// visited-state pruning; checkers run on every distinct transition. The
// reported schedules are minimal because discovery order is breadth-first.
ExplorationReport explore(const Scenario& scenario, std::uint64_t depth_bound,
                          const RunOptions& opts = {});

// Re-executes a choice sequence produced by explore() and returns its trace.
RunResult run_schedule(const Scenario& scenario,
                       const std::vector<std::uint32_t>& choices);

} // namespace buddysim
