// Security layer: interference policy between domains, per-domain state
// equivalence, per-step and per-event integrity, and the guarantee/rely
// monitors for the memory services.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "buddysim/kernel_state.hpp"
#include "buddysim/program.hpp"
#include "buddysim/safety.hpp"

namespace buddysim {

// What one transition looked like, as seen by the checkers.
struct TransitionLabel {
  Domain domain;
  std::string event_name;
  StepKind kind = StepKind::ProgramStep;
  std::string step_label;
  // Filled on the transition that completes a thread event.
  struct Completion {
    bool is_alloc = false;
    PoolRef pool = 0;
    std::uint64_t size = 0;
    TimeoutMode mode;
    std::optional<BlockId> free_arg;
  };
  std::optional<Completion> completed;
  // Set on free_block loop iterations, for the loop-variant check.
  bool free_block_iteration = false;
  std::optional<BlockId> variant_block;
};

// Security configuration: interference relation, per-domain state
// equivalence, and the event-to-domain labeling. The defaults implement the
// policy for this kernel model; tests may substitute their own relations.
struct SecurityConfig {
  std::function<bool(const Domain&, const Domain&)> interferes;
  std::function<bool(const Domain&, const KernelState&, const KernelState&)> equiv;

  static SecurityConfig standard();
};

// Timer interferes only with itself and nothing else interferes with it;
// distinct threads never interfere; every remaining pair does.
bool interferes(const Domain& d1, const Domain& d2);

// Scheduler sees cur, thread t sees mblocks(t), timer sees tick.
bool state_equiv(const Domain& d, const KernelState& s, const KernelState& r);

// Domain that performed a transition.
Domain dom_of_step(const TransitionLabel& label);

struct CheckResult {
  bool pass = true;
  std::string detail;

  static CheckResult ok() { return {}; }
  static CheckResult fail(std::string d) { return {false, std::move(d)}; }
  explicit operator bool() const { return pass; }
};

// The rely-guarantee quadruple of one memory service, as executable
// predicates over states and state pairs.
struct ServiceContract {
  std::function<bool(const KernelState&)> pre;
  std::function<bool(const KernelState&, const KernelState&)> rely;
  std::function<bool(const KernelState&, const KernelState&)> guarantee;
  std::function<bool(const KernelState&, const TransitionLabel&)> post;
};

// The contract shared by the alloc and free services of thread t: the
// invariant plus cleared transient nodes before and after, the service
// rely/guarantee relations in between.
ServiceContract memory_service_contract(ThreadId t);

// Precondition of both services: invariant holds and the thread carries no
// transient allocating/freeing node.
bool mem_pool_service_precondition(const KernelState& s, ThreadId t);

// Per-step integrity: a transition by domain d_a leaves every domain it may
// not interfere with equivalent across the step.
CheckResult check_integrity_step(const KernelState& pre, const KernelState& post,
                                 const TransitionLabel& label,
                                 const SecurityConfig& cfg);

// Event-granularity integrity: the same view condition applied to each
// transition of the event, attributed to the event's domain.
CheckResult check_event_integrity_step(const KernelState& pre,
                                       const KernelState& post,
                                       const TransitionLabel& label,
                                       const SecurityConfig& cfg);

// Guarantee of the acting domain. Thread steps are held to the memory-service
// guarantee; scheduler and timer steps to their declared footprints.
CheckResult check_guarantee_step(const KernelState& pre, const KernelState& post,
                                 const TransitionLabel& label);

// Rely of an observer thread over a step it did not perform.
CheckResult check_rely_step(const KernelState& pre, const KernelState& post,
                            const TransitionLabel& label, ThreadId observer);

// Post-state obligations of a completed alloc/free event.
CheckResult check_event_postcondition(const KernelState& final_state,
                                      const TransitionLabel& label);

// Returned block is valid for (pool, size): coordinates and data consistent,
// bit ALLOCATED, and the level block size covers the request.
bool mblk_valid(const KernelState& s, PoolRef pool, std::uint64_t size,
                const BlockId& b);

// Building blocks of the guarantee/rely relations, exposed for tests.
bool gvars_conf_stable(const KernelState& s, const KernelState& r);
bool gvars_nochange(const KernelState& s, const KernelState& r);
bool lvars_nochange(ThreadId t, const KernelState& s, const KernelState& r);

} // namespace buddysim
