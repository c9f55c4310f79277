// Internal: checker orchestration shared by the run modes.
#pragma once

#include <string>
#include <vector>

#include "buddysim/safety.hpp"
#include "buddysim/security.hpp"
#include "buddysim/sim.hpp"

namespace buddysim::detail {

struct RunContext {
  const Scenario& sc;
  SecurityConfig seccfg = SecurityConfig::standard();
  RunReport report;
  bool fail_fast = false;
  bool stop = false;
  std::function<void(const Violation&)> on_violation;

  explicit RunContext(const Scenario& scenario) : sc(scenario) {}

  bool has(const char* name) const { return sc.checks.count(name) > 0; }

  void add_violation(std::uint64_t step, std::string check, std::string witness,
                     const KernelState& post, const TransitionLabel& label,
                     const std::vector<std::uint32_t>* schedule);

  void check_initial(const KernelState& s0);

  // full = false samples out the per-state families; event contracts
  // (preconditions, postconditions, termination) always run.
  void check_transition(const KernelState& pre, const KernelState& post,
                        const TransitionLabel& label, std::uint64_t step,
                        const std::vector<std::uint32_t>* schedule,
                        bool full = true);
};

void fill_termination(const Simulator& sim, const SimState& s, RunContext& ctx,
                      bool hit_bound, std::uint64_t final_step);

} // namespace buddysim::detail
