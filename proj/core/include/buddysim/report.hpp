// Run reports: violations, termination verdicts, exploration statistics and
// exit-status mapping.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace buddysim {

struct Violation {
  std::uint64_t step = 0;       // trace index of the offending transition
  std::string check_name;       // e.g. inv_bitmap, integrity, postconditions
  std::string witness;          // human-readable locus
  std::uint64_t state_digest = 0;
  std::string domain;
  std::string event_name;
  // Exhaustive mode: choice sequence reproducing the violation from the
  // initial state (minimal by construction).
  std::vector<std::uint32_t> schedule;
  // Exhaustive mode: how many distinct transitions hit this violation.
  std::uint64_t occurrences = 1;
};

enum class TerminationVerdict : std::uint8_t {
  Completed,
  NonTermination,
  BoundExhausted,
  NotStarted,
};

const char* to_string(TerminationVerdict v);

struct EventTermination {
  std::string thread;
  std::string event_name;
  TerminationVerdict verdict = TerminationVerdict::Completed;
};

struct RunReport {
  std::uint64_t scenario_digest = 0;
  std::string mode;
  std::uint64_t seed = 0;
  std::uint64_t states = 0;      // distinct states (exploration) or steps + 1
  std::uint64_t transitions = 0; // executed transitions
  bool quiescent = false;        // every script ran to completion
  // Exploration terminal statistics.
  std::uint64_t terminal_complete = 0;
  std::uint64_t terminal_stuck = 0;
  std::uint64_t bound_cut = 0;
  std::vector<Violation> violations;
  std::vector<EventTermination> termination;

  // True when results were truncated: a linear run that never went
  // quiescent, or exploration paths cut at the depth bound. Stuck terminal
  // states are fully explored deadlock outcomes, not truncation.
  bool bound_exhausted() const {
    return ((mode == "random" || mode == "replay") && !quiescent) ||
           bound_cut > 0;
  }
  // 0 clean, 1 violations, 2 bound exhausted without violation.
  int exit_status() const {
    if (!violations.empty()) return 1;
    return bound_exhausted() ? 2 : 0;
  }
  std::string to_json() const;
  std::string to_text() const;
};

inline constexpr const char* kCodeVersion = "buddysim-0.1.0";

} // namespace buddysim
