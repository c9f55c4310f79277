#include <algorithm>
#include <deque>
#include <map>
#include <unordered_set>

#include "run_context.hpp"

namespace buddysim {

// Bounded exhaustive exploration. Breadth-first order with visited-state
// pruning: every distinct reachable transition within the depth bound is
// executed and checked exactly once, and the schedule attached to a violation
// is a shortest one reaching it.
ExplorationReport explore(const Scenario& scenario, std::uint64_t depth_bound,
                          const RunOptions& opts) {
  Simulator sim(scenario);
  const bool fail_fast = opts.fail_fast;
  const FaultInjector& injector = opts.injector;
  if (injector) sim.set_fault_injector(injector);

  struct NodeMeta {
    std::int64_t parent = -1;
    std::uint32_t choice = 0;
    std::uint64_t depth = 0;
  };
  std::vector<NodeMeta> meta;
  std::deque<std::pair<std::size_t, SimState>> frontier;
  std::unordered_set<std::uint64_t> visited;

  ExplorationReport out;
  detail::RunContext ctx(scenario);
  RunReport& rep = ctx.report;
  rep.scenario_digest = scenario.digest();
  rep.mode = "exhaustive";

  // Violations repeat across interleavings; keep the first (shortest)
  // schedule per distinct finding and count the rest.
  std::map<std::string, std::size_t> seen;

  auto schedule_of = [&](std::size_t node, std::uint32_t choice) {
    std::vector<std::uint32_t> choices{choice};
    std::int64_t cur = static_cast<std::int64_t>(node);
    while (cur >= 0 && meta[cur].parent >= 0) {
      choices.push_back(meta[cur].choice);
      cur = meta[cur].parent;
    }
    std::reverse(choices.begin(), choices.end());
    return choices;
  };

  {
    const auto& st = sim.state();
    ctx.check_initial(st.kernel);
    visited.insert(sim.exploration_digest(st));
    meta.push_back({-1, 0, 0});
    frontier.emplace_back(0, st);
    rep.states = 1;
  }

  bool stop = false;
  while (!frontier.empty() && !stop) {
    auto [node, st] = std::move(frontier.front());
    frontier.pop_front();
    const std::uint64_t depth = meta[node].depth;

    if (sim.quiescent(st)) {
      rep.terminal_complete += 1;
      continue;
    }
    auto cands = sim.enabled(st, true);
    if (cands.empty()) {
      rep.terminal_stuck += 1;
      continue;
    }
    if (depth >= depth_bound) {
      rep.bound_cut += 1;
      continue;
    }

    for (std::uint32_t c = 0; c < cands.size() && !stop; ++c) {
      SimState next = st;
      const KernelState pre = next.kernel;
      TransitionLabel label = sim.apply(next, cands[c]);
      if (injector) injector(next.kernel, label, rep.transitions);
      sim.normalize(next);
      rep.transitions += 1;

      const std::size_t before = rep.violations.size();
      ctx.check_transition(pre, next.kernel, label, depth, nullptr);
      // Deduplicate whatever this transition just added.
      std::size_t write = before;
      for (std::size_t v = before; v < rep.violations.size(); ++v) {
        auto& viol = rep.violations[v];
        const std::string key =
            viol.check_name + "|" + viol.witness + "|" + viol.event_name;
        auto it = seen.find(key);
        if (it != seen.end()) {
          rep.violations[it->second].occurrences += 1;
          continue;
        }
        viol.schedule = schedule_of(node, c);
        viol.step = depth;
        if (opts.on_violation) opts.on_violation(viol);
        seen.emplace(key, write);
        if (write != v) rep.violations[write] = std::move(viol);
        ++write;
      }
      rep.violations.resize(write);
      if (fail_fast && !rep.violations.empty()) stop = true;

      const std::uint64_t digest = sim.exploration_digest(next);
      if (visited.insert(digest).second) {
        rep.states += 1;
        meta.push_back({static_cast<std::int64_t>(node), c, depth + 1});
        frontier.emplace_back(meta.size() - 1, std::move(next));
      }
    }
  }

  rep.quiescent = rep.terminal_stuck == 0 && rep.bound_cut == 0 && !stop;
  out.complete = rep.quiescent;
  out.report = std::move(ctx.report);
  return out;
}

} // namespace buddysim
