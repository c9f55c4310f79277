#include "buddysim/sim.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "run_context.hpp"

namespace buddysim {

Simulator::Simulator(const Scenario& scenario) : scenario_(scenario) {
  state_.kernel = initial_state(scenario_);
  state_.exec.resize(scenario_.threads.size());
  normalize(state_);
}

void Simulator::normalize(SimState& s) const {
  for (ThreadId t = 0; t < scenario_.threads.size(); ++t) {
    auto& ex = s.exec[t];
    const auto& script = scenario_.threads[t].script;
    while (!ex.program && ex.script_idx < script.size()) {
      const Op& op = script[ex.script_idx];
      if (op.kind == Op::Kind::Alloc) {
        ex.program = compile_alloc_program(
            t, scenario_.threads[t].id, op.pool, scenario_.pools[op.pool].id,
            op.size, op.timeout, scenario_.bugs);
      } else {
        const auto& result = ex.alloc_results.at(op.alloc_index);
        if (!result) {
          // The referenced alloc never produced a block; nothing to free.
          ex.script_idx += 1;
          continue;
        }
        ex.program = compile_free_program(
            t, scenario_.threads[t].id, scenario_.pools[result->pool].id,
            *result);
      }
      ex.pc = 0;
      ex.event_active = false;
      ex.free_loop_iters = 0;
    }
  }
}

bool Simulator::quiescent(const SimState& s) const {
  for (ThreadId t = 0; t < scenario_.threads.size(); ++t) {
    if (!s.exec[t].done(scenario_.threads[t].script.size())) return false;
  }
  return true;
}

namespace {

// A blocked timed waiter always needs further ticks: each one brings the
// clock closer to (or past) its deadline, and expiry happens inside the tick.
bool armed_deadline_pending(const Scenario& sc, const SimState& s) {
  for (ThreadId t = 0; t < sc.threads.size(); ++t) {
    const auto& ex = s.exec[t];
    if (!ex.program || !ex.program->alloc_mode ||
        !ex.program->alloc_mode->is_ticks())
      continue;
    if (s.kernel.thd_state[t] == ThreadState::Blocked) return true;
  }
  return false;
}

} // namespace

std::vector<Candidate> Simulator::enabled(const SimState& s, bool exploring) const {
  std::vector<Candidate> out;
  // Thread program steps: only the scheduled, running thread progresses.
  for (ThreadId t = 0; t < scenario_.threads.size(); ++t) {
    const auto& ex = s.exec[t];
    if (!ex.program || ex.pc >= ex.program->steps.size()) continue;
    if (s.kernel.cur != t) continue;
    if (s.kernel.thd_state[t] != ThreadState::Running) continue;
    const auto& step = ex.program->steps[ex.pc];
    if (step.await && !step.await(s.kernel)) continue;
    out.push_back({Domain::of_thread(t), Candidate::Kind::ThreadStep, t});
  }
  // Scheduler: any READY thread may be picked.
  for (ThreadId t = 0; t < scenario_.threads.size(); ++t) {
    if (s.kernel.thd_state[t] == ThreadState::Ready)
      out.push_back({Domain::scheduler(), Candidate::Kind::Schedule, t});
  }
  // Timer: always enabled; exploration caps free-running ticks but never
  // ticks still needed to expire an armed deadline.
  if (!exploring || s.kernel.tick < scenario_.tick_limit ||
      armed_deadline_pending(scenario_, s))
    out.push_back({Domain::timer(), Candidate::Kind::Tick, 0});
  return out;
}

TransitionLabel Simulator::apply(SimState& s, const Candidate& cand) const {
  TransitionLabel label;
  label.domain = cand.domain;
  auto& k = s.kernel;

  switch (cand.kind) {
    case Candidate::Kind::Schedule: {
      const ThreadId t = cand.thread;
      label.event_name = "schedule(" + thread_name(t) + ")";
      label.kind = StepKind::AtomicBlock;
      label.step_label = "schedule";
      if (k.thd_state[t] != ThreadState::Ready)
        throw std::logic_error("schedule of a thread that is not READY");
      if (k.cur && k.thd_state[*k.cur] == ThreadState::Running)
        k.thd_state[*k.cur] = ThreadState::Ready;
      k.cur = t;
      k.thd_state[t] = ThreadState::Running;
      return label;
    }
    case Candidate::Kind::Tick: {
      label.event_name = "tick";
      label.kind = StepKind::AtomicBlock;
      label.step_label = "tick";
      k.tick += 1;
      for (auto& pool : k.pools) {
        auto& q = pool.wait_q;
        for (std::size_t i = 0; i < q.size();) {
          const ThreadId w = q[i];
          const auto& ex = s.exec[w];
          const bool timed = ex.program && ex.program->alloc_mode &&
                             ex.program->alloc_mode->is_ticks();
          if (timed && k.thd_state[w] == ThreadState::Blocked &&
              k.locals[w].endt < k.tick) {
            q.erase(q.begin() + static_cast<std::ptrdiff_t>(i));
            k.thd_state[w] = ThreadState::Ready;
          } else {
            ++i;
          }
        }
      }
      return label;
    }
    case Candidate::Kind::ThreadStep: break;
  }

  const ThreadId t = cand.thread;
  auto& ex = s.exec[t];
  const auto& prog = *ex.program;
  const auto& step = prog.steps[ex.pc];
  label.event_name = prog.event_name;
  label.kind = step.kind;
  label.step_label = step.label;
  if (step.kind == StepKind::EventOccur) ex.event_active = true;

  const StepOutcome out = step.run(k);
  if (out.free_block_iteration) {
    ex.free_loop_iters += 1;
    label.free_block_iteration = true;
    label.variant_block = prog.free_block_arg;
  }
  ex.pc = out.jump ? *out.jump : ex.pc + 1;

  if (ex.pc >= prog.steps.size()) {
    TransitionLabel::Completion done;
    done.pool = prog.pool;
    if (prog.alloc_mode) {
      done.is_alloc = true;
      done.size = prog.alloc_size;
      done.mode = *prog.alloc_mode;
      ex.alloc_results.push_back(k.locals[t].mempoolalloc_ret);
    } else {
      done.free_arg = prog.free_block_arg;
    }
    label.completed = done;
    ex.program = nullptr;
    ex.event_active = false;
    ex.script_idx += 1;
  }
  return label;
}

std::uint64_t Simulator::exploration_digest(const SimState& s) const {
  Fnv1a f;
  feed_state(f, s.kernel);
  for (const auto& ex : s.exec) {
    f.feed(ex.script_idx);
    f.feed(ex.program ? 1 : 0);
    f.feed(ex.pc);
    f.feed(ex.event_active ? 1 : 0);
    f.feed(ex.free_loop_iters);
    f.feed(ex.alloc_results.size());
    for (const auto& r : ex.alloc_results) {
      if (!r) {
        f.feed(0);
        continue;
      }
      f.feed(1);
      f.feed(r->pool);
      f.feed(r->level);
      f.feed(r->block);
      f.feed(r->data);
    }
  }
  return f.h;
}

const char* to_string(TerminationVerdict v) {
  switch (v) {
    case TerminationVerdict::Completed: return "COMPLETED";
    case TerminationVerdict::NonTermination: return "NONTERMINATION";
    case TerminationVerdict::BoundExhausted: return "BOUND_EXHAUSTED";
    case TerminationVerdict::NotStarted: return "NOT_STARTED";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Checker orchestration shared by the run modes.

namespace detail {

void RunContext::add_violation(std::uint64_t step, std::string check,
                               std::string witness, const KernelState& post,
                               const TransitionLabel& label,
                               const std::vector<std::uint32_t>* schedule) {
  Violation v;
  v.step = step;
  v.check_name = std::move(check);
  v.witness = std::move(witness);
  v.state_digest = state_digest(post);
  v.domain = to_string(label.domain);
  v.event_name = label.event_name;
  if (schedule) v.schedule = *schedule;
  if (on_violation) on_violation(v);
  report.violations.push_back(std::move(v));
  if (fail_fast) stop = true;
}

void RunContext::check_initial(const KernelState& s0) {
  TransitionLabel label;
  label.event_name = "initial";
  label.step_label = "initial";
  if (has("invariants")) {
    for (const auto& [name, verdict] : check_all_invariants(s0)) {
      if (name == "mem_part") continue;
      if (!verdict.pass)
        add_violation(0, name, to_string(*verdict.witness), s0, label, nullptr);
    }
  }
  if (has("mem_part")) {
    if (auto v = check_mem_part(s0); !v.pass)
      add_violation(0, "mem_part", to_string(*v.witness), s0, label, nullptr);
  }
}

void RunContext::check_transition(const KernelState& pre, const KernelState& post,
                                  const TransitionLabel& label,
                                  std::uint64_t step,
                                  const std::vector<std::uint32_t>* schedule,
                                  bool full) {
  if (full && has("invariants")) {
    for (const auto& [name, verdict] : check_all_invariants(post)) {
      if (name == "mem_part") continue;
      if (!verdict.pass)
        add_violation(step, name, to_string(*verdict.witness), post, label,
                      schedule);
    }
  }
  if (full && has("mem_part")) {
    if (auto v = check_mem_part(post); !v.pass)
      add_violation(step, "mem_part", to_string(*v.witness), post, label,
                    schedule);
    if (auto v = check_partition_theorem(post); !v.pass)
      add_violation(step, "partition_theorem", to_string(*v.witness), post, label,
                    schedule);
  }
  if (full && has("integrity")) {
    if (auto r = check_integrity_step(pre, post, label, seccfg); !r.pass)
      add_violation(step, "integrity", r.detail, post, label, schedule);
    if (auto r = check_event_integrity_step(pre, post, label, seccfg); !r.pass)
      add_violation(step, "event_integrity", r.detail, post, label, schedule);
  }
  CheckResult guar = CheckResult::ok();
  if (full && has("guarantee")) {
    guar = check_guarantee_step(pre, post, label);
    if (!guar.pass)
      add_violation(step, "guarantee", guar.detail, post, label, schedule);
  }
  if (full && has("rely")) {
    bool any_rely_failed = false;
    for (ThreadId obs = 0; obs < pre.thread_count(); ++obs) {
      if (label.domain.is_thread() && label.domain.thread == obs) continue;
      if (auto r = check_rely_step(pre, post, label, obs); !r.pass) {
        any_rely_failed = true;
        add_violation(step, "rely", r.detail, post, label, schedule);
      }
    }
    // A step inside the acting thread's guarantee must sit inside every other
    // thread's rely.
    if (full && has("guarantee") && label.domain.is_thread() && guar.pass &&
        any_rely_failed)
      add_violation(
          step, "guarantee_rely_duality",
          "step passes the acting thread's guarantee but breaks an observer rely",
          post, label, schedule);
  }
  if (has("postconditions") && label.kind == StepKind::EventOccur &&
      label.domain.is_thread() &&
      !mem_pool_service_precondition(post, label.domain.thread)) {
    add_violation(step, "preconditions",
                  label.event_name +
                      " occurred with a dirty precondition (invariant or "
                      "uncleared transient node)",
                  post, label, schedule);
  }
  if (has("postconditions") && label.completed) {
    if (auto r = check_event_postcondition(post, label); !r.pass)
      add_violation(step, "postconditions", r.detail, post, label, schedule);
  }
  if (has("termination") && label.free_block_iteration && label.variant_block &&
      label.domain.is_thread()) {
    const ThreadId t = label.domain.thread;
    auto variant = [&](const KernelState& s) -> std::uint64_t {
      return s.locals[t].freeing_node
                 ? static_cast<std::uint64_t>(s.locals[t].lvl) + 1
                 : 0;
    };
    const std::uint64_t a_pre = variant(pre);
    const std::uint64_t a_post = variant(post);
    const std::uint64_t bound = label.variant_block->level + 1;
    if (a_pre > bound)
      add_violation(step, "termination",
                    "free_block variant " + std::to_string(a_pre) +
                        " exceeds bound " + std::to_string(bound) + " for " +
                        to_string(*label.variant_block),
                    post, label, schedule);
    else if (a_post >= a_pre)
      add_violation(step, "termination",
                    "free_block variant failed to decrease (" +
                        std::to_string(a_pre) + " -> " + std::to_string(a_post) +
                        ")",
                    post, label, schedule);
  }
}

void fill_termination(const Simulator& sim, const SimState& s, RunContext& ctx,
                      bool hit_bound, std::uint64_t final_step) {
  const auto& sc = sim.scenario();
  for (ThreadId t = 0; t < sc.threads.size(); ++t) {
    const auto& ex = s.exec[t];
    const auto& script = sc.threads[t].script;
    for (std::size_t k = 0; k < script.size(); ++k) {
      EventTermination et;
      et.thread = sc.threads[t].id;
      const Op& op = script[k];
      et.event_name = op.kind == Op::Kind::Alloc ? "alloc#" + std::to_string(k)
                                                 : "free#" + std::to_string(k);
      if (k < ex.script_idx) {
        et.verdict = TerminationVerdict::Completed;
      } else if (k == ex.script_idx && ex.program) {
        et.event_name = ex.program->event_name;
        const bool unsatisfiable =
            ex.program->alloc_mode && ex.program->alloc_mode->is_forever() &&
            ex.program->alloc_size >
                align4(s.kernel.pools[ex.program->pool].config.max_sz);
        et.verdict = unsatisfiable ? TerminationVerdict::NonTermination
                                   : TerminationVerdict::BoundExhausted;
        if (hit_bound && unsatisfiable && ctx.has("termination")) {
          TransitionLabel label;
          label.domain = Domain::of_thread(t);
          label.event_name = ex.program->event_name;
          ctx.add_violation(final_step, "termination",
                            "NONTERMINATION: " + ex.program->event_name +
                                " waits forever for a request larger than the pool",
                            s.kernel, label, nullptr);
        }
      } else {
        et.verdict = TerminationVerdict::NotStarted;
      }
      ctx.report.termination.push_back(et);
    }
  }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Random runs.

RunResult run_random(const Scenario& scenario, std::uint64_t seed,
                     std::uint64_t max_steps, const RunOptions& opts) {
  Simulator sim(scenario);
  const FaultInjector& injector = opts.injector;
  if (injector) sim.set_fault_injector(injector);
  detail::RunContext ctx(scenario);
  ctx.fail_fast = opts.fail_fast;
  ctx.on_violation = opts.on_violation;
  ctx.report.scenario_digest = scenario.digest();
  ctx.report.mode = "random";
  ctx.report.seed = seed;

  Trace trace;
  trace.scenario_digest = scenario.digest();
  trace.code_version = kCodeVersion;
  trace.seed = seed;

  auto& st = sim.mutable_state();
  ctx.check_initial(st.kernel);

  std::mt19937_64 rng(seed);
  std::uint64_t steps = 0;
  while (steps < max_steps && !sim.quiescent(st) && !ctx.stop) {
    auto cands = sim.enabled(st, false);
    if (cands.empty()) break;
    const auto choice = static_cast<std::uint32_t>(
        std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng));
    const KernelState pre = st.kernel;
    TransitionLabel label = sim.apply(st, cands[choice]);
    if (injector) injector(st.kernel, label, steps);
    sim.normalize(st);
    const bool full =
        opts.check_stride <= 1 || steps % opts.check_stride == 0;
    ctx.check_transition(pre, st.kernel, label, steps, nullptr, full);

    TraceEntry e;
    e.index = steps;
    e.domain = label.domain;
    e.event_name = label.event_name;
    e.step_kind = label.kind;
    e.choice = choice;
    e.pre_digest = state_digest(pre);
    e.post_digest = state_digest(st.kernel);
    trace.entries.push_back(std::move(e));
    ++steps;
  }

  ctx.report.transitions = steps;
  ctx.report.states = steps + 1;
  ctx.report.quiescent = sim.quiescent(st);
  detail::fill_termination(sim, st, ctx, steps >= max_steps, steps);
  return {std::move(trace), std::move(ctx.report)};
}

// ---------------------------------------------------------------------------
// Replay and schedule re-execution.

namespace {

RunResult drive_choices(const Scenario& scenario,
                        const std::vector<std::uint32_t>& choices,
                        const Trace* verify_against) {
  Simulator sim(scenario);
  detail::RunContext ctx(scenario);
  ctx.report.scenario_digest = scenario.digest();
  ctx.report.mode = verify_against ? "replay" : "schedule";
  Trace trace;
  trace.scenario_digest = scenario.digest();
  trace.code_version = kCodeVersion;

  auto& st = sim.mutable_state();
  ctx.check_initial(st.kernel);

  for (std::size_t i = 0; i < choices.size(); ++i) {
    auto cands = sim.enabled(st, false);
    const std::uint32_t choice = choices[i];
    if (choice >= cands.size())
      throw ScenarioError("replay integrity: step " + std::to_string(i) +
                          " picks choice " + std::to_string(choice) + " of " +
                          std::to_string(cands.size()) + " enabled");
    const KernelState pre = st.kernel;
    TransitionLabel label = sim.apply(st, cands[choice]);
    sim.normalize(st);
    ctx.check_transition(pre, st.kernel, label, i, nullptr);

    TraceEntry e;
    e.index = i;
    e.domain = label.domain;
    e.event_name = label.event_name;
    e.step_kind = label.kind;
    e.choice = choice;
    e.pre_digest = state_digest(pre);
    e.post_digest = state_digest(st.kernel);
    if (verify_against) {
      const auto& want = verify_against->entries[i];
      if (want.pre_digest != e.pre_digest || want.post_digest != e.post_digest)
        throw ScenarioError("replay integrity: digest divergence at step " +
                            std::to_string(i));
      if (to_string(want.domain) != to_string(e.domain) ||
          want.event_name != e.event_name)
        throw ScenarioError("replay integrity: label divergence at step " +
                            std::to_string(i));
    }
    trace.entries.push_back(std::move(e));
  }

  ctx.report.transitions = choices.size();
  ctx.report.states = choices.size() + 1;
  ctx.report.quiescent = sim.quiescent(st);
  detail::fill_termination(sim, st, ctx, false, choices.size());
  return {std::move(trace), std::move(ctx.report)};
}

} // namespace

RunResult replay(const Scenario& scenario, const Trace& recorded) {
  if (recorded.scenario_digest != scenario.digest())
    throw ScenarioError("replay: trace was recorded from a different scenario");
  std::vector<std::uint32_t> choices;
  choices.reserve(recorded.entries.size());
  for (const auto& e : recorded.entries) choices.push_back(e.choice);
  return drive_choices(scenario, choices, &recorded);
}

RunResult run_schedule(const Scenario& scenario,
                       const std::vector<std::uint32_t>& choices) {
  return drive_choices(scenario, choices, nullptr);
}

// ---------------------------------------------------------------------------
// Trace files.

void Trace::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ScenarioError(path + ": cannot write trace file");
  out << "buddysim-trace v1\n";
  out << "scenario " << scenario_digest << "\n";
  out << "version " << code_version << "\n";
  out << "seed " << seed << "\n";
  for (const auto& e : entries) {
    out << e.index << ' ' << to_string(e.domain) << ' ' << e.event_name << ' '
        << to_string(e.step_kind) << ' ' << e.choice << ' ' << e.pre_digest
        << ' ' << e.post_digest << "\n";
  }
}

Trace Trace::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path + ": cannot open trace file");
  Trace tr;
  std::string line;
  if (!std::getline(in, line) || line != "buddysim-trace v1")
    throw ScenarioError(path + ": not a buddysim trace file");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string first;
    ss >> first;
    if (first == "scenario") {
      ss >> tr.scenario_digest;
    } else if (first == "version") {
      ss >> tr.code_version;
    } else if (first == "seed") {
      ss >> tr.seed;
    } else {
      TraceEntry e;
      e.index = std::stoull(first);
      std::string domain, kind;
      ss >> domain >> e.event_name >> kind >> e.choice >> e.pre_digest >>
          e.post_digest;
      if (!ss) throw ScenarioError(path + ": malformed trace entry: " + line);
      auto k = step_kind_from_string(kind);
      if (!k) throw ScenarioError(path + ": unknown step kind: " + kind);
      e.step_kind = *k;
      if (domain == "SCHED") e.domain = Domain::scheduler();
      else if (domain == "TIMER") e.domain = Domain::timer();
      else if (domain.size() > 1 && domain[0] == 'T')
        e.domain = Domain::of_thread(
            static_cast<ThreadId>(std::stoul(domain.substr(1))));
      else throw ScenarioError(path + ": unknown domain: " + domain);
      tr.entries.push_back(std::move(e));
    }
  }
  return tr;
}

} // namespace buddysim
