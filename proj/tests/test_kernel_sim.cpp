#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "buddysim/safety.hpp"
#include "buddysim/sim.hpp"
#include "test_helpers.hpp"

using namespace buddysim;
using namespace buddysim::testing;

namespace {

Scenario two_thread_scenario(TimeoutMode mode = TimeoutMode::forever(),
                             bool with_frees = true) {
  Scenario sc;
  sc.pools = {pool_b_config()};
  for (const char* id : {"t1", "t2"}) {
    ThreadSpec spec;
    spec.id = id;
    Op alloc;
    alloc.kind = Op::Kind::Alloc;
    alloc.pool = 0;
    alloc.size = 16;
    alloc.timeout = mode;
    spec.script.push_back(alloc);
    if (with_frees) {
      Op free;
      free.kind = Op::Kind::Free;
      free.alloc_index = 0;
      spec.script.push_back(free);
    }
    sc.threads.push_back(spec);
  }
  for (const char* name : kCheckNames) sc.checks.insert(name);
  return sc;
}

// Deterministic driver: prefer the current thread's step, then the
// lowest-index schedule, then the tick.
void run_greedy(Simulator& sim, std::size_t limit = 5000) {
  auto& st = sim.mutable_state();
  for (std::size_t i = 0; i < limit && !sim.quiescent(st); ++i) {
    auto cands = sim.enabled(st, false);
    REQUIRE_FALSE(cands.empty());
    std::size_t pick = 0;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      if (cands[c].kind == Candidate::Kind::ThreadStep) {
        pick = c;
        break;
      }
      if (cands[c].kind == Candidate::Kind::Schedule &&
          cands[pick].kind == Candidate::Kind::Tick)
        pick = c;
    }
    sim.apply(st, cands[pick]);
    sim.normalize(st);
  }
}

bool has_candidate(const std::vector<Candidate>& cands, Candidate::Kind kind,
                   ThreadId t = 0) {
  for (const auto& c : cands) {
    if (c.kind == kind && (kind == Candidate::Kind::Tick || c.thread == t))
      return true;
  }
  return false;
}

// Runs the current thread's steps until it can no longer progress.
void drive_thread(Simulator& sim, ThreadId t) {
  auto& st = sim.mutable_state();
  while (true) {
    auto cands = sim.enabled(st, false);
    bool stepped = false;
    for (const auto& c : cands) {
      if (c.kind == Candidate::Kind::ThreadStep && c.thread == t) {
        sim.apply(st, c);
        sim.normalize(st);
        stepped = true;
        break;
      }
    }
    if (!stepped) break;
  }
}

} // namespace

TEST_CASE("enabled offers schedules and the tick before any thread runs") {
  Scenario sc = two_thread_scenario();
  Simulator sim(sc);

  auto cands = sim.enabled(sim.state(), false);
  // cur is none: no thread step can fire, both threads can be scheduled.
  CHECK_FALSE(has_candidate(cands, Candidate::Kind::ThreadStep, 0));
  CHECK_FALSE(has_candidate(cands, Candidate::Kind::ThreadStep, 1));
  CHECK(has_candidate(cands, Candidate::Kind::Schedule, 0));
  CHECK(has_candidate(cands, Candidate::Kind::Schedule, 1));
  CHECK(has_candidate(cands, Candidate::Kind::Tick));
}

TEST_CASE("enabled offers the scheduled thread's step plus scheduler and timer") {
  Scenario sc = two_thread_scenario();
  Simulator sim(sc);
  auto& st = sim.mutable_state();

  sim.apply(st, {Domain::scheduler(), Candidate::Kind::Schedule, 0});

  auto cands = sim.enabled(st, false);
  CHECK(has_candidate(cands, Candidate::Kind::ThreadStep, 0));
  CHECK_FALSE(has_candidate(cands, Candidate::Kind::ThreadStep, 1));
  CHECK(has_candidate(cands, Candidate::Kind::Schedule, 1));
  CHECK_FALSE(has_candidate(cands, Candidate::Kind::Schedule, 0));
  CHECK(has_candidate(cands, Candidate::Kind::Tick));
}

TEST_CASE("schedule switches cur and demotes the running thread") {
  Scenario sc = two_thread_scenario();
  Simulator sim(sc);
  auto& st = sim.mutable_state();

  sim.apply(st, {Domain::scheduler(), Candidate::Kind::Schedule, 0});
  CHECK(st.kernel.cur == ThreadId{0});
  CHECK(st.kernel.thd_state[0] == ThreadState::Running);

  const MemPool pools_before = st.kernel.pools[0];
  const auto locals_before = st.kernel.locals;
  sim.apply(st, {Domain::scheduler(), Candidate::Kind::Schedule, 1});
  CHECK(st.kernel.cur == ThreadId{1});
  CHECK(st.kernel.thd_state[0] == ThreadState::Ready);
  CHECK(st.kernel.thd_state[1] == ThreadState::Running);
  CHECK(st.kernel.pools[0].levels == pools_before.levels);
  CHECK(st.kernel.locals == locals_before);

  // Re-scheduling the thread that is already current is a no-op beyond
  // re-asserting RUNNING.
  st.kernel.thd_state[1] = ThreadState::Ready;
  sim.apply(st, {Domain::scheduler(), Candidate::Kind::Schedule, 1});
  CHECK(st.kernel.cur == ThreadId{1});
  CHECK(st.kernel.thd_state[1] == ThreadState::Running);
}

TEST_CASE("tick advances time and readies expired timed waiters") {
  // t1 holds the whole pool forever; t2 asks with a 2-tick deadline.
  Scenario sc;
  sc.pools = {pool_a_config()};
  ThreadSpec t1;
  t1.id = "t1";
  Op hold;
  hold.kind = Op::Kind::Alloc;
  hold.pool = 0;
  hold.size = 256;
  hold.timeout = TimeoutMode::forever();
  t1.script.push_back(hold);
  ThreadSpec t2;
  t2.id = "t2";
  Op timed = hold;
  timed.timeout = TimeoutMode::after(2);
  t2.script.push_back(timed);
  sc.threads = {t1, t2};

  Simulator sim(sc);
  auto& st = sim.mutable_state();

  sim.apply(st, {Domain::scheduler(), Candidate::Kind::Schedule, 0});
  drive_thread(sim, 0); // t1 takes the only block and completes
  REQUIRE(st.exec[0].done(1));

  sim.apply(st, {Domain::scheduler(), Candidate::Kind::Schedule, 1});
  drive_thread(sim, 1); // t2 pends with its deadline armed
  REQUIRE(st.kernel.thd_state[1] == ThreadState::Blocked);
  REQUIRE(st.kernel.pools[0].wait_q == std::vector<ThreadId>{1});
  const std::uint64_t deadline = st.kernel.locals[1].endt;

  const auto mblocks_before = st.kernel.mblocks;
  while (st.kernel.tick <= deadline) {
    const std::uint64_t tick_before = st.kernel.tick;
    const bool still_waiting = st.kernel.tick < deadline;
    sim.apply(st, {Domain::timer(), Candidate::Kind::Tick, 0});
    CHECK(st.kernel.tick == tick_before + 1);
    CHECK(st.kernel.mblocks == mblocks_before);
    if (still_waiting) CHECK(st.kernel.thd_state[1] == ThreadState::Blocked);
  }
  // The first tick strictly past the deadline removed the waiter.
  CHECK(st.kernel.thd_state[1] == ThreadState::Ready);
  CHECK(st.kernel.pools[0].wait_q.empty());

  // Resumed after scheduling, t2 completes with ETIMEOUT.
  sim.apply(st, {Domain::scheduler(), Candidate::Kind::Schedule, 1});
  drive_thread(sim, 1);
  CHECK(sim.quiescent(st));
  CHECK(st.kernel.locals[1].ret == RetCode::Timeout);
  CHECK_FALSE(st.exec[1].alloc_results.at(0).has_value());
}

TEST_CASE("a free drains the whole wait queue in one atomic step") {
  // Both threads want the only 256-byte block; the loser pends and is woken
  // by the winner's free in a single wake transition.
  Scenario sc;
  sc.pools = {pool_a_config()};
  for (const char* id : {"t1", "t2"}) {
    ThreadSpec spec;
    spec.id = id;
    Op alloc;
    alloc.kind = Op::Kind::Alloc;
    alloc.pool = 0;
    alloc.size = 256;
    alloc.timeout = TimeoutMode::forever();
    Op free;
    free.kind = Op::Kind::Free;
    free.alloc_index = 0;
    spec.script = {alloc, free};
    sc.threads.push_back(spec);
  }

  Simulator sim(sc);
  auto& st = sim.mutable_state();
  sim.apply(st, {Domain::scheduler(), Candidate::Kind::Schedule, 0});
  drive_thread(sim, 0); // t1 allocates, then frees: empty wait_q, no yield
  REQUIRE(sim.quiescent(st) == false);

  // Restart shape: t2 allocates, t1... instead force the pend: t2 runs its
  // alloc while t1 holds nothing anymore, so give t1 the block again first.
  // Simpler to assert on a fresh simulator with an explicit interleaving.
  Simulator sim2(sc);
  auto& st2 = sim2.mutable_state();
  sim2.apply(st2, {Domain::scheduler(), Candidate::Kind::Schedule, 0});
  // t1 allocates the block but does not reach its free yet: step until the
  // alloc event completes.
  while (st2.exec[0].script_idx == 0) {
    auto cands = sim2.enabled(st2, false);
    REQUIRE(has_candidate(cands, Candidate::Kind::ThreadStep, 0));
    for (const auto& c : cands)
      if (c.kind == Candidate::Kind::ThreadStep) {
        sim2.apply(st2, c);
        sim2.normalize(st2);
        break;
      }
  }
  // t2 now runs and pends.
  sim2.apply(st2, {Domain::scheduler(), Candidate::Kind::Schedule, 1});
  drive_thread(sim2, 1);
  REQUIRE(st2.kernel.thd_state[1] == ThreadState::Blocked);
  REQUIRE(st2.kernel.pools[0].wait_q == std::vector<ThreadId>{1});

  // Back to t1, which frees; watch for the single drain transition.
  sim2.apply(st2, {Domain::scheduler(), Candidate::Kind::Schedule, 0});
  bool saw_drain = false;
  while (true) {
    auto cands = sim2.enabled(st2, false);
    bool stepped = false;
    for (const auto& c : cands) {
      if (c.kind != Candidate::Kind::ThreadStep || c.thread != 0) continue;
      const bool waiters_before = !st2.kernel.pools[0].wait_q.empty();
      TransitionLabel label = sim2.apply(st2, c);
      sim2.normalize(st2);
      stepped = true;
      if (waiters_before && st2.kernel.pools[0].wait_q.empty()) {
        saw_drain = true;
        // One atomic transition drained the queue and readied the waiter.
        CHECK(label.kind == StepKind::AtomicBlock);
        CHECK(st2.kernel.thd_state[1] == ThreadState::Ready);
        // The freeing thread yielded to the scheduler.
        CHECK(st2.kernel.thd_state[0] == ThreadState::Ready);
      }
      break;
    }
    if (!stepped) break;
  }
  CHECK(saw_drain);
}

TEST_CASE("run_random is deterministic per seed") {
  Scenario sc = two_thread_scenario();
  auto a = run_random(sc, 1, 4000);
  auto b = run_random(sc, 1, 4000);
  REQUIRE(a.trace.entries.size() == b.trace.entries.size());
  for (std::size_t i = 0; i < a.trace.entries.size(); ++i) {
    CHECK(a.trace.entries[i].choice == b.trace.entries[i].choice);
    CHECK(a.trace.entries[i].pre_digest == b.trace.entries[i].pre_digest);
    CHECK(a.trace.entries[i].post_digest == b.trace.entries[i].post_digest);
  }
  CHECK(a.report.violations.empty());

  auto c = run_random(sc, 2, 4000);
  bool same = a.trace.entries.size() == c.trace.entries.size();
  if (same) {
    for (std::size_t i = 0; i < a.trace.entries.size() && same; ++i)
      same = a.trace.entries[i].choice == c.trace.entries[i].choice;
  }
  CHECK_FALSE(same);
}

TEST_CASE("trace entries chain pre and post digests") {
  Scenario sc = two_thread_scenario();
  auto res = run_random(sc, 7, 8000);
  REQUIRE(res.report.quiescent);
  for (std::size_t i = 1; i < res.trace.entries.size(); ++i) {
    CHECK(res.trace.entries[i - 1].post_digest ==
          res.trace.entries[i].pre_digest);
  }
}

TEST_CASE("only the scheduled thread mutates pool memory") {
  Scenario sc = two_thread_scenario();
  Simulator sim(sc);
  auto& st = sim.mutable_state();
  std::mt19937_64 rng(11);
  for (int i = 0; i < 8000 && !sim.quiescent(st); ++i) {
    auto cands = sim.enabled(st, false);
    const auto& cand =
        cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)];
    const KernelState pre = st.kernel;
    sim.apply(st, cand);
    sim.normalize(st);
    bool levels_changed = false;
    for (std::size_t p = 0; p < pre.pools.size(); ++p)
      levels_changed =
          levels_changed || pre.pools[p].levels != st.kernel.pools[p].levels;
    if (levels_changed) {
      REQUIRE(cand.kind == Candidate::Kind::ThreadStep);
      CHECK(pre.cur == cand.thread);
      CHECK(pre.thd_state[cand.thread] == ThreadState::Running);
    }
  }
  CHECK(sim.quiescent(st));
}

TEST_CASE("single-thread scenarios run as plain sequential execution") {
  Scenario sc = two_thread_scenario();
  sc.threads.resize(1);
  auto res = run_random(sc, 3, 8000);
  CHECK(res.report.quiescent);
  CHECK(res.report.violations.empty());
  for (const auto& e : res.trace.entries) {
    if (e.domain.is_thread()) CHECK(e.domain.thread == 0);
  }
}

TEST_CASE("explore: tiny scenario has no violations and all terminals complete") {
  Scenario sc = two_thread_scenario(TimeoutMode::no_wait(), false);
  sc.tick_limit = 1;
  auto out = explore(sc, 300);
  CHECK(out.report.violations.empty());
  CHECK(out.complete);
  CHECK(out.report.terminal_complete > 0);
  CHECK(out.report.states > 10);

  SUBCASE("depth 0 leaves only the initial state") {
    auto shallow = explore(sc, 0);
    CHECK(shallow.report.states == 1);
    CHECK(shallow.report.transitions == 0);
    CHECK(shallow.report.violations.empty());
    CHECK(shallow.report.bound_cut == 1);
  }
}

TEST_CASE("explore finds what a random run found, on the same scenario") {
  // bug2: a FOREVER alloc completing with EAGAIN violates its postcondition.
  Scenario sc = two_thread_scenario();
  sc.bugs.bug2_forever_eagain = true;

  auto out = explore(sc, 400);
  bool explored_found = false;
  for (const auto& v : out.report.violations)
    explored_found = explored_found || v.check_name == "postconditions";
  CHECK(explored_found);

  bool random_found = false;
  for (std::uint64_t seed = 0; seed < 300 && !random_found; ++seed) {
    auto res = run_random(sc, seed, 3000);
    for (const auto& v : res.report.violations)
      random_found = random_found || v.check_name == "postconditions";
  }
  CHECK(random_found);
}

TEST_CASE("a violation schedule from explore re-executes to the same finding") {
  Scenario sc = two_thread_scenario();
  sc.bugs.bug2_forever_eagain = true;
  auto out = explore(sc, 400);
  REQUIRE_FALSE(out.report.violations.empty());
  const auto& v = out.report.violations.front();
  REQUIRE_FALSE(v.schedule.empty());

  auto rerun = run_schedule(sc, v.schedule);
  bool found = false;
  for (const auto& rv : rerun.report.violations)
    found = found || (rv.check_name == v.check_name && rv.witness == v.witness);
  CHECK(found);
}

TEST_CASE("replay reproduces a recorded run and rejects mismatches") {
  Scenario sc = two_thread_scenario();
  sc.bugs.bug2_forever_eagain = true;

  // Find a seed whose run violates something, to compare verdict lists.
  RunResult recorded;
  bool found = false;
  for (std::uint64_t seed = 0; seed < 300 && !found; ++seed) {
    recorded = run_random(sc, seed, 3000);
    found = !recorded.report.violations.empty();
  }
  REQUIRE(found);

  const std::string path =
      (std::filesystem::temp_directory_path() / "buddysim_replay_test.trace")
          .string();
  recorded.trace.save(path);
  Trace loaded = Trace::load(path);

  auto replayed = replay(sc, loaded);
  REQUIRE(replayed.report.violations.size() == recorded.report.violations.size());
  for (std::size_t i = 0; i < replayed.report.violations.size(); ++i) {
    CHECK(replayed.report.violations[i].check_name ==
          recorded.report.violations[i].check_name);
    CHECK(replayed.report.violations[i].witness ==
          recorded.report.violations[i].witness);
    CHECK(replayed.report.violations[i].state_digest ==
          recorded.report.violations[i].state_digest);
  }

  SUBCASE("a trace from another scenario is rejected") {
    Scenario other = two_thread_scenario();
    CHECK_THROWS_AS(replay(other, loaded), ScenarioError);
  }
  SUBCASE("a truncated trace replays as a prefix") {
    Trace prefix = loaded;
    prefix.entries.resize(prefix.entries.size() / 2);
    auto partial = replay(sc, prefix);
    CHECK(partial.report.transitions == prefix.entries.size());
    CHECK_FALSE(partial.report.quiescent);
  }
  std::remove(path.c_str());
}
