#include "buddysim/security.hpp"

#include <algorithm>

namespace buddysim {

bool interferes(const Domain& d1, const Domain& d2) {
  if (d1.kind == Domain::Kind::Timer) return d2.kind == Domain::Kind::Timer;
  if (d2.kind == Domain::Kind::Timer) return d1.kind == Domain::Kind::Timer;
  if (d1.is_thread() && d2.is_thread()) return d1.thread == d2.thread;
  return true;
}

bool state_equiv(const Domain& d, const KernelState& s, const KernelState& r) {
  switch (d.kind) {
    case Domain::Kind::Scheduler: return s.cur == r.cur;
    case Domain::Kind::Thread: return s.mblocks[d.thread] == r.mblocks[d.thread];
    case Domain::Kind::Timer: return s.tick == r.tick;
  }
  return false;
}

SecurityConfig SecurityConfig::standard() {
  SecurityConfig cfg;
  cfg.interferes = [](const Domain& a, const Domain& b) {
    return buddysim::interferes(a, b);
  };
  cfg.equiv = [](const Domain& d, const KernelState& s, const KernelState& r) {
    return buddysim::state_equiv(d, s, r);
  };
  return cfg;
}

Domain dom_of_step(const TransitionLabel& label) { return label.domain; }

namespace {

std::vector<Domain> all_domains(const KernelState& s) {
  std::vector<Domain> ds;
  ds.push_back(Domain::scheduler());
  ds.push_back(Domain::timer());
  for (ThreadId t = 0; t < s.thread_count(); ++t) ds.push_back(Domain::of_thread(t));
  return ds;
}

std::string view_name(const Domain& d) {
  switch (d.kind) {
    case Domain::Kind::Scheduler: return "cur";
    case Domain::Kind::Timer: return "tick";
    case Domain::Kind::Thread: return "mblocks(t" + std::to_string(d.thread) + ")";
  }
  return "?";
}

CheckResult integrity_over(const KernelState& pre, const KernelState& post,
                           const Domain& actor, const TransitionLabel& label,
                           const SecurityConfig& cfg) {
  for (const Domain& d : all_domains(pre)) {
    if (cfg.interferes(actor, d)) continue;
    if (!cfg.equiv(d, pre, post)) {
      return CheckResult::fail("step " + label.step_label + " of " +
                               label.event_name + " by " + to_string(actor) +
                               " changed " + view_name(d) +
                               " of non-interfered domain " + to_string(d));
    }
  }
  return CheckResult::ok();
}

} // namespace

CheckResult check_integrity_step(const KernelState& pre, const KernelState& post,
                                 const TransitionLabel& label,
                                 const SecurityConfig& cfg) {
  return integrity_over(pre, post, dom_of_step(label), label, cfg);
}

CheckResult check_event_integrity_step(const KernelState& pre,
                                       const KernelState& post,
                                       const TransitionLabel& label,
                                       const SecurityConfig& cfg) {
  // The domain of the whole event coincides with the domain of each of its
  // transitions, so the event-level condition is evaluated per G-pair.
  return integrity_over(pre, post, label.domain, label, cfg);
}

bool gvars_conf_stable(const KernelState& s, const KernelState& r) {
  if (s.pools.size() != r.pools.size()) return false;
  for (std::size_t p = 0; p < s.pools.size(); ++p) {
    const auto& a = s.pools[p].config;
    const auto& b = r.pools[p].config;
    if (a.buf != b.buf || a.max_sz != b.max_sz || a.n_max != b.n_max ||
        a.n_levels != b.n_levels)
      return false;
  }
  return true;
}

namespace {

bool pools_equal(const KernelState& s, const KernelState& r) {
  if (s.pools.size() != r.pools.size()) return false;
  for (std::size_t p = 0; p < s.pools.size(); ++p) {
    if (s.pools[p].levels != r.pools[p].levels) return false;
    if (s.pools[p].wait_q != r.pools[p].wait_q) return false;
  }
  return true;
}

bool full_state_equal(const KernelState& s, const KernelState& r) {
  return pools_equal(s, r) && gvars_conf_stable(s, r) && s.cur == r.cur &&
         s.tick == r.tick && s.thd_state == r.thd_state && s.locals == r.locals &&
         s.mblocks == r.mblocks;
}

} // namespace

bool gvars_nochange(const KernelState& s, const KernelState& r) {
  return gvars_conf_stable(s, r) && pools_equal(s, r);
}

bool lvars_nochange(ThreadId t, const KernelState& s, const KernelState& r) {
  return s.locals[t] == r.locals[t];
}

CheckResult check_guarantee_step(const KernelState& pre, const KernelState& post,
                                 const TransitionLabel& label) {
  const Domain d = label.domain;
  if (d.kind == Domain::Kind::Scheduler) {
    // schedule changes only cur and thread states.
    if (!gvars_nochange(pre, post))
      return CheckResult::fail("schedule step changed pool memory");
    if (pre.locals != post.locals)
      return CheckResult::fail("schedule step changed thread locals");
    if (pre.mblocks != post.mblocks)
      return CheckResult::fail("schedule step changed owned blocks");
    if (pre.tick != post.tick)
      return CheckResult::fail("schedule step changed the tick");
    return CheckResult::ok();
  }
  if (d.kind == Domain::Kind::Timer) {
    // tick advances the clock and may only ready expired waiters.
    if (post.tick != pre.tick + 1)
      return CheckResult::fail("tick step did not advance the tick by one");
    if (pre.cur != post.cur)
      return CheckResult::fail("tick step changed the current thread");
    if (pre.locals != post.locals)
      return CheckResult::fail("tick step changed thread locals");
    if (pre.mblocks != post.mblocks)
      return CheckResult::fail("tick step changed owned blocks");
    if (!gvars_conf_stable(pre, post))
      return CheckResult::fail("tick step changed a pool configuration");
    for (std::size_t p = 0; p < pre.pools.size(); ++p) {
      if (pre.pools[p].levels != post.pools[p].levels)
        return CheckResult::fail("tick step changed pool bitmaps or free lists");
      // Wait queues may only lose members, and each one must now be READY.
      for (ThreadId w : post.pools[p].wait_q) {
        const auto& q = pre.pools[p].wait_q;
        if (std::find(q.begin(), q.end(), w) == q.end())
          return CheckResult::fail("tick step enqueued a waiter");
      }
      for (ThreadId w : pre.pools[p].wait_q) {
        const auto& q = post.pools[p].wait_q;
        if (std::find(q.begin(), q.end(), w) == q.end() &&
            post.thd_state[w] != ThreadState::Ready)
          return CheckResult::fail("tick step removed a waiter without readying it");
      }
    }
    return CheckResult::ok();
  }

  // Thread step: the memory-service guarantee.
  const ThreadId t = d.thread;
  if (full_state_equal(pre, post)) return CheckResult::ok();
  if (!gvars_conf_stable(pre, post))
    return CheckResult::fail("service step changed a pool configuration");
  if (pre.cur != t) {
    if (!gvars_nochange(pre, post))
      return CheckResult::fail("unscheduled thread step changed pool memory");
    if (!lvars_nochange(t, pre, post))
      return CheckResult::fail("unscheduled thread step changed its locals");
  } else if (state_inv(pre) && !state_inv(post)) {
    return CheckResult::fail("service step broke the memory invariant");
  }
  for (ThreadId u = 0; u < pre.thread_count(); ++u) {
    if (u == t) continue;
    if (!lvars_nochange(u, pre, post))
      return CheckResult::fail("service step changed locals of t" + std::to_string(u));
    if (pre.mblocks[u] != post.mblocks[u])
      return CheckResult::fail("service step changed owned blocks of t" +
                               std::to_string(u));
  }
  if (pre.tick != post.tick)
    return CheckResult::fail("service step changed the tick");
  return CheckResult::ok();
}

CheckResult check_rely_step(const KernelState& pre, const KernelState& post,
                            const TransitionLabel& label, ThreadId observer) {
  if (label.domain.is_thread() && label.domain.thread == observer)
    return CheckResult::ok(); // own step, not an environment transition
  if (full_state_equal(pre, post)) return CheckResult::ok();
  auto fail = [&](const std::string& what) {
    return CheckResult::fail("environment step (" + to_string(label.domain) +
                             ", " + label.step_label + ") broke rely of t" +
                             std::to_string(observer) + ": " + what);
  };
  if (!gvars_conf_stable(pre, post)) return fail("pool configuration changed");
  if (state_inv(pre) && !state_inv(post)) return fail("memory invariant broken");
  if (!lvars_nochange(observer, pre, post)) return fail("observer locals changed");
  if (pre.cur == observer) {
    if (!pools_equal(pre, post))
      return fail("memory changed while the observer is scheduled");
    for (ThreadId u = 0; u < pre.thread_count(); ++u) {
      if (u != observer && !lvars_nochange(u, pre, post))
        return fail("locals of another thread changed while the observer is scheduled");
    }
  }
  if (pre.mblocks[observer] != post.mblocks[observer])
    return fail("observer owned blocks changed");
  return CheckResult::ok();
}

bool mblk_valid(const KernelState& s, PoolRef pool, std::uint64_t size,
                const BlockId& b) {
  if (b.pool != pool || pool >= s.pools.size()) return false;
  const auto& mp = s.pools[pool];
  if (b.level >= mp.levels.size()) return false;
  if (b.block >= mp.levels[b.level].bits.size()) return false;
  const std::uint64_t lsz = align4(mp.config.max_sz) >> (2 * b.level);
  if (b.data != block_ptr(mp, lsz, b.block)) return false;
  if (get_bit(mp, b.level, b.block) != BlockState::Allocated) return false;
  return lsz >= size;
}

bool mem_pool_service_precondition(const KernelState& s, ThreadId t) {
  return state_inv(s) && !s.locals[t].freeing_node &&
         !s.locals[t].allocating_node;
}

ServiceContract memory_service_contract(ThreadId t) {
  ServiceContract c;
  c.pre = [t](const KernelState& s) {
    return mem_pool_service_precondition(s, t);
  };
  c.rely = [t](const KernelState& s, const KernelState& r) {
    TransitionLabel env;
    env.domain = Domain::scheduler(); // any non-t actor
    env.event_name = "environment";
    return check_rely_step(s, r, env, t).pass;
  };
  c.guarantee = [t](const KernelState& s, const KernelState& r) {
    TransitionLabel own;
    own.domain = Domain::of_thread(t);
    own.event_name = "service";
    return check_guarantee_step(s, r, own).pass;
  };
  c.post = [](const KernelState& s, const TransitionLabel& label) {
    return check_event_postcondition(s, label).pass;
  };
  return c;
}

CheckResult check_event_postcondition(const KernelState& final_state,
                                      const TransitionLabel& label) {
  if (!label.completed || !label.domain.is_thread())
    return CheckResult::ok();
  const ThreadId t = label.domain.thread;
  const auto& l = final_state.locals[t];
  const auto& done = *label.completed;
  auto fail = [&](const std::string& what) {
    return CheckResult::fail(label.event_name + " completed violating its postcondition: " + what);
  };
  if (!state_inv(final_state)) return fail("memory invariant does not hold");
  if (l.freeing_node) return fail("freeing_node not cleared");
  if (l.allocating_node) return fail("allocating_node not cleared");
  if (!done.is_alloc) return CheckResult::ok();

  const RetCode ret = l.ret;
  const bool ok_with_block = ret == RetCode::Ok && l.mempoolalloc_ret &&
                             mblk_valid(final_state, done.pool, done.size,
                                        *l.mempoolalloc_ret);
  if (ret == RetCode::Ok && !ok_with_block) {
    return fail(l.mempoolalloc_ret
                    ? "OK result " + to_string(*l.mempoolalloc_ret) +
                          " is not a valid block for the request"
                    : "OK result carries no block");
  }
  const bool err_clean = !l.mempoolalloc_ret;
  switch (done.mode.kind) {
    case TimeoutMode::Kind::Forever:
      if (ok_with_block) return CheckResult::ok();
      if (ret == RetCode::SizeErr && err_clean) return CheckResult::ok();
      return fail("FOREVER alloc returned " + std::string(to_string(ret)));
    case TimeoutMode::Kind::NoWait:
      if (ok_with_block) return CheckResult::ok();
      if ((ret == RetCode::NoMem || ret == RetCode::SizeErr) && err_clean)
        return CheckResult::ok();
      return fail("NOWAIT alloc returned " + std::string(to_string(ret)));
    case TimeoutMode::Kind::Ticks:
      if (ok_with_block) return CheckResult::ok();
      if ((ret == RetCode::Timeout || ret == RetCode::SizeErr) && err_clean)
        return CheckResult::ok();
      return fail("timed alloc returned " + std::string(to_string(ret)));
  }
  return CheckResult::ok();
}

} // namespace buddysim
