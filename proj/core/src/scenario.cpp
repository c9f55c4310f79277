#include "buddysim/scenario.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "buddysim/safety.hpp"

namespace buddysim {

using nlohmann::json;

const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::Random: return "random";
    case RunMode::Exhaustive: return "exhaustive";
    case RunMode::Replay: return "replay";
  }
  return "?";
}

ThreadId Scenario::thread_index(const std::string& id) const {
  for (ThreadId t = 0; t < threads.size(); ++t) {
    if (threads[t].id == id) return t;
  }
  throw ScenarioError("unknown thread id: " + id);
}

namespace {

[[noreturn]] void fail(const std::string& origin, const std::string& path,
                       const std::string& msg) {
  throw ScenarioError(origin + ": " + path + ": " + msg);
}

TimeoutMode parse_timeout(const json& v, const std::string& origin,
                          const std::string& path) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "forever") return TimeoutMode::forever();
    if (s == "nowait") return TimeoutMode::no_wait();
    fail(origin, path, "timeout must be \"forever\", \"nowait\" or a positive tick count");
  }
  if (v.is_number_unsigned() || v.is_number_integer()) {
    const auto n = v.get<std::int64_t>();
    if (n < 1) fail(origin, path, "tick timeout must be >= 1");
    return TimeoutMode::after(static_cast<std::uint64_t>(n));
  }
  fail(origin, path, "timeout must be \"forever\", \"nowait\" or a positive tick count");
}

} // namespace

std::optional<BugConfig> parse_bug_list(const std::string& list, std::string* err) {
  BugConfig bugs;
  if (list == "none") return bugs;
  if (list == "all") {
    bugs.bug1_split = bugs.bug2_forever_eagain = bugs.bug3_nonterm = true;
    return bugs;
  }
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "bug1") bugs.bug1_split = true;
    else if (item == "bug2") bugs.bug2_forever_eagain = true;
    else if (item == "bug3") bugs.bug3_nonterm = true;
    else {
      if (err) *err = "unknown bug name: " + item;
      return std::nullopt;
    }
  }
  return bugs;
}

std::optional<std::set<std::string>> parse_check_list(const std::string& list,
                                                      std::string* err) {
  std::set<std::string> checks;
  if (list == "all") {
    for (const char* name : kCheckNames) checks.insert(name);
    return checks;
  }
  if (list == "none") return checks;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    bool known = false;
    for (const char* name : kCheckNames) known = known || item == name;
    if (!known) {
      if (err) *err = "unknown check name: " + item;
      return std::nullopt;
    }
    checks.insert(item);
  }
  return checks;
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ScenarioError(origin + ": parse error: " + e.what());
  }
  if (!doc.is_object()) fail(origin, "$", "scenario must be a JSON object");

  Scenario sc;

  if (!doc.contains("pools") || !doc["pools"].is_array() || doc["pools"].empty())
    fail(origin, "pools", "at least one pool is required");
  std::uint64_t next_buf = 0;
  for (std::size_t i = 0; i < doc["pools"].size(); ++i) {
    const auto& jp = doc["pools"][i];
    const std::string path = "pools[" + std::to_string(i) + "]";
    PoolConfig cfg;
    cfg.id = jp.value("id", "P" + std::to_string(i));
    if (!jp.contains("max_sz") || !jp.contains("n_max") || !jp.contains("n_levels"))
      fail(origin, path, "max_sz, n_max and n_levels are required");
    cfg.max_sz = jp["max_sz"].get<std::uint64_t>();
    cfg.n_max = jp["n_max"].get<std::uint64_t>();
    cfg.n_levels = jp["n_levels"].get<std::uint32_t>();
    cfg.buf = jp.value("buf", next_buf);
    std::string why;
    if (!cfg.valid(&why)) fail(origin, path, why);
    for (const auto& other : sc.pools) {
      if (other.id == cfg.id) fail(origin, path, "duplicate pool id " + cfg.id);
    }
    sc.pools.push_back(cfg);
    next_buf = std::max(next_buf, cfg.buf + cfg.span());
  }

  // Windows must satisfy inv_pools_notoverlap before anything runs.
  {
    KernelState probe;
    for (const auto& cfg : sc.pools) probe.pools.push_back(init_pool(cfg));
    if (auto v = check_inv_pools_notoverlap(probe); !v.pass)
      fail(origin, "pools", "windows overlap (inv_pools_notoverlap): " +
                                to_string(*v.witness));
  }

  if (!doc.contains("threads") || !doc["threads"].is_array() || doc["threads"].empty())
    fail(origin, "threads", "at least one thread is required");
  if (doc["threads"].size() > 8)
    fail(origin, "threads", "at most 8 threads are supported");
  for (std::size_t ti = 0; ti < doc["threads"].size(); ++ti) {
    const auto& jt = doc["threads"][ti];
    const std::string tpath = "threads[" + std::to_string(ti) + "]";
    ThreadSpec spec;
    spec.id = jt.value("id", "t" + std::to_string(ti + 1));
    for (const auto& other : sc.threads) {
      if (other.id == spec.id) fail(origin, tpath, "duplicate thread id " + spec.id);
    }
    std::size_t allocs_so_far = 0;
    std::set<std::size_t> freed;
    const auto& jscript = jt.contains("script") ? jt["script"] : json::array();
    for (std::size_t oi = 0; oi < jscript.size(); ++oi) {
      const auto& jo = jscript[oi];
      const std::string opath = tpath + ".script[" + std::to_string(oi) + "]";
      Op op;
      const std::string kind = jo.value("op", "");
      if (kind == "alloc") {
        op.kind = Op::Kind::Alloc;
        const std::string pool_id = jo.value("pool", sc.pools.front().id);
        bool found = false;
        for (PoolRef p = 0; p < sc.pools.size(); ++p) {
          if (sc.pools[p].id == pool_id) {
            op.pool = p;
            found = true;
          }
        }
        if (!found) fail(origin, opath, "unknown pool " + pool_id);
        if (!jo.contains("size")) fail(origin, opath, "size is required");
        op.size = jo["size"].get<std::uint64_t>();
        if (op.size == 0) fail(origin, opath, "size must be positive");
        op.timeout = jo.contains("timeout")
                         ? parse_timeout(jo["timeout"], origin, opath)
                         : TimeoutMode::forever();
        ++allocs_so_far;
      } else if (kind == "free") {
        op.kind = Op::Kind::Free;
        if (!jo.contains("alloc_index"))
          fail(origin, opath, "alloc_index is required");
        op.alloc_index = jo["alloc_index"].get<std::size_t>();
        if (op.alloc_index >= allocs_so_far)
          fail(origin, opath,
               "alloc_index " + std::to_string(op.alloc_index) +
                   " does not reference an earlier alloc of this script");
        if (!freed.insert(op.alloc_index).second)
          fail(origin, opath, "alloc_index freed twice");
      } else {
        fail(origin, opath, "op must be \"alloc\" or \"free\"");
      }
      spec.script.push_back(op);
    }
    sc.threads.push_back(std::move(spec));
  }

  if (doc.contains("bugs")) {
    const auto& jb = doc["bugs"];
    if (jb.is_object()) {
      sc.bugs.bug1_split = jb.value("bug1_split", false);
      sc.bugs.bug2_forever_eagain = jb.value("bug2_forever_eagain", false);
      sc.bugs.bug3_nonterm = jb.value("bug3_nonterm", false);
    } else if (jb.is_string()) {
      std::string err;
      auto bugs = parse_bug_list(jb.get<std::string>(), &err);
      if (!bugs) fail(origin, "bugs", err);
      sc.bugs = *bugs;
    } else {
      fail(origin, "bugs", "bugs must be an object or a comma list");
    }
  }

  if (doc.contains("checks")) {
    if (!doc["checks"].is_array()) fail(origin, "checks", "checks must be an array");
    for (const auto& jc : doc["checks"]) {
      const std::string name = jc.get<std::string>();
      bool known = false;
      for (const char* n : kCheckNames) known = known || name == n;
      if (!known) fail(origin, "checks", "unknown check name: " + name);
      sc.checks.insert(name);
    }
  } else {
    for (const char* name : kCheckNames) sc.checks.insert(name);
  }

  const std::string mode = doc.value("mode", "random");
  if (mode == "random") sc.mode = RunMode::Random;
  else if (mode == "exhaustive") sc.mode = RunMode::Exhaustive;
  else if (mode == "replay") sc.mode = RunMode::Replay;
  else fail(origin, "mode", "mode must be random, exhaustive or replay");

  sc.seed = doc.value("seed", std::uint64_t{0});
  sc.max_steps = doc.value("max_steps", std::uint64_t{10000});
  sc.depth_bound = doc.value("depth_bound", std::uint64_t{500});
  sc.tick_limit = doc.value("tick_limit", std::uint64_t{3});

  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path + ": cannot open scenario file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

std::uint64_t Scenario::digest() const {
  Fnv1a f;
  f.feed(pools.size());
  for (const auto& p : pools) {
    f.feed_bytes(p.id.data(), p.id.size());
    f.feed(p.buf);
    f.feed(p.max_sz);
    f.feed(p.n_max);
    f.feed(p.n_levels);
  }
  f.feed(threads.size());
  for (const auto& t : threads) {
    f.feed_bytes(t.id.data(), t.id.size());
    f.feed(t.script.size());
    for (const auto& op : t.script) {
      f.feed(static_cast<std::uint64_t>(op.kind));
      f.feed(op.pool);
      f.feed(op.size);
      f.feed(static_cast<std::uint64_t>(op.timeout.kind));
      f.feed(op.timeout.ticks);
      f.feed(op.alloc_index);
    }
  }
  f.feed(bugs.bug1_split);
  f.feed(bugs.bug2_forever_eagain);
  f.feed(bugs.bug3_nonterm);
  return f.h;
}

KernelState initial_state(const Scenario& sc) {
  KernelState s;
  for (const auto& cfg : sc.pools) s.pools.push_back(init_pool(cfg));
  s.cur.reset();
  s.tick = 0;
  s.thd_state.assign(sc.threads.size(), ThreadState::Ready);
  s.locals.assign(sc.threads.size(), ThreadLocals{});
  s.mblocks.assign(sc.threads.size(), {});
  return s;
}

} // namespace buddysim
