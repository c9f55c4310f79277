// Command-line front end: scenario ingestion, run orchestration and reports.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "buddysim/sim.hpp"

namespace {

constexpr int kExitClean = 0;
constexpr int kExitViolation = 1;
constexpr int kExitBoundExhausted = 2;
constexpr int kExitError = 3;

struct RunFlags {
  std::string scenario_path;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> max_steps;
  std::optional<std::uint64_t> depth;
  std::string bugs;
  std::string checks;
  std::string trace_in;
  std::string trace_out;
  std::string report_out;
  bool fail_fast = false;
  std::optional<std::uint64_t> check_stride;
};

int do_run(const RunFlags& flags) {
  using namespace buddysim;

  Scenario sc = load_scenario(flags.scenario_path);
  if (!flags.mode.empty()) {
    if (flags.mode == "random") sc.mode = RunMode::Random;
    else if (flags.mode == "exhaustive") sc.mode = RunMode::Exhaustive;
    else if (flags.mode == "replay") sc.mode = RunMode::Replay;
    else throw ScenarioError("unknown mode: " + flags.mode);
  }
  if (flags.seed) sc.seed = *flags.seed;
  if (flags.max_steps) sc.max_steps = *flags.max_steps;
  if (flags.depth) sc.depth_bound = *flags.depth;
  if (!flags.bugs.empty()) {
    std::string err;
    auto bugs = parse_bug_list(flags.bugs, &err);
    if (!bugs) throw ScenarioError(err);
    sc.bugs = *bugs;
  }
  if (!flags.checks.empty()) {
    std::string err;
    auto checks = parse_check_list(flags.checks, &err);
    if (!checks) throw ScenarioError(err);
    sc.checks = *checks;
  }

  RunReport report;
  std::optional<Trace> trace;

  RunOptions opts;
  opts.fail_fast = flags.fail_fast;
  if (flags.check_stride) opts.check_stride = std::max<std::uint64_t>(1, *flags.check_stride);
  opts.on_violation = [](const Violation& v) {
    std::cerr << "violation [" << v.check_name << "] step " << v.step << " "
              << v.domain << " " << v.event_name << ": " << v.witness << "\n";
  };

  switch (sc.mode) {
    case RunMode::Random: {
      auto res = run_random(sc, sc.seed, sc.max_steps, opts);
      report = std::move(res.report);
      trace = std::move(res.trace);
      break;
    }
    case RunMode::Exhaustive: {
      auto res = explore(sc, sc.depth_bound, opts);
      report = std::move(res.report);
      if (!report.violations.empty() && !report.violations.front().schedule.empty()) {
        // The reproducing schedule of the first violation, as a replayable trace.
        auto rerun = run_schedule(sc, report.violations.front().schedule);
        trace = std::move(rerun.trace);
      }
      break;
    }
    case RunMode::Replay: {
      if (flags.trace_in.empty())
        throw ScenarioError("replay mode needs --trace <recorded trace>");
      auto recorded = Trace::load(flags.trace_in);
      auto res = replay(sc, recorded);
      report = std::move(res.report);
      trace = std::move(res.trace);
      break;
    }
  }

  if (!flags.trace_out.empty()) {
    if (trace) {
      trace->seed = sc.seed;
      trace->save(flags.trace_out);
    } else {
      std::cerr << "note: no trace to write (clean exhaustive run)\n";
    }
  }
  if (!flags.report_out.empty()) {
    std::ofstream out(flags.report_out);
    if (!out) throw ScenarioError(flags.report_out + ": cannot write report");
    out << report.to_json() << "\n";
  }
  std::cout << report.to_text();

  const int status = report.exit_status();
  if (status == kExitViolation)
    std::cout << "RESULT: violations detected\n";
  else if (status == kExitBoundExhausted)
    std::cout << "RESULT: bound exhausted without violation\n";
  else
    std::cout << "RESULT: clean\n";
  return status;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concurrent quad-buddy memory pool simulator and checker"};
  app.require_subcommand(1);

  RunFlags flags;
  auto* run = app.add_subcommand("run", "Execute a scenario");
  run->add_option("--scenario", flags.scenario_path, "Scenario file (JSON)")
      ->required();
  run->add_option("--mode", flags.mode, "random|exhaustive|replay");
  run->add_option("--seed", flags.seed, "Random-mode seed");
  run->add_option("--max-steps", flags.max_steps, "Random-mode step budget");
  run->add_option("--depth", flags.depth, "Exhaustive-mode depth bound");
  run->add_option("--bugs", flags.bugs, "Comma list bug1,bug2,bug3 or none|all");
  run->add_option("--check", flags.checks,
                  "Comma list of check families or none|all");
  run->add_option("--trace", flags.trace_in, "Recorded trace for replay");
  run->add_option("--trace-out", flags.trace_out, "Write the executed trace");
  run->add_option("--report-out", flags.report_out, "Write the JSON report");
  run->add_flag("--fail-fast", flags.fail_fast, "Stop at the first violation");
  run->add_option("--check-stride", flags.check_stride,
                  "Random mode: run per-state checks every N-th step");

  CLI11_PARSE(app, argc, argv);

  try {
    return do_run(flags);
  } catch (const buddysim::ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitError;
  }
}
