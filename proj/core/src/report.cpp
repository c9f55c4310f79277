#include "buddysim/report.hpp"

#include <sstream>

#include <json.hpp>

namespace buddysim {

using nlohmann::json;

std::string RunReport::to_json() const {
  json j;
  j["scenario_digest"] = scenario_digest;
  j["code_version"] = kCodeVersion;
  j["mode"] = mode;
  j["seed"] = seed;
  j["states"] = states;
  j["transitions"] = transitions;
  j["quiescent"] = quiescent;
  j["terminal"] = {{"complete", terminal_complete},
                   {"stuck", terminal_stuck},
                   {"bound_cut", bound_cut}};
  j["violations"] = json::array();
  for (const auto& v : violations) {
    json jv;
    jv["step"] = v.step;
    jv["check_name"] = v.check_name;
    jv["witness"] = v.witness;
    jv["state_digest"] = v.state_digest;
    jv["domain"] = v.domain;
    jv["event"] = v.event_name;
    jv["occurrences"] = v.occurrences;
    if (!v.schedule.empty()) jv["schedule"] = v.schedule;
    j["violations"].push_back(std::move(jv));
  }
  j["termination"] = json::array();
  for (const auto& t : termination) {
    j["termination"].push_back({{"thread", t.thread},
                                {"event", t.event_name},
                                {"verdict", to_string(t.verdict)}});
  }
  j["exit_status"] = exit_status();
  return j.dump(2);
}

std::string RunReport::to_text() const {
  std::ostringstream out;
  out << "mode " << mode << ", states " << states << ", transitions "
      << transitions;
  if (mode == "exhaustive") {
    out << "\nterminals: " << terminal_complete << " complete, "
        << terminal_stuck << " stuck, " << bound_cut
        << " cut at the depth bound\n";
  } else {
    out << (quiescent ? ", quiescent" : ", incomplete") << "\n";
  }
  if (violations.empty()) {
    out << "no violations\n";
  } else {
    out << violations.size() << " violation(s):\n";
    for (const auto& v : violations) {
      out << "  [" << v.check_name << "] step " << v.step << " " << v.domain
          << " " << v.event_name << ": " << v.witness;
      if (v.occurrences > 1) out << " (x" << v.occurrences << ")";
      if (!v.schedule.empty()) {
        out << "\n    schedule:";
        for (auto c : v.schedule) out << ' ' << c;
      }
      out << "\n";
    }
  }
  for (const auto& t : termination) {
    if (t.verdict != TerminationVerdict::Completed)
      out << "  termination: " << t.thread << " " << t.event_name << " -> "
          << to_string(t.verdict) << "\n";
  }
  return out.str();
}

} // namespace buddysim
