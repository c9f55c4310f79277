#include "buddysim/kernel_state.hpp"

namespace buddysim {

const char* to_string(ThreadState s) {
  switch (s) {
    case ThreadState::Ready: return "READY";
    case ThreadState::Running: return "RUNNING";
    case ThreadState::Blocked: return "BLOCKED";
  }
  return "?";
}

const char* to_string(RetCode r) {
  switch (r) {
    case RetCode::Ok: return "OK";
    case RetCode::NoMem: return "ENOMEM";
    case RetCode::Again: return "EAGAIN";
    case RetCode::Timeout: return "ETIMEOUT";
    case RetCode::SizeErr: return "ESIZEERR";
  }
  return "?";
}

std::string to_string(const TimeoutMode& m) {
  switch (m.kind) {
    case TimeoutMode::Kind::Forever: return "forever";
    case TimeoutMode::Kind::NoWait: return "nowait";
    case TimeoutMode::Kind::Ticks: return "ticks:" + std::to_string(m.ticks);
  }
  return "?";
}

std::string to_string(const Domain& d) {
  switch (d.kind) {
    case Domain::Kind::Scheduler: return "SCHED";
    case Domain::Kind::Timer: return "TIMER";
    case Domain::Kind::Thread: return "T" + std::to_string(d.thread);
  }
  return "?";
}

} // namespace buddysim
