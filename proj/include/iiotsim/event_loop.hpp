#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "iiotsim/time.hpp"

namespace iiotsim {

/// Deterministic discrete-event loop. Events execute in nondecreasing time
/// order; ties break by insertion sequence, so identical schedules replay
/// identically. Strictly single-threaded.
class EventLoop {
 public:
  SimTime now() const { return now_; }

  void at(SimTime t, std::function<void()> fn) {
    if (t < now_) t = now_;
    heap_.push(Ev{t, next_seq_++, std::move(fn)});
  }

  void in(Duration d, std::function<void()> fn) { at(now_ + d, std::move(fn)); }

  /// Runs every event with time <= end, then advances the clock to end.
  void run_until(SimTime end) {
    while (!heap_.empty() && heap_.top().t <= end) {
      // Copy out before pop; the handler may schedule new events.
      auto fn = std::move(const_cast<Ev&>(heap_.top()).fn);
      now_ = heap_.top().t;
      heap_.pop();
      ++executed_;
      fn();
    }
    if (now_ < end) now_ = end;
  }

  /// Drains the queue completely (tests and standalone engine use).
  void run_all() {
    while (!heap_.empty()) {
      auto fn = std::move(const_cast<Ev&>(heap_.top()).fn);
      now_ = heap_.top().t;
      heap_.pop();
      ++executed_;
      fn();
    }
  }

  bool empty() const { return heap_.empty(); }
  std::uint64_t events_executed() const { return executed_; }

 private:
  struct Ev {
    SimTime t;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Ev& o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };

  std::priority_queue<Ev, std::vector<Ev>, std::greater<>> heap_;
  SimTime now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t executed_ = 0;
};

}  // namespace iiotsim
