#pragma once

#include <cstdint>

namespace iiotsim {

/// Simulation clock values and durations, both in integer nanoseconds.
/// External interfaces (CSV, JSON, stats) report microseconds; keeping the
/// internal unit at ns makes per-hop transmission times on fast links exact
/// (e.g. 46 bytes at 100 Mbps = 3680 ns).
using SimTime = std::int64_t;
using Duration = std::int64_t;

constexpr Duration nsec(std::int64_t v) { return v; }
constexpr Duration usec(std::int64_t v) { return v * 1000; }
constexpr Duration msec(std::int64_t v) { return v * 1'000'000; }
constexpr Duration sec(std::int64_t v) { return v * 1'000'000'000; }

constexpr double to_us(Duration d) { return static_cast<double>(d) / 1000.0; }
constexpr std::int64_t to_us_floor(Duration d) { return d / 1000; }
constexpr double to_ms(Duration d) { return static_cast<double>(d) / 1'000'000.0; }

}  // namespace iiotsim
