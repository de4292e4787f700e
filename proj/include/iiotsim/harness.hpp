#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "iiotsim/coap.hpp"
#include "iiotsim/gateway.hpp"
#include "iiotsim/messages.hpp"
#include "iiotsim/netsim.hpp"
#include "iiotsim/qos.hpp"

namespace iiotsim {

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

enum class Mode : std::uint8_t { QOS, NO_QOS, WAN };
std::string to_string(Mode m);

struct SensorCounts {
  int motor = 6;
  int pressure = 6;
  int temperature = 6;
  int total() const { return motor + pressure + temperature; }
};

struct BackgroundSpec {
  Transport kind = Transport::UDP_LIKE;
  int n_flows = 0;                      // per site
  std::int64_t rate_bps = 11'000'000;   // UDP: per-flow constant rate
  int size_bytes = 1000;
};

struct LinkDefaults {
  std::int64_t field_bps = 1'000'000'000;   // device/gateway/source <-> site switch
  Duration field_delay = usec(100);
  std::int64_t uplink_bps = 100'000'000;    // site switch <-> core
  Duration uplink_delay = msec(1);
  std::int64_t core_bps = 1'000'000'000;    // core <-> sensor cloud
  Duration core_delay = msec(2);
};

struct WanSpec {
  Duration base_delay = msec(40);
  Duration jitter_spread = msec(40);
};

struct Scenario {
  int sites = 4;
  SensorCounts sensors_per_site;
  BackgroundSpec background;
  bool qos_enabled = true;
  bool baseline_wan = false;
  RetransmitParams coap;  // T=2 ms, C=4, F=1.5
  double duration_s = 60.0;
  std::uint64_t seed = 1;
  int replications = 5;
  DscpClass group3_dscp = DscpClass::AF21;
  bool secure = false;  // adds the fixed per-packet security overhead

  LinkDefaults links;
  WanSpec wan;
  SwitchConfig switch_cfg;
  TcpParams tcp;            // background flows
  TcpParams ws_tcp = default_ws_tcp();  // gateway sessions
  Duration slot_length = msec(10);

  // Long-lived pre-established reading sessions: provisioned window floor,
  // no slow ramp.
  static TcpParams default_ws_tcp() {
    TcpParams t;
    t.window_init = 64;
    t.window_min = 12;
    t.window_max = 64;
    t.rto_max = msec(500);
    return t;
  }

  Mode mode() const {
    if (baseline_wan) return Mode::WAN;
    return qos_enabled ? Mode::QOS : Mode::NO_QOS;
  }
  void set_mode(Mode m) {
    qos_enabled = (m == Mode::QOS);
    baseline_wan = (m == Mode::WAN);
  }
  Duration duration() const { return static_cast<Duration>(duration_s * 1e9); }
};

std::vector<std::string> validate(const Scenario& s);
Scenario scenario_from_json(const std::string& text);  // throws on schema errors
std::string scenario_to_json(const Scenario& s);

/// Schedule CSV for every site of a scenario (`schedule dump`).
std::string scenario_schedule_csv(const Scenario& s);

// ---------------------------------------------------------------------------
// Stats
// ---------------------------------------------------------------------------

struct FlowStats {
  FlowClass flow_class = FlowClass::COAP_PV;
  std::vector<Duration> samples;  // ns, in arrival order
  double mean_us = 0, p50_us = 0, p95_us = 0, p99_us = 0;
  std::uint64_t sent = 0, delivered = 0, dropped = 0;
  double success_rate = 0.0;

  void add_sample(Duration ns) { samples.push_back(ns); }
  void finalize();  // computes mean/percentiles/success_rate
};

struct RunResult {
  std::array<FlowStats, kFlowClassCount> by_class;
  PacketCounters packets;
  std::uint64_t coap_retransmissions = 0;
  std::uint64_t coap_timeouts = 0;
  std::uint64_t stray_acks = 0;
  std::uint64_t reading_order_violations = 0;  // generated<=gw<=sc failures
  std::uint64_t notifications_received = 0;    // at gateways, post endpoint dedup
  std::uint64_t readings_forwarded = 0;        // frames built by the adapters
  std::uint64_t adapter_drops = 0;             // adapter dedup + malformed
  std::uint64_t ws_buffer_drops = 0;           // session queue oldest-dropped
  std::vector<DistributeOutcome> policy_outcomes;

  FlowStats& of(FlowClass c) { return by_class[static_cast<int>(c)]; }
  const FlowStats& of(FlowClass c) const { return by_class[static_cast<int>(c)]; }
};

/// Builds the topology for one scenario, runs the event loop for the
/// configured duration, and returns per-flow-class stats. Deterministic in
/// (scenario, seed). Throws std::invalid_argument on an invalid scenario.
/// `trace` optionally receives every per-hop event.
RunResult run_scenario(const Scenario& s,
                       std::function<void(const TraceRow&)> trace = {});

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  int level = 0;
  Mode mode = Mode::QOS;
  FlowClass flow_class = FlowClass::COAP_PV;
  int replication = 0;
  double mean_us = 0, p50_us = 0, p95_us = 0, p99_us = 0;
  std::uint64_t sent = 0, delivered = 0, dropped = 0;
  double success_rate = 0;
};

inline constexpr const char* kSweepCsvHeader =
    "level,mode,flow_class,replication,mean_us,p50_us,p95_us,p99_us,sent,delivered,dropped,"
    "success_rate";

/// One row per (level, mode in {qos,no_qos,wan}, flow class, replication).
/// Replication r runs with seed base.seed + r.
std::vector<SweepRow> sweep(const Scenario& base, const std::vector<int>& levels);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> sweep_from_csv(std::istream& in);  // throws on malformed input

// ---------------------------------------------------------------------------
// Reporting and acceptance properties
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Trend/ordering properties of a sweep produced with UDP background
/// traffic: protected-class success, background saturation loss, latency
/// reduction and monotonicity, QoS flatness, and the WAN baseline ordering.
std::vector<CheckResult> check_udp_sweep(const std::vector<SweepRow>& rows);

/// Properties of a sweep produced with TCP background traffic: steady
/// QoS-side latency, the no-QoS blowup, the WebSocket-vs-CoAP ordering, the
/// WebSocket reduction, and the WAN baseline ordering.
std::vector<CheckResult> check_tcp_sweep(const std::vector<SweepRow>& rows);

/// Human-readable per-mode latency curves, reduction percentages, and
/// success rates.
std::string summarize(const std::vector<SweepRow>& rows);

}  // namespace iiotsim
