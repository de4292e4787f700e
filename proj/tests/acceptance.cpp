// Acceptance suite: runs every gating criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exit code is nonzero when any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "iiotsim/coap.hpp"
#include "iiotsim/harness.hpp"
#include "iiotsim/qos.hpp"
#include "iiotsim/tdma.hpp"

using namespace iiotsim;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  criterion %2d: %s  [%s]\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
              detail.c_str());
  if (!pass) ++g_failures;
}

const CheckResult* find_check(const std::vector<CheckResult>& checks, const std::string& needle) {
  for (const auto& c : checks) {
    if (c.name.find(needle) != std::string::npos) return &c;
  }
  return nullptr;
}

bool merged(const std::vector<CheckResult>& checks, const std::vector<std::string>& needles,
            std::string& detail) {
  bool pass = true;
  for (const auto& n : needles) {
    const auto* c = find_check(checks, n);
    if (!c) {
      pass = false;
      detail += "missing check '" + n + "'; ";
      continue;
    }
    pass = pass && c->pass;
    detail += c->detail + " | ";
  }
  return pass;
}

// -- criterion 1: formula exactness ----------------------------------------

void criterion_formula() {
  RetransmitParams p{msec(2), 4, 1.5};
  const Duration span = expected_time_span(p);
  const bool pass = to_us_floor(span) == 45000 && span == msec(45);
  report(1, "expected time span (2 ms, 4, 1.5) = 45 ms exactly", pass,
         "got " + std::to_string(to_us_floor(span)) + " us");
}

// -- criterion 2: class table fidelity --------------------------------------

void criterion_class_table() {
  const DscpClass af21_expected[6] = {DscpClass::EF,  DscpClass::EF,   DscpClass::CS4,
                                      DscpClass::CS4, DscpClass::AF21, DscpClass::AF21};
  bool pass = true;
  std::string detail;
  for (int c = 0; c <= 5; ++c) {
    const DscpClass got = dscp_for_class(static_cast<SensorClass>(c));
    if (got != af21_expected[c]) pass = false;
    detail += to_string(got) + (c < 5 ? "," : "");
  }
  for (int c = 4; c <= 5; ++c) {
    if (dscp_for_class(static_cast<SensorClass>(c), DscpClass::CS4) != DscpClass::CS4) {
      pass = false;
      detail += " group3=CS4 override broken";
    }
  }
  report(2, "class table maps EF,EF,CS4,CS4,AF21,AF21 (CS4 overridable for group 3)", pass,
         detail);
}

// -- criterion 3: retransmission-span bound ---------------------------------

void criterion_span_bound() {
  std::mt19937_64 meta(20260810);
  std::uniform_int_distribution<std::int64_t> t_us(1, 200000);
  std::uniform_int_distribution<int> c(0, 12);
  std::uniform_real_distribution<double> f(1.0, 4.0);
  std::uniform_int_distribution<int> f_one(0, 3);

  int violations = 0;
  int equality_checks = 0;
  for (int i = 0; i < 1000; ++i) {
    RetransmitParams p;
    p.ack_timeout = usec(t_us(meta));
    p.max_retransmit = c(meta);
    p.random_factor = f_one(meta) == 0 ? 1.0 : f(meta);
    std::mt19937_64 rng(meta());
    const auto sched = retransmit_schedule(p, rng);
    Duration sum = 0;
    for (auto d : sched) sum += d;
    if (sum > expected_time_span(p)) ++violations;
    if (p.random_factor == 1.0) {
      ++equality_checks;
      if (sum != expected_time_span(p)) ++violations;
    }
  }
  report(3, "1000 random schedules stay within the span, exact when F=1", violations == 0,
         std::to_string(equality_checks) + " exact-equality cases, " + std::to_string(violations) +
             " violations");
}

// -- criterion 4: TDMA correctness -------------------------------------------

void criterion_tdma() {
  bool pass = true;
  std::string detail;
  for (int site = 0; site < 4; ++site) {
    std::vector<FieldDeviceCfg> devices;
    std::uint32_t seq = 1;
    for (int i = 0; i < 6; ++i) {
      devices.push_back({"t" + std::to_string(i), seq++, temperature_sensor_spec(), -1});
    }
    for (int i = 0; i < 6; ++i) {
      devices.push_back({"p" + std::to_string(i), seq++, pressure_sensor_spec(), -1});
    }
    for (int i = 0; i < 6; ++i) {
      devices.push_back({"m" + std::to_string(i), seq++, motor_sensor_spec(), -1});
    }
    build_superframe(devices, msec(10));

    for (std::size_t i = 0; i < devices.size(); ++i) {
      for (std::size_t j = i + 1; j < devices.size(); ++j) {
        if (devices[i].slot_index == devices[j].slot_index) {
          pass = false;
          detail = "slot collision at site " + std::to_string(site);
        }
      }
    }
    for (const auto& a : devices) {
      for (const auto& b : devices) {
        if (a.spec.qos_group < b.spec.qos_group && a.slot_index >= b.slot_index) {
          pass = false;
          detail = "group ordering violated at site " + std::to_string(site);
        }
      }
    }
  }
  if (pass) detail = "4 sites x 18 devices, all pairs checked";
  report(4, "superframes are collision-free and group-ordered for the 4-site population", pass,
         detail);
}

// -- criteria 5-10: sweeps ----------------------------------------------------

Scenario acceptance_scenario() {
  Scenario s;  // 4 sites, 6/6/6 sensors, T=2 ms C=4 F=1.5
  s.duration_s = 6.0;
  s.replications = 2;
  s.seed = 42;
  return s;
}

void run_sweeps() {
  const std::vector<int> levels{0, 5, 10, 20, 30};

  Scenario udp = acceptance_scenario();
  udp.background.kind = Transport::UDP_LIKE;
  udp.background.rate_bps = 11'000'000;
  udp.background.size_bytes = 1000;

  auto t0 = std::chrono::steady_clock::now();
  const auto udp_rows = sweep(udp, levels);
  auto t1 = std::chrono::steady_clock::now();
  std::printf("-- udp sweep: %lld ms\n",
              static_cast<long long>(
                  std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count()));
  const auto udp_checks = check_udp_sweep(udp_rows);

  Scenario tcp = acceptance_scenario();
  tcp.background.kind = Transport::TCP_LIKE;
  tcp.background.size_bytes = 1500;
  const auto tcp_rows = sweep(tcp, levels);
  auto t2 = std::chrono::steady_clock::now();
  std::printf("-- tcp sweep: %lld ms\n",
              static_cast<long long>(
                  std::chrono::duration_cast<std::chrono::milliseconds>(t2 - t1).count()));
  const auto tcp_checks = check_tcp_sweep(tcp_rows);

  {
    std::string detail;
    const bool pass = merged(
        udp_checks, {"qos CoAP success rate stays 1.0", "background UDP loses packets"}, detail);
    report(5, "CoAP keeps 100% success under load while background UDP drops", pass, detail);
  }
  {
    std::string detail;
    const bool pass = merged(
        udp_checks, {"CoAP latency reduction >= 20%", "no_qos CoAP latency nondecreasing"},
        detail);
    report(6, "QoS cuts CoAP latency >= 20% at levels >= 10; no_qos curve nondecreasing", pass,
           detail);
  }
  {
    std::string detail;
    const bool pass = merged(udp_checks, {"qos CoAP latency flat"}, detail);
    report(7, "qos CoAP latency at level 30 within 15% of level 10", pass, detail);
  }
  {
    std::string detail;
    const bool pass = merged(tcp_checks,
                             {"qos WS latency steady", "no_qos WS latency blows up",
                              "WS latency above CoAP latency", "WS latency reduction >= 15%"},
                             detail);
    report(8, "WebSocket behavior under TCP background (steady/blowup/ordering/reduction)", pass,
           detail);
  }
  {
    std::string detail;
    bool pass = merged(udp_checks, {"wan baseline slowest for COAP_PV"}, detail);
    pass = merged(tcp_checks, {"wan baseline slowest for WS_READING"}, detail) && pass;
    report(9, "uncontrolled WAN baseline is strictly slowest at every level", pass, detail);
  }

  // Criterion 10, conservation: every run_scenario already enforces exact
  // per-class conservation internally; verify representative runs here too.
  {
    bool pass = true;
    std::string detail;
    for (Mode mode : {Mode::QOS, Mode::NO_QOS, Mode::WAN}) {
      Scenario s = udp;
      s.set_mode(mode);
      s.background.n_flows = 10;
      const RunResult r = run_scenario(s);
      if (!r.packets.conserved()) {
        pass = false;
        detail += to_string(mode) + " packet conservation broken; ";
      }
      for (const auto& st : r.by_class) {
        if (st.sent != st.delivered + st.dropped) {
          pass = false;
          detail += to_string(mode) + "/" + to_string(st.flow_class) + " flow imbalance; ";
        }
      }
    }
    if (pass) detail = "injected = delivered + dropped, per class, in all three modes";
    report(10, "conservation holds exactly for every flow class", pass, detail);
  }

  // Criterion 10, determinism: same seed, same scenario, byte-identical CSV.
  {
    Scenario s = udp;
    s.replications = 1;
    const auto a = sweep_to_csv(sweep(s, {10}));
    const auto b = sweep_to_csv(sweep(s, {10}));
    Scenario t = tcp;
    t.replications = 1;
    const auto c = sweep_to_csv(sweep(t, {10}));
    const auto d = sweep_to_csv(sweep(t, {10}));
    const bool pass = a == b && c == d;
    report(10, "same seed reproduces byte-identical sweep CSV", pass,
           pass ? "udp and tcp reruns identical" : "rerun CSVs differ");
  }
}

}  // namespace

int main() {
  std::printf("acceptance: deterministic QoS testbed\n");
  criterion_formula();
  criterion_class_table();
  criterion_span_bound();
  criterion_tdma();
  run_sweeps();
  std::printf("%s (%d failure%s)\n", g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES PRESENT",
              g_failures, g_failures == 1 ? "" : "s");
  return g_failures == 0 ? 0 : 1;
}
