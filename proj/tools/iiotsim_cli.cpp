// Command-line front end: run single scenarios, sweep background levels,
// validate policy files, and dump TDMA schedules.

#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "iiotsim/harness.hpp"
#include "iiotsim/qos.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int cmd_run(const std::string& scenario_path, const std::string& trace_path) {
  const auto s = iiotsim::scenario_from_json(read_file(scenario_path));
  std::ofstream trace_out;
  std::function<void(const iiotsim::TraceRow&)> trace;
  if (!trace_path.empty()) {
    trace_out.open(trace_path);
    if (!trace_out) throw std::runtime_error("cannot write " + trace_path);
    trace_out << "time_us,node,event,flow_id,queue,reason\n";
    trace = [&trace_out](const iiotsim::TraceRow& row) {
      char buf[192];
      std::snprintf(buf, sizeof(buf), "%.3f,%s,%s,%llu,%d,%s\n", iiotsim::to_us(row.t),
                    row.node.c_str(), row.event, static_cast<unsigned long long>(row.flow_id),
                    row.queue, row.reason);
      trace_out << buf;
    };
  }
  const auto result = iiotsim::run_scenario(s, trace);
  std::cout << "mode=" << iiotsim::to_string(s.mode()) << " background="
            << (s.background.kind == iiotsim::Transport::UDP_LIKE ? "udp" : "tcp") << " n_flows="
            << s.background.n_flows << " duration_s=" << s.duration_s << "\n\n";
  std::printf("%-12s %12s %12s %12s %10s %10s %10s %9s\n", "class", "mean_us", "p95_us", "p99_us",
              "sent", "delivered", "dropped", "success");
  for (const auto& st : result.by_class) {
    std::printf("%-12s %12.1f %12.1f %12.1f %10llu %10llu %10llu %9.4f\n",
                iiotsim::to_string(st.flow_class).c_str(), st.mean_us, st.p95_us, st.p99_us,
                static_cast<unsigned long long>(st.sent),
                static_cast<unsigned long long>(st.delivered),
                static_cast<unsigned long long>(st.dropped), st.success_rate);
  }
  std::printf("\ncoap retransmissions=%llu timeouts=%llu stray_acks=%llu\n",
              static_cast<unsigned long long>(result.coap_retransmissions),
              static_cast<unsigned long long>(result.coap_timeouts),
              static_cast<unsigned long long>(result.stray_acks));
  return 0;
}

int cmd_sweep(const std::string& scenario_path, const std::string& levels_arg,
              const std::string& out_path, bool check) {
  const auto base = iiotsim::scenario_from_json(read_file(scenario_path));
  std::vector<int> levels;
  std::stringstream ss(levels_arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) levels.push_back(std::stoi(tok));

  const auto rows = iiotsim::sweep(base, levels);
  const std::string csv = iiotsim::sweep_to_csv(rows);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << csv;
    std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
  } else {
    std::cout << csv;
  }
  std::cout << "\n" << iiotsim::summarize(rows);

  if (check) {
    const auto results = base.background.kind == iiotsim::Transport::UDP_LIKE
                             ? iiotsim::check_udp_sweep(rows)
                             : iiotsim::check_tcp_sweep(rows);
    bool all = true;
    std::cout << "\n";
    for (const auto& c : results) {
      std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.name << "  [" << c.detail << "]\n";
      all = all && c.pass;
    }
    return all ? 0 : 1;
  }
  return 0;
}

int cmd_policy_check(const std::string& policy_path) {
  const auto policy = iiotsim::policy_from_json(read_file(policy_path));
  const auto violations = iiotsim::validate(policy);
  if (violations.empty()) {
    std::cout << "ok: policy version " << policy.version << ", " << policy.rules.size()
              << " rules\n";
    return 0;
  }
  for (const auto& v : violations) std::cout << "violation: " << v << "\n";
  return 1;
}

int cmd_schedule_dump(const std::string& scenario_path) {
  const auto s = iiotsim::scenario_from_json(read_file(scenario_path));
  std::cout << iiotsim::scenario_schedule_csv(s);
  return 0;
}

int cmd_summarize(const std::string& csv_path, bool check, const std::string& kind) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open " + csv_path);
  const auto rows = iiotsim::sweep_from_csv(in);
  std::cout << iiotsim::summarize(rows);
  if (check) {
    const auto results =
        kind == "tcp" ? iiotsim::check_tcp_sweep(rows) : iiotsim::check_udp_sweep(rows);
    bool all = true;
    for (const auto& c : results) {
      std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.name << "  [" << c.detail << "]\n";
      all = all && c.pass;
    }
    return all ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic QoS testbed for industrial IoT traffic"};
  app.require_subcommand(1);

  std::string scenario_path, out_path, levels = "0,5,10,20,30";
  std::string policy_path, csv_path, trace_path, kind = "udp";
  bool check = false;

  auto* run = app.add_subcommand("run", "run one scenario and print per-class stats");
  run->add_option("scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--trace", trace_path, "write the per-hop event trace as CSV");

  auto* sw = app.add_subcommand("sweep", "sweep background levels across qos/no_qos/wan modes");
  sw->add_option("scenario", scenario_path, "scenario JSON file")->required();
  sw->add_option("--levels", levels, "comma-separated background flow counts");
  sw->add_option("--out", out_path, "output CSV path (stdout if omitted)");
  sw->add_flag("--check", check, "evaluate acceptance properties, exit nonzero on failure");

  auto* pol = app.add_subcommand("policy", "policy file operations");
  auto* pol_check = pol->add_subcommand("check", "validate a policy JSON file");
  pol_check->add_option("file", policy_path, "policy JSON file")->required();

  auto* sched = app.add_subcommand("schedule", "TDMA schedule operations");
  auto* sched_dump = sched->add_subcommand("dump", "print the slot schedule as CSV");
  sched_dump->add_option("scenario", scenario_path, "scenario JSON file")->required();

  auto* sum = app.add_subcommand("summarize", "summarize a sweep CSV");
  sum->add_option("csv", csv_path, "sweep CSV file")->required();
  sum->add_flag("--check", check, "evaluate acceptance properties");
  sum->add_option("--kind", kind, "background kind the sweep used (udp|tcp)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario_path, trace_path);
    if (sw->parsed()) return cmd_sweep(scenario_path, levels, out_path, check);
    if (pol->parsed() && pol_check->parsed()) return cmd_policy_check(policy_path);
    if (sched->parsed() && sched_dump->parsed()) return cmd_schedule_dump(scenario_path);
    if (sum->parsed()) return cmd_summarize(csv_path, check, kind);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
