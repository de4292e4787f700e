#include "iiotsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "iiotsim/gateway.hpp"
#include "iiotsim/tdma.hpp"

namespace iiotsim {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::QOS: return "qos";
    case Mode::NO_QOS: return "no_qos";
    case Mode::WAN: return "wan";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Scenario validation / JSON
// ---------------------------------------------------------------------------

std::vector<std::string> validate(const Scenario& s) {
  std::vector<std::string> v;
  if (s.sites < 1) v.push_back("sites must be >= 1");
  if (s.sensors_per_site.motor < 0 || s.sensors_per_site.pressure < 0 ||
      s.sensors_per_site.temperature < 0) {
    v.push_back("sensor counts must be non-negative");
  }
  if (s.sensors_per_site.total() < 1) v.push_back("at least one sensor per site required");
  if (s.background.n_flows < 0) v.push_back("background.n_flows must be >= 0");
  if (s.background.rate_bps <= 0) v.push_back("background.rate_bps must be positive");
  if (s.background.size_bytes <= 0) v.push_back("background.size_bytes must be positive");
  if (!s.coap.valid()) v.push_back("coap retransmit params invalid (need T>0, 0<=C<=30, F>=1)");
  if (s.duration_s < 0) v.push_back("duration_s must be >= 0");
  if (s.replications < 1) v.push_back("replications must be >= 1");
  if (s.qos_enabled && s.baseline_wan) v.push_back("baseline_wan implies no QoS");
  if (s.group3_dscp != DscpClass::CS4 && s.group3_dscp != DscpClass::AF21 &&
      s.group3_dscp != DscpClass::AF22 && s.group3_dscp != DscpClass::AF23) {
    v.push_back("group3_dscp must be CS4 or AF21-23");
  }
  if (s.slot_length <= 0) v.push_back("slot_length must be positive");
  return v;
}

Scenario scenario_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  if (j.value("v", 0) != 1) throw std::runtime_error("unsupported scenario schema version");
  Scenario s;
  s.sites = j.value("sites", s.sites);
  if (j.contains("sensors_per_site")) {
    const auto& sp = j["sensors_per_site"];
    s.sensors_per_site.motor = sp.value("motor", s.sensors_per_site.motor);
    s.sensors_per_site.pressure = sp.value("pressure", s.sensors_per_site.pressure);
    s.sensors_per_site.temperature = sp.value("temperature", s.sensors_per_site.temperature);
  }
  if (j.contains("background")) {
    const auto& bg = j["background"];
    const std::string kind = bg.value("kind", std::string("udp"));
    if (kind == "udp") {
      s.background.kind = Transport::UDP_LIKE;
    } else if (kind == "tcp") {
      s.background.kind = Transport::TCP_LIKE;
    } else {
      throw std::runtime_error("background.kind must be udp or tcp");
    }
    s.background.n_flows = bg.value("n_flows", s.background.n_flows);
    s.background.rate_bps = bg.value("rate_bps", s.background.rate_bps);
    s.background.size_bytes = bg.value("size_bytes", s.background.size_bytes);
  }
  s.qos_enabled = j.value("qos_enabled", s.qos_enabled);
  s.baseline_wan = j.value("baseline_wan", s.baseline_wan);
  if (j.contains("coap")) {
    const auto& c = j["coap"];
    s.coap.ack_timeout = static_cast<Duration>(c.value("T_ms", 2.0) * 1e6);
    s.coap.max_retransmit = c.value("C", 4);
    s.coap.random_factor = c.value("F", 1.5);
  }
  s.duration_s = j.value("duration_s", s.duration_s);
  s.seed = j.value("seed", s.seed);
  s.replications = j.value("replications", s.replications);
  if (j.contains("group3_dscp")) {
    auto d = dscp_from_string(j["group3_dscp"].get<std::string>());
    if (!d) throw std::runtime_error("bad group3_dscp");
    s.group3_dscp = *d;
  }
  s.secure = j.value("secure", false);
  if (j.contains("links")) {
    const auto& l = j["links"];
    s.links.field_bps = l.value("field_bps", s.links.field_bps);
    s.links.field_delay = static_cast<Duration>(l.value("field_delay_ms", to_ms(s.links.field_delay)) * 1e6);
    s.links.uplink_bps = l.value("uplink_bps", s.links.uplink_bps);
    s.links.uplink_delay = static_cast<Duration>(l.value("uplink_delay_ms", to_ms(s.links.uplink_delay)) * 1e6);
    s.links.core_bps = l.value("core_bps", s.links.core_bps);
    s.links.core_delay = static_cast<Duration>(l.value("core_delay_ms", to_ms(s.links.core_delay)) * 1e6);
  }
  if (j.contains("wan")) {
    const auto& w = j["wan"];
    s.wan.base_delay = static_cast<Duration>(w.value("base_delay_ms", to_ms(s.wan.base_delay)) * 1e6);
    s.wan.jitter_spread = static_cast<Duration>(w.value("jitter_ms", to_ms(s.wan.jitter_spread)) * 1e6);
  }
  if (j.contains("switch")) {
    const auto& sw = j["switch"];
    s.switch_cfg.depth_limit = sw.value("depth_limit", s.switch_cfg.depth_limit);
    s.switch_cfg.qos_queue_rate_bps = sw.value("queue_rate_bps", s.switch_cfg.qos_queue_rate_bps);
  }
  if (j.contains("tcp")) {
    const auto& t = j["tcp"];
    s.tcp.window_init = t.value("window_init", s.tcp.window_init);
    s.tcp.window_max = t.value("window_max", s.tcp.window_max);
    s.tcp.packet_size = t.value("packet_size", s.tcp.packet_size);
  }
  s.slot_length = static_cast<Duration>(j.value("slot_length_ms", to_ms(s.slot_length)) * 1e6);
  return s;
}

std::string scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  j["v"] = 1;
  j["sites"] = s.sites;
  j["sensors_per_site"] = {{"motor", s.sensors_per_site.motor},
                           {"pressure", s.sensors_per_site.pressure},
                           {"temperature", s.sensors_per_site.temperature}};
  j["background"] = {{"kind", s.background.kind == Transport::UDP_LIKE ? "udp" : "tcp"},
                     {"n_flows", s.background.n_flows},
                     {"rate_bps", s.background.rate_bps},
                     {"size_bytes", s.background.size_bytes}};
  j["qos_enabled"] = s.qos_enabled;
  j["baseline_wan"] = s.baseline_wan;
  j["coap"] = {{"T_ms", to_ms(s.coap.ack_timeout)},
               {"C", s.coap.max_retransmit},
               {"F", s.coap.random_factor}};
  j["duration_s"] = s.duration_s;
  j["seed"] = s.seed;
  j["replications"] = s.replications;
  j["group3_dscp"] = to_string(s.group3_dscp);
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Device population
// ---------------------------------------------------------------------------

namespace {

struct DeviceBlueprint {
  std::string device_id;
  std::uint32_t seq_number;
  SensorSpec spec;
};

std::vector<DeviceBlueprint> site_devices(const Scenario& s, int site) {
  std::vector<DeviceBlueprint> out;
  std::uint32_t seq = 1;
  const std::string prefix = "s" + std::to_string(site) + "-";
  for (int i = 1; i <= s.sensors_per_site.temperature; ++i) {
    out.push_back({prefix + "temp" + std::to_string(i), seq++, temperature_sensor_spec()});
  }
  for (int i = 1; i <= s.sensors_per_site.pressure; ++i) {
    out.push_back({prefix + "press" + std::to_string(i), seq++, pressure_sensor_spec()});
  }
  for (int i = 1; i <= s.sensors_per_site.motor; ++i) {
    out.push_back({prefix + "motor" + std::to_string(i), seq++, motor_sensor_spec()});
  }
  return out;
}

}  // namespace

std::string scenario_schedule_csv(const Scenario& s) {
  std::string out;
  for (int site = 0; site < s.sites; ++site) {
    std::vector<FieldDeviceCfg> devices;
    for (const auto& b : site_devices(s, site)) {
      devices.push_back({b.device_id, b.seq_number, b.spec, -1});
    }
    const Superframe frame = build_superframe(devices, s.slot_length);
    std::string csv = schedule_csv(frame, devices);
    if (site > 0) csv.erase(0, csv.find('\n') + 1);  // keep one header
    out += csv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// FlowStats
// ---------------------------------------------------------------------------

void FlowStats::finalize() {
  success_rate = sent > 0 ? static_cast<double>(delivered) / static_cast<double>(sent) : 0.0;
  if (samples.empty()) {
    mean_us = p50_us = p95_us = p99_us = 0.0;
    return;
  }
  std::vector<Duration> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  long double sum = 0;
  for (Duration d : sorted) sum += static_cast<long double>(d);
  mean_us = static_cast<double>(sum / static_cast<long double>(sorted.size())) / 1000.0;
  auto pick = [&](double q) {
    const auto n = static_cast<std::int64_t>(sorted.size());
    auto idx = static_cast<std::int64_t>(std::ceil(q * static_cast<double>(n))) - 1;
    idx = std::clamp<std::int64_t>(idx, 0, n - 1);
    return to_us(sorted[static_cast<std::size_t>(idx)]);
  };
  p50_us = pick(0.50);
  p95_us = pick(0.95);
  p99_us = pick(0.99);
}

// ---------------------------------------------------------------------------
// Simulation world
// ---------------------------------------------------------------------------

namespace {

constexpr std::int64_t kSecurityOverheadBytes = 29;

struct FdSim {
  NodeId node = kNoNode;
  int site = 0;
  std::uint32_t device_index = 0;
  FieldDeviceCfg cfg;
  Duration slot_offset = 0;
  std::unique_ptr<CoapEndpoint> coap;
  std::unique_ptr<PvWalk> walk;
};

struct SiteSim {
  NodeId switch_node = kNoNode;
  NodeId gw_node = kNoNode;
  NodeId bg_node = kNoNode;
  std::unique_ptr<Gateway> gw;
  std::vector<std::size_t> fd_index;  // into SimWorld::fds_
  std::vector<std::unique_ptr<UdpBackgroundSource>> udp_flows;
  std::vector<std::unique_ptr<TcpLikeSender>> tcp_flows;
  std::unique_ptr<TcpLikeSender> ws_sender;
};

class SimWorld {
 public:
  SimWorld(const Scenario& s, std::function<void(const TraceRow&)> trace)
      : scenario_(s), net_(loop_, s.seed, s.switch_cfg), bg_rng_(s.seed ^ 0xabcdef1234567890ULL) {
    end_ = s.duration();
    publish_cutoff_ = end_ - (msec(500) + expected_time_span(s.coap));
    if (publish_cutoff_ < 0) publish_cutoff_ = 0;
    if (trace) net_.set_trace(std::move(trace));
    build();
  }

  RunResult run() {
    schedule_startup();
    loop_.run_until(end_);
    net_.settle_end_of_run();
    return collect();
  }

 private:
  // -- construction ---------------------------------------------------------

  void build() {
    core_ = net_.add_switch("core");
    sc_node_ = net_.add_host("sc");
    if (scenario_.baseline_wan) {
      net_.add_link(wan_path(core_, sc_node_, scenario_.links.core_bps, scenario_.wan.base_delay,
                             scenario_.wan.jitter_spread));
    } else {
      net_.add_link({core_, sc_node_, scenario_.links.core_bps, scenario_.links.core_delay});
    }

    for (int i = 0; i < scenario_.sites; ++i) add_site(i);
    rx_dscp_.assign(net_.node_count(), DscpClass::BE);
    rx_class_.assign(net_.node_count(), FlowClass::COAP_PV);
    net_.finalize();

    wire_sensor_cloud();
    for (auto& site : sites_) wire_site(*site);
  }

  void add_site(int index) {
    auto site = std::make_unique<SiteSim>();
    const std::string sid = "s" + std::to_string(index);
    site->switch_node = net_.add_switch(sid + "-ovs");
    site->gw_node = net_.add_host(sid + "-gw");
    site->bg_node = net_.add_host(sid + "-bg");
    const auto& L = scenario_.links;
    net_.add_link({site->gw_node, site->switch_node, L.field_bps, L.field_delay});
    net_.add_link({site->bg_node, site->switch_node, L.field_bps, L.field_delay});
    net_.add_link({site->switch_node, core_, L.uplink_bps, L.uplink_delay});

    std::vector<FieldDeviceCfg> cfgs;
    for (const auto& b : site_devices(scenario_, index)) {
      cfgs.push_back({b.device_id, b.seq_number, b.spec, -1});
    }
    build_superframe(cfgs, scenario_.slot_length);  // writes slot_index back

    for (const auto& cfg : cfgs) {
      auto fd = std::make_unique<FdSim>();
      fd->site = index;
      fd->device_index = static_cast<std::uint32_t>(fds_.size());
      fd->cfg = cfg;
      fd->slot_offset = cfg.slot_index * scenario_.slot_length;
      fd->node = net_.add_host(cfg.device_id);
      net_.add_link({fd->node, site->switch_node, L.field_bps, L.field_delay});
      fd->walk = std::make_unique<PvWalk>(cfg.device_id, cfg.spec.kind, scenario_.seed);
      site->fd_index.push_back(fds_.size());
      fds_.push_back(std::move(fd));
    }
    sites_.push_back(std::move(site));
  }

  // -- wiring ---------------------------------------------------------------

  void inject_coap(NodeId self, const CoapMessage& msg, NodeId dst, DscpClass mark,
                   FlowClass cls) {
    NetPacket pkt;
    pkt.src = self;
    pkt.dst = dst;
    pkt.transport = Transport::UDP_LIKE;
    pkt.coap = std::make_shared<const CoapMessage>(msg);
    pkt.size_bytes = static_cast<std::int64_t>(encoded_size(msg)) +
                     (scenario_.secure ? kSecurityOverheadBytes : 0);
    if (msg.kind == CoapKind::ACK || msg.kind == CoapKind::RST) {
      pkt.dscp = rx_dscp_[self];
      pkt.flow_class = rx_class_[self];
    } else {
      pkt.dscp = mark;
      pkt.flow_class = cls;
    }
    pkt.flow_id = static_cast<std::uint64_t>(self);
    net_.inject(std::move(pkt));
  }

  void deliver_coap(CoapEndpoint& ep, const NetPacket& pkt) {
    rx_dscp_[ep.id()] = pkt.dscp;
    rx_class_[ep.id()] = pkt.flow_class;
    ep.handle_inbound(*pkt.coap, pkt.src);
  }

  static FlowClass coap_class_of(const CoapMessage& msg) {
    if (msg.uri_path == kPolicyResource || msg.uri_path == kCommandResource) {
      return FlowClass::CONTROL;
    }
    return FlowClass::COAP_PV;
  }

  void wire_site(SiteSim& site) {
    // Gateway endpoint: registration GETs carry the observed device's class
    // mark; command PUTs carry the control mark.
    site.gw = std::make_unique<Gateway>(loop_, site.gw_node, net_.node_name(site.gw_node),
                                        scenario_.coap, scenario_.seed);
    Gateway* gw = site.gw.get();
    gw->coap().set_transmit([this, gw](const CoapMessage& msg, NodeId dst) {
      DscpClass mark = DscpClass::BE;
      FlowClass cls = coap_class_of(msg);
      if (cls == FlowClass::CONTROL) {
        mark = gw->control_mark();
      } else if (auto it = device_class_by_node_.find(dst); it != device_class_by_node_.end()) {
        mark = gw->mark_for_class(it->second);
      }
      inject_coap(gw->node(), msg, dst, mark, cls);
    });
    gw->set_policy_hook([this](const CoapMessage& msg) {
      auto& st = result_.of(FlowClass::CONTROL);
      st.delivered++;
      st.add_sample(loop_.now() - msg.created_at);
    });
    gw->set_reading_hook([this](const TimestampedReading& reading) {
      if (reading.pv.generated_at > reading.gw_arrival) ++result_.reading_order_violations;
      if (scenario_.baseline_wan) return;  // measured observer is the cloud
      auto& st = result_.of(FlowClass::COAP_PV);
      st.delivered++;
      st.add_sample(reading.gw_arrival - reading.pv.generated_at);
    });

    net_.set_receiver(site.gw_node, [this, gw](NetPacket&& pkt) {
      if (pkt.coap) {
        deliver_coap(gw->coap(), pkt);
      } else if (pkt.transport == Transport::TCP_LIKE && pkt.tcp.is_ack) {
        auto it = senders_.find(pkt.tcp.conn_id);
        if (it != senders_.end()) it->second->on_ack(pkt.tcp.seq);
      }
    });

    // Field devices: notifications marked per the site's installed policy.
    for (std::size_t idx : site.fd_index) {
      FdSim& fd = *fds_[idx];
      device_class_by_node_[fd.node] = fd.cfg.spec.isa_class;
      fd.coap = std::make_unique<CoapEndpoint>(loop_, fd.node, scenario_.coap,
                                               scenario_.seed + fd.device_index + 17);
      fd.coap->serve_resource(kPvResource);
      fd.coap->serve_resource(kCommandResource, [this, &fd](const CoapMessage& msg, NodeId) {
        apply_device_command(fd, msg);
      });
      FdSim* fdp = &fd;
      Gateway* site_gw = gw;
      fd.coap->set_transmit([this, fdp, site_gw](const CoapMessage& msg, NodeId dst) {
        const DscpClass mark = site_gw->mark_for_class(fdp->cfg.spec.isa_class);
        inject_coap(fdp->node, msg, dst, mark, coap_class_of(msg));
      });
      net_.set_receiver(fd.node, [this, fdp](NetPacket&& pkt) {
        if (pkt.coap) deliver_coap(*fdp->coap, pkt);
      });
    }

    // WebSocket session toward the cloud: one reliable windowed connection.
    const auto conn_id = next_conn_id_++;
    site.ws_sender = std::make_unique<TcpLikeSender>(loop_, net_, site.gw_node, sc_node_,
                                                     scenario_.ws_tcp, conn_id,
                                                     FlowClass::WS_READING);
    site.ws_sender->set_dscp_fn([](const WsFrame* f) { return f ? f->mark : DscpClass::BE; });
    senders_[conn_id] = site.ws_sender.get();
    TcpLikeSender* ws = site.ws_sender.get();
    gw->set_frame_sink([this, ws](int, std::shared_ptr<const WsFrame> frame) {
      auto& st = result_.of(FlowClass::WS_READING);
      st.sent++;
      ws->submit_frame(std::move(frame), Gateway::kWsBufferLimit, &ws_queue_drops_);
    });
    gw->open_ws_session();

    // Background flows, site-local source toward the cloud.
    for (int f = 0; f < scenario_.background.n_flows; ++f) {
      const auto flow_id = next_conn_id_++;
      if (scenario_.background.kind == Transport::UDP_LIKE) {
        site.udp_flows.push_back(std::make_unique<UdpBackgroundSource>(
            loop_, net_, site.bg_node, sc_node_,
            UdpFlowParams{scenario_.background.rate_bps, scenario_.background.size_bytes}, flow_id,
            scenario_.seed));
      } else {
        TcpParams tp = scenario_.tcp;
        tp.packet_size = scenario_.background.size_bytes;
        auto flow = std::make_unique<TcpLikeSender>(loop_, net_, site.bg_node, sc_node_, tp,
                                                    flow_id, FlowClass::BACKGROUND);
        flow->set_infinite_backlog(true);
        senders_[flow_id] = flow.get();
        site.tcp_flows.push_back(std::move(flow));
      }
    }
    net_.set_receiver(site.bg_node, [this](NetPacket&& pkt) {
      if (pkt.transport == Transport::TCP_LIKE && pkt.tcp.is_ack) {
        auto it = senders_.find(pkt.tcp.conn_id);
        if (it != senders_.end()) it->second->on_ack(pkt.tcp.seq);
      }
    });
  }

  void wire_sensor_cloud() {
    sc_coap_ = std::make_unique<CoapEndpoint>(loop_, sc_node_, scenario_.coap, scenario_.seed + 3);
    sc_coap_->set_transmit([this](const CoapMessage& msg, NodeId dst) {
      // Policy distribution rides the network-control class; the WAN-mode
      // observation plane is unmarked (no controller on the classic path).
      const FlowClass cls = coap_class_of(msg);
      const DscpClass mark = cls == FlowClass::CONTROL ? DscpClass::CS6 : DscpClass::BE;
      inject_coap(sc_node_, msg, dst, mark, cls);
    });

    sc_tcp_rx_ = std::make_unique<TcpLikeReceiver>(net_, sc_node_, [this](const NetPacket& pkt) {
      if (pkt.ws) {
        auto& st = result_.of(FlowClass::WS_READING);
        st.delivered++;
        st.add_sample(loop_.now() - pkt.ws->created_at);
        note_sc_reading(*pkt.ws);
      } else {
        auto& st = result_.of(FlowClass::BACKGROUND);
        st.delivered++;
        st.add_sample(loop_.now() - pkt.created_at);
      }
    });

    net_.set_receiver(sc_node_, [this](NetPacket&& pkt) {
      if (pkt.coap) {
        deliver_coap(*sc_coap_, pkt);
      } else if (pkt.transport == Transport::TCP_LIKE && !pkt.tcp.is_ack) {
        sc_tcp_rx_->on_data(pkt);
      } else if (pkt.transport == Transport::UDP_LIKE) {
        auto& st = result_.of(FlowClass::BACKGROUND);
        st.delivered++;
        st.add_sample(loop_.now() - pkt.created_at);
      }
    });
  }

  void note_sc_reading(const WsFrame& frame) {
    // Timestamp chain check: generated_at <= gw_arrival <= sc_arrival.
    try {
      auto j = nlohmann::json::parse(frame.payload);
      if (!j.contains("generated_at")) return;
      const auto gen = j["generated_at"].get<std::int64_t>();
      const auto gw = j["gw_arrival"].get<std::int64_t>();
      const auto sc = to_us_floor(loop_.now());
      if (!(gen <= gw && gw <= sc)) ++result_.reading_order_violations;
    } catch (const nlohmann::json::exception&) {
      // error frames and other non-reading payloads
    }
  }

  void apply_device_command(FdSim& fd, const CoapMessage& msg) {
    try {
      auto j = nlohmann::json::parse(std::string(msg.payload.begin(), msg.payload.end()));
      if (j.value("command", "") == "set_update_interval") {
        const double ms = j["args"].value("interval_ms", to_ms(fd.cfg.spec.update_interval));
        fd.cfg.spec.update_interval = static_cast<Duration>(ms * 1e6);
      }
    } catch (const nlohmann::json::exception&) {
    }
  }

  // -- startup and publishing -------------------------------------------------

  void schedule_startup() {
    if (end_ <= 0) return;

    if (scenario_.qos_enabled) {
      const QoSPolicy policy = default_policy(1, scenario_.group3_dscp);
      net_.install_policy(core_, policy);
      for (auto& site : sites_) net_.install_policy(site->switch_node, policy);
      loop_.at(0, [this, policy] {
        std::vector<NodeId> gws;
        for (auto& site : sites_) gws.push_back(site->gw_node);
        result_.of(FlowClass::CONTROL).sent += gws.size();
        distribute_policy(*sc_coap_, gws, policy, [this](std::vector<DistributeOutcome> out) {
          result_.policy_outcomes = std::move(out);
          establish_all();
        });
      });
    } else {
      loop_.at(0, [this] { establish_all(); });
    }

    // Background load runs for the whole window.
    for (auto& site : sites_) {
      for (auto& f : site->udp_flows) f->start(end_);
      for (auto& f : site->tcp_flows) {
        std::uniform_real_distribution<double> u(0.0, 200e6);  // 0..200 ms
        const auto phase = static_cast<Duration>(u(bg_rng_));
        TcpLikeSender* fp = f.get();
        loop_.at(phase, [this, fp] { fp->start(end_); });
      }
      site->ws_sender->start(end_);
    }
  }

  void establish_all() {
    for (auto& site : sites_) {
      std::vector<RemoteDevice> devices;
      for (std::size_t idx : site->fd_index) {
        const FdSim& fd = *fds_[idx];
        devices.push_back({fd.node, fd.cfg.device_id, fd.device_index, fd.cfg.spec.isa_class});
      }
      site->gw->establish_observations(devices);
    }
    if (scenario_.baseline_wan) {
      for (auto& fd : fds_) {
        FdSim* fdp = fd.get();
        sc_coap_->observe_remote(fdp->node, kPvResource,
                                 [this](const CoapMessage& msg, NodeId) {
                                   DecodedPv pv;
                                   if (!decode_pv_payload(msg.payload, pv)) return;
                                   auto& st = result_.of(FlowClass::COAP_PV);
                                   st.delivered++;
                                   st.add_sample(loop_.now() - pv.generated_at);
                                 });
      }
    }
    start_publishing();
    arm_reobserve();
  }

  void arm_reobserve() {
    // Keep-alive: observations deactivated by notification timeouts are
    // re-registered so the measurement plane survives heavy congestion.
    loop_.in(sec(2), [this] {
      if (loop_.now() >= publish_cutoff_) return;
      establish_all();
    });
  }

  void start_publishing() {
    if (publishing_started_) return;
    publishing_started_ = true;
    for (std::size_t i = 0; i < fds_.size(); ++i) {
      schedule_publish(i, next_publish_time(fds_[i]->slot_offset,
                                            fds_[i]->cfg.spec.update_interval, loop_.now()));
    }
  }

  void schedule_publish(std::size_t fd_idx, SimTime at) {
    if (at >= publish_cutoff_) return;
    loop_.at(at, [this, fd_idx] { publish(fd_idx); });
  }

  void publish(std::size_t fd_idx) {
    FdSim& fd = *fds_[fd_idx];
    const NodeId measured = scenario_.baseline_wan ? sc_node_ : sites_[fd.site]->gw_node;
    int toward_measured = 0;
    for (const auto& obs : fd.coap->observations(kPvResource)) {
      if (obs.active && obs.observer == measured) ++toward_measured;
    }
    if (fd.coap->active_observation_count(kPvResource) > 0) {
      const ProcessValue pv = fd.walk->generate(loop_.now());
      result_.of(FlowClass::COAP_PV).sent += toward_measured;
      fd.coap->notify_observers(kPvResource, encode_pv_payload(fd.device_index, pv));
    }
    schedule_publish(fd_idx,
                     next_publish_time(fd.slot_offset, fd.cfg.spec.update_interval, loop_.now() + 1));
  }

  // -- collection -------------------------------------------------------------

  RunResult collect() {
    auto& ws = result_.of(FlowClass::WS_READING);
    ws.dropped = ws.sent - ws.delivered;

    auto& pvst = result_.of(FlowClass::COAP_PV);
    pvst.dropped = pvst.sent - pvst.delivered;

    auto& ctrl = result_.of(FlowClass::CONTROL);
    ctrl.dropped = ctrl.sent - ctrl.delivered;

    auto& bg = result_.of(FlowClass::BACKGROUND);
    for (auto& site : sites_) {
      for (auto& f : site->udp_flows) bg.sent += f->packets_sent();
      for (auto& f : site->tcp_flows) bg.sent += f->stats().unique_sent;
    }
    bg.dropped = bg.sent - bg.delivered;

    for (int c = 0; c < kFlowClassCount; ++c) {
      result_.by_class[c].flow_class = static_cast<FlowClass>(c);
      result_.by_class[c].finalize();
    }

    for (auto& fd : fds_) {
      result_.coap_retransmissions += fd->coap->counters().retransmissions;
      result_.coap_timeouts += fd->coap->counters().timeouts;
      result_.stray_acks += fd->coap->counters().stray_acks;
    }
    for (auto& site : sites_) {
      const auto& c = site->gw->coap().counters();
      result_.coap_retransmissions += c.retransmissions;
      result_.coap_timeouts += c.timeouts;
      result_.stray_acks += c.stray_acks;
      const auto& g = site->gw->counters();
      result_.notifications_received += g.notifications_received;
      result_.readings_forwarded += g.readings_forwarded;
      result_.adapter_drops += g.adapter_dedup_drops + g.adapter_malformed_drops;
      result_.ws_buffer_drops += g.buffer_drops;
    }
    result_.ws_buffer_drops += ws_queue_drops_;
    result_.packets = net_.counters();

    if (!result_.packets.conserved()) {
      throw std::logic_error("packet conservation violated");
    }
    for (const auto& st : result_.by_class) {
      if (st.sent != st.delivered + st.dropped) {
        throw std::logic_error("flow conservation violated for " + to_string(st.flow_class));
      }
    }
    return std::move(result_);
  }

  Scenario scenario_;
  EventLoop loop_;
  Network net_;
  std::mt19937_64 bg_rng_;
  SimTime end_ = 0;
  SimTime publish_cutoff_ = 0;

  NodeId core_ = kNoNode;
  NodeId sc_node_ = kNoNode;
  std::vector<std::unique_ptr<SiteSim>> sites_;
  std::vector<std::unique_ptr<FdSim>> fds_;
  std::unique_ptr<CoapEndpoint> sc_coap_;
  std::unique_ptr<TcpLikeReceiver> sc_tcp_rx_;
  std::map<std::uint64_t, TcpLikeSender*> senders_;
  std::map<NodeId, SensorClass> device_class_by_node_;
  std::uint64_t next_conn_id_ = 1;
  std::uint64_t ws_queue_drops_ = 0;
  std::vector<DscpClass> rx_dscp_;
  std::vector<FlowClass> rx_class_;
  bool publishing_started_ = false;

  RunResult result_;
};

}  // namespace

RunResult run_scenario(const Scenario& s, std::function<void(const TraceRow&)> trace) {
  const auto violations = validate(s);
  if (!violations.empty()) {
    std::string what = "invalid scenario:";
    for (const auto& v : violations) what += " " + v + ";";
    throw std::invalid_argument(what);
  }
  if (s.duration_s == 0) {
    RunResult zero;
    for (int c = 0; c < kFlowClassCount; ++c) {
      zero.by_class[c].flow_class = static_cast<FlowClass>(c);
      zero.by_class[c].finalize();
    }
    return zero;
  }
  SimWorld world(s, std::move(trace));
  return world.run();
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

std::vector<SweepRow> sweep(const Scenario& base, const std::vector<int>& levels) {
  if (levels.empty()) throw std::invalid_argument("sweep requires at least one level");
  std::vector<SweepRow> rows;
  for (int level : levels) {
    for (Mode mode : {Mode::QOS, Mode::NO_QOS, Mode::WAN}) {
      for (int rep = 0; rep < base.replications; ++rep) {
        Scenario s = base;
        s.set_mode(mode);
        s.background.n_flows = level;
        s.seed = base.seed + static_cast<std::uint64_t>(rep);
        s.replications = 1;
        RunResult r = run_scenario(s);
        for (int c = 0; c < kFlowClassCount; ++c) {
          const FlowStats& st = r.by_class[c];
          rows.push_back({level, mode, static_cast<FlowClass>(c), rep, st.mean_us, st.p50_us,
                          st.p95_us, st.p99_us, st.sent, st.delivered, st.dropped,
                          st.success_rate});
        }
      }
    }
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out = kSweepCsvHeader;
  out += '\n';
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%s,%d,%.3f,%.3f,%.3f,%.3f,%llu,%llu,%llu,%.6f\n",
                  r.level, to_string(r.mode).c_str(), to_string(r.flow_class).c_str(),
                  r.replication, r.mean_us, r.p50_us, r.p95_us, r.p99_us,
                  static_cast<unsigned long long>(r.sent),
                  static_cast<unsigned long long>(r.delivered),
                  static_cast<unsigned long long>(r.dropped), r.success_rate);
    out += buf;
  }
  return out;
}

namespace {

Mode mode_from_string(const std::string& s) {
  if (s == "qos") return Mode::QOS;
  if (s == "no_qos") return Mode::NO_QOS;
  if (s == "wan") return Mode::WAN;
  throw std::runtime_error("bad mode: " + s);
}

FlowClass class_from_string(const std::string& s) {
  if (s == "COAP_PV") return FlowClass::COAP_PV;
  if (s == "WS_READING") return FlowClass::WS_READING;
  if (s == "CONTROL") return FlowClass::CONTROL;
  if (s == "BACKGROUND") return FlowClass::BACKGROUND;
  throw std::runtime_error("bad flow class: " + s);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<SweepRow> sweep_from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv");
  if (line != kSweepCsvHeader) throw std::runtime_error("unexpected csv header");
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 12) throw std::runtime_error("malformed csv row: " + line);
    SweepRow r;
    r.level = std::stoi(f[0]);
    r.mode = mode_from_string(f[1]);
    r.flow_class = class_from_string(f[2]);
    r.replication = std::stoi(f[3]);
    r.mean_us = std::stod(f[4]);
    r.p50_us = std::stod(f[5]);
    r.p95_us = std::stod(f[6]);
    r.p99_us = std::stod(f[7]);
    r.sent = std::stoull(f[8]);
    r.delivered = std::stoull(f[9]);
    r.dropped = std::stoull(f[10]);
    r.success_rate = std::stod(f[11]);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Checks and reporting
// ---------------------------------------------------------------------------

namespace {

struct RowView {
  const std::vector<SweepRow>* rows;

  std::vector<int> levels() const {
    std::vector<int> out;
    for (const auto& r : *rows) {
      if (std::find(out.begin(), out.end(), r.level) == out.end()) out.push_back(r.level);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  // Mean over replications of the per-replication mean.
  double mean(int level, Mode mode, FlowClass cls, bool* found = nullptr) const {
    double sum = 0;
    int n = 0;
    for (const auto& r : *rows) {
      if (r.level == level && r.mode == mode && r.flow_class == cls) {
        sum += r.mean_us;
        ++n;
      }
    }
    if (found) *found = n > 0;
    return n > 0 ? sum / n : 0.0;
  }

  bool all_success_one(int level, Mode mode, FlowClass cls) const {
    bool any = false;
    for (const auto& r : *rows) {
      if (r.level == level && r.mode == mode && r.flow_class == cls) {
        any = true;
        if (r.success_rate != 1.0) return false;
      }
    }
    return any;
  }

  std::uint64_t total_dropped(int level, Mode mode, FlowClass cls) const {
    std::uint64_t n = 0;
    for (const auto& r : *rows) {
      if (r.level == level && r.mode == mode && r.flow_class == cls) n += r.dropped;
    }
    return n;
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

// The uncontrolled baseline is compared on the flow class the sweep
// measures: confirmable traffic under UDP load, reading frames under TCP
// load.
void check_wan_ordering(const RowView& v, FlowClass cls, std::vector<CheckResult>& out) {
  bool pass = true;
  std::string detail;
  for (int level : v.levels()) {
    const double wan = v.mean(level, Mode::WAN, cls);
    const double qos = v.mean(level, Mode::QOS, cls);
    const double noq = v.mean(level, Mode::NO_QOS, cls);
    if (!(wan > qos && wan > noq)) {
      pass = false;
      detail += "level " + std::to_string(level) + ": wan=" + fmt(wan) + " qos=" + fmt(qos) +
                " no_qos=" + fmt(noq) + "; ";
    }
  }
  out.push_back({"wan baseline slowest for " + to_string(cls), pass,
                 pass ? "wan mean above both controlled modes at every level" : detail});
}

}  // namespace

std::vector<CheckResult> check_udp_sweep(const std::vector<SweepRow>& rows) {
  RowView v{&rows};
  std::vector<CheckResult> out;
  const auto levels = v.levels();

  {
    bool pass = true;
    std::string detail;
    for (int level : levels) {
      if (!v.all_success_one(level, Mode::QOS, FlowClass::COAP_PV)) {
        pass = false;
        detail += "level " + std::to_string(level) + " below 1.0; ";
      }
    }
    out.push_back({"qos CoAP success rate stays 1.0", pass, pass ? "all levels at 1.0" : detail});
  }
  {
    bool pass = true;
    std::string detail;
    for (int level : levels) {
      if (level < 20) continue;
      const auto dropped = v.total_dropped(level, Mode::QOS, FlowClass::BACKGROUND);
      if (dropped == 0) {
        pass = false;
        detail += "level " + std::to_string(level) + " saw no background loss; ";
      }
    }
    out.push_back({"background UDP loses packets at levels >= 20", pass,
                   pass ? "saturated levels drop background traffic" : detail});
  }
  {
    bool pass = true;
    std::string detail;
    for (int level : levels) {
      if (level < 10) continue;
      const double qos = v.mean(level, Mode::QOS, FlowClass::COAP_PV);
      const double noq = v.mean(level, Mode::NO_QOS, FlowClass::COAP_PV);
      const double reduction = noq > 0 ? (noq - qos) / noq : 0.0;
      detail += "L" + std::to_string(level) + "=" + fmt(reduction * 100) + "% ";
      if (reduction < 0.20) pass = false;
    }
    out.push_back({"CoAP latency reduction >= 20% at levels >= 10", pass, detail});
  }
  {
    bool pass = true;
    std::string detail;
    double prev = -1;
    for (int level : levels) {
      const double noq = v.mean(level, Mode::NO_QOS, FlowClass::COAP_PV);
      if (noq < prev) {
        pass = false;
        detail += "level " + std::to_string(level) + " dips (" + fmt(noq) + " < " + fmt(prev) + "); ";
      }
      prev = noq;
    }
    out.push_back({"no_qos CoAP latency nondecreasing in level", pass,
                   pass ? "monotone across levels" : detail});
  }
  if (std::find(levels.begin(), levels.end(), 10) != levels.end() &&
      std::find(levels.begin(), levels.end(), 30) != levels.end()) {
    const double l10 = v.mean(10, Mode::QOS, FlowClass::COAP_PV);
    const double l30 = v.mean(30, Mode::QOS, FlowClass::COAP_PV);
    const bool pass = l10 > 0 && l30 <= 1.15 * l10;
    out.push_back({"qos CoAP latency flat (level30 <= 1.15x level10)", pass,
                   "level10=" + fmt(l10) + "us level30=" + fmt(l30) + "us"});
  } else {
    out.push_back({"qos CoAP latency flat (level30 <= 1.15x level10)", false,
                   "levels 10 and 30 required"});
  }
  check_wan_ordering(v, FlowClass::COAP_PV, out);
  return out;
}

std::vector<CheckResult> check_tcp_sweep(const std::vector<SweepRow>& rows) {
  RowView v{&rows};
  std::vector<CheckResult> out;
  const auto levels = v.levels();
  auto has_level = [&](int l) {
    return std::find(levels.begin(), levels.end(), l) != levels.end();
  };

  if (has_level(0) && has_level(20)) {
    const double l0 = v.mean(0, Mode::QOS, FlowClass::WS_READING);
    const double l20 = v.mean(20, Mode::QOS, FlowClass::WS_READING);
    const bool pass = l0 > 0 && std::abs(l20 - l0) <= 0.10 * l0;
    out.push_back({"qos WS latency steady up to 20 flows (within 10% of idle)", pass,
                   "level0=" + fmt(l0) + "us level20=" + fmt(l20) + "us"});
  } else {
    out.push_back({"qos WS latency steady up to 20 flows (within 10% of idle)", false,
                   "levels 0 and 20 required"});
  }
  if (has_level(10) && has_level(30)) {
    const double l10 = v.mean(10, Mode::NO_QOS, FlowClass::WS_READING);
    const double l30 = v.mean(30, Mode::NO_QOS, FlowClass::WS_READING);
    const bool pass = l10 > 0 && l30 >= 1.5 * l10;
    out.push_back({"no_qos WS latency blows up at 30 flows (>= 1.5x level10)", pass,
                   "level10=" + fmt(l10) + "us level30=" + fmt(l30) + "us"});
  } else {
    out.push_back({"no_qos WS latency blows up at 30 flows (>= 1.5x level10)", false,
                   "levels 10 and 30 required"});
  }
  {
    bool pass = true;
    std::string detail;
    for (int level : levels) {
      const double ws = v.mean(level, Mode::NO_QOS, FlowClass::WS_READING);
      const double coap = v.mean(level, Mode::NO_QOS, FlowClass::COAP_PV);
      if (!(ws > coap)) {
        pass = false;
        detail += "level " + std::to_string(level) + ": ws=" + fmt(ws) + " coap=" + fmt(coap) + "; ";
      }
    }
    out.push_back({"WS latency above CoAP latency at matched load (no_qos)", pass,
                   pass ? "holds at every level" : detail});
  }
  {
    bool pass = true;
    std::string detail;
    for (int level : levels) {
      if (level < 10) continue;
      const double qos = v.mean(level, Mode::QOS, FlowClass::WS_READING);
      const double noq = v.mean(level, Mode::NO_QOS, FlowClass::WS_READING);
      const double reduction = noq > 0 ? (noq - qos) / noq : 0.0;
      detail += "L" + std::to_string(level) + "=" + fmt(reduction * 100) + "% ";
      if (reduction < 0.15) pass = false;
    }
    out.push_back({"WS latency reduction >= 15% at levels >= 10", pass, detail});
  }
  check_wan_ordering(v, FlowClass::WS_READING, out);
  return out;
}

std::string summarize(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw std::runtime_error("no rows to summarize");
  RowView v{&rows};
  std::ostringstream os;
  const auto levels = v.levels();

  for (FlowClass cls : {FlowClass::COAP_PV, FlowClass::WS_READING, FlowClass::BACKGROUND}) {
    os << to_string(cls) << " mean latency (us) by background level\n";
    for (Mode mode : {Mode::QOS, Mode::NO_QOS, Mode::WAN}) {
      os << "  " << to_string(mode) << ":";
      for (int level : levels) {
        bool found = false;
        const double m = v.mean(level, mode, cls, &found);
        os << "  " << level << "->" << (found ? fmt(m) : "n/a");
      }
      os << '\n';
    }
    if (cls != FlowClass::BACKGROUND) {
      os << "  reduction (no_qos vs qos):";
      for (int level : levels) {
        const double noq = v.mean(level, Mode::NO_QOS, cls);
        const double q = v.mean(level, Mode::QOS, cls);
        os << "  " << level << "->" << fmt(noq > 0 ? (noq - q) / noq * 100 : 0) << "%";
      }
      os << '\n';
    }
  }

  os << "success rate (qos mode)\n";
  for (FlowClass cls : {FlowClass::COAP_PV, FlowClass::BACKGROUND}) {
    os << "  " << to_string(cls) << ":";
    for (int level : levels) {
      double sum = 0;
      int n = 0;
      for (const auto& r : rows) {
        if (r.level == level && r.mode == Mode::QOS && r.flow_class == cls) {
          sum += r.success_rate;
          ++n;
        }
      }
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", n ? sum / n : 0.0);
      os << "  " << level << "->" << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace iiotsim
