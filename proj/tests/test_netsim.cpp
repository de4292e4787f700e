#include <doctest.h>

#include <vector>

#include "iiotsim/event_loop.hpp"
#include "iiotsim/netsim.hpp"

using namespace iiotsim;

namespace {

NetPacket make_pkt(NodeId src, NodeId dst, std::int64_t size, DscpClass dscp = DscpClass::BE,
                   FlowClass cls = FlowClass::BACKGROUND, std::uint64_t flow = 1) {
  NetPacket p;
  p.src = src;
  p.dst = dst;
  p.size_bytes = size;
  p.dscp = dscp;
  p.flow_class = cls;
  p.flow_id = flow;
  return p;
}

}  // namespace

TEST_SUITE("netsim") {

TEST_CASE("event loop executes in time order with stable ties") {
  EventLoop loop;
  std::vector<int> order;
  loop.at(10, [&] { order.push_back(2); });
  loop.at(5, [&] { order.push_back(1); });
  loop.at(10, [&] { order.push_back(3); });  // same time, inserted later
  loop.run_all();
  CHECK(order == std::vector<int>{1, 2, 3});
  CHECK(loop.now() == 10);
}

TEST_CASE("transmission plus propagation: 46 bytes at 100 Mbps over 1 ms") {
  EventLoop loop;
  Network net(loop, 1);
  const NodeId a = net.add_host("a");
  const NodeId b = net.add_host("b");
  net.add_link({a, b, 100'000'000, msec(1)});
  net.finalize();

  NetPacket got;
  net.set_receiver(b, [&](NetPacket&& p) { got = std::move(p); });
  net.inject(make_pkt(a, b, 46));
  loop.run_all();

  // 46 bytes * 8 / 100 Mbps = 3.68 us of serialization, then 1 ms on the wire.
  CHECK(got.delivered_at - got.created_at == usec(1000) + nsec(3680));
  CHECK(got.timestamps_ordered());
  CHECK(net.counters().of(FlowClass::BACKGROUND).delivered == 1);
}

TEST_CASE("zero-loss idle path delivers exactly once") {
  EventLoop loop;
  Network net(loop, 1);
  const NodeId a = net.add_host("a");
  const NodeId s = net.add_switch("s");
  const NodeId b = net.add_host("b");
  net.add_link({a, s, 1'000'000'000, usec(100)});
  net.add_link({s, b, 1'000'000'000, usec(100)});
  net.finalize();

  int deliveries = 0;
  net.set_receiver(b, [&](NetPacket&&) { ++deliveries; });
  net.inject(make_pkt(a, b, 100));
  loop.run_all();
  CHECK(deliveries == 1);
  CHECK(net.counters().conserved());
}

TEST_CASE("latency decomposes into the four delay components") {
  EventLoop loop;
  SwitchConfig cfg;
  cfg.processing_delay = usec(10);
  Network net(loop, 1, cfg);
  const NodeId a = net.add_host("a");
  const NodeId s1 = net.add_switch("s1");
  const NodeId s2 = net.add_switch("s2");
  const NodeId b = net.add_host("b");
  net.add_link({a, s1, 1'000'000'000, usec(100)});
  net.add_link({s1, s2, 1'000'000'000, usec(100)});
  net.add_link({s2, b, 1'000'000'000, usec(100)});
  net.finalize();

  NetPacket got;
  net.set_receiver(b, [&](NetPacket&& p) { got = std::move(p); });
  net.inject(make_pkt(a, b, 100));
  loop.run_all();

  // Idle network: three 0.8 us serializations, three 100 us propagations,
  // two 10 us processing stops, zero queueing.
  const Duration expect = 3 * nsec(800) + 3 * usec(100) + 2 * usec(10);
  CHECK(got.delivered_at - got.created_at == expect);
}

TEST_CASE("queue overflow tail-drops and counts the reason") {
  EventLoop loop;
  SwitchConfig cfg;
  cfg.depth_limit = 4;
  Network net(loop, 1, cfg);
  const NodeId a = net.add_host("a");
  const NodeId s = net.add_switch("s");
  const NodeId b = net.add_host("b");
  net.add_link({a, s, 1'000'000'000, usec(10)});
  net.add_link({s, b, 1'000'000, usec(10)});  // slow egress forces queueing
  net.finalize();

  int deliveries = 0;
  net.set_receiver(b, [&](NetPacket&&) { ++deliveries; });
  for (int i = 0; i < 20; ++i) net.inject(make_pkt(a, b, 1000));
  loop.run_all();

  const auto& c = net.counters().of(FlowClass::BACKGROUND);
  CHECK(c.injected == 20);
  CHECK(c.dropped_overflow > 0);
  CHECK(c.delivered + c.dropped() == 20);
  CHECK(net.switch_stats(s).dropped_overflow[3] == c.dropped_overflow);
  CHECK(deliveries == static_cast<int>(c.delivered));
}

TEST_CASE("strict priority serves the top queue first") {
  EventLoop loop;
  Network net(loop, 1);
  const NodeId a = net.add_host("a");
  const NodeId e = net.add_host("e");
  const NodeId s = net.add_switch("s");
  const NodeId b = net.add_host("b");
  net.add_link({a, s, 1'000'000'000, usec(1)});
  net.add_link({e, s, 1'000'000'000, usec(1)});
  net.add_link({s, b, 1'000'000, usec(1)});  // 8 ms per 1000-byte packet
  net.finalize();
  net.install_policy(s, default_policy());

  std::vector<std::uint64_t> deliveries;
  net.set_receiver(b, [&](NetPacket&& p) { deliveries.push_back(p.flow_id); });

  // Ten best-effort packets first, then one EF packet slightly later.
  for (int i = 0; i < 10; ++i) net.inject(make_pkt(a, b, 1000, DscpClass::BE, FlowClass::BACKGROUND, 100 + i));
  loop.at(usec(500), [&] {
    net.inject(make_pkt(e, b, 1000, DscpClass::EF, FlowClass::COAP_PV, 7));
  });
  loop.run_all();

  REQUIRE(deliveries.size() == 11);
  // The EF packet overtakes everything still queued: it is delivered second,
  // right after the BE packet already in service.
  CHECK(deliveries[1] == 7);
}

TEST_CASE("work conservation: best effort served when alone") {
  EventLoop loop;
  Network net(loop, 1);
  const NodeId a = net.add_host("a");
  const NodeId s = net.add_switch("s");
  const NodeId b = net.add_host("b");
  net.add_link({a, s, 1'000'000'000, usec(1)});
  net.add_link({s, b, 1'000'000'000, usec(1)});
  net.finalize();
  net.install_policy(s, default_policy());

  int deliveries = 0;
  net.set_receiver(b, [&](NetPacket&&) { ++deliveries; });
  net.inject(make_pkt(a, b, 500, DscpClass::BE));
  loop.run_all();
  CHECK(deliveries == 1);
  CHECK(net.switch_stats(s).served[3] == 1);
}

TEST_CASE("depleted token bucket defers to the next eligible queue") {
  EventLoop loop;
  SwitchConfig cfg;
  cfg.qos_queue_rate_bps = 1'000'000;  // refills slowly
  cfg.qos_queue_burst_bits = 8000;     // exactly one 1000-byte packet
  Network net(loop, 1, cfg);
  const NodeId a = net.add_host("a");
  const NodeId s = net.add_switch("s");
  const NodeId b = net.add_host("b");
  net.add_link({a, s, 1'000'000'000, usec(1)});
  net.add_link({s, b, 1'000'000'000, usec(1)});
  net.finalize();
  net.install_policy(s, default_policy());

  std::vector<std::uint64_t> order;
  net.set_receiver(b, [&](NetPacket&& p) { order.push_back(p.flow_id); });

  // Two EF packets drain queue0's bucket; the CS4 packet in queue1 must be
  // served while queue0 waits for tokens.
  net.inject(make_pkt(a, b, 1000, DscpClass::EF, FlowClass::COAP_PV, 1));
  net.inject(make_pkt(a, b, 1000, DscpClass::EF, FlowClass::COAP_PV, 2));
  net.inject(make_pkt(a, b, 1000, DscpClass::CS4, FlowClass::COAP_PV, 3));
  loop.run_all();

  REQUIRE(order.size() == 3);
  CHECK(order[0] == 1);
  CHECK(order[1] == 3);  // queue1 within budget beats queue0 over budget
  CHECK(order[2] == 2);
  CHECK(net.counters().conserved());
}

TEST_CASE("wan path bounds per-packet delay") {
  EventLoop loop;
  Network net(loop, 5);
  const NodeId a = net.add_host("a");
  const NodeId b = net.add_host("b");

  SUBCASE("zero spread gives a constant-delay fifo") {
    net.add_link(wan_path(a, b, 1'000'000'000, msec(40), 0));
    net.finalize();
    std::vector<Duration> delays;
    net.set_receiver(b, [&](NetPacket&& p) { delays.push_back(p.delivered_at - p.created_at); });
    for (int i = 0; i < 5; ++i) {
      loop.at(msec(i), [&] { net.inject(make_pkt(a, b, 100)); });
    }
    loop.run_all();
    REQUIRE(delays.size() == 5);
    for (auto d : delays) CHECK(d == msec(40) + nsec(800));
  }

  SUBCASE("spread keeps delays inside the window and varies them") {
    net.add_link(wan_path(a, b, 1'000'000'000, msec(40), msec(40)));
    net.finalize();
    std::vector<Duration> delays;
    net.set_receiver(b, [&](NetPacket&& p) { delays.push_back(p.delivered_at - p.created_at); });
    for (int i = 0; i < 200; ++i) {
      loop.at(msec(i), [&] { net.inject(make_pkt(a, b, 100)); });
    }
    loop.run_all();
    REQUIRE(delays.size() == 200);
    bool varied = false;
    for (auto d : delays) {
      CHECK(d >= msec(40));
      CHECK(d <= msec(80) + usec(1));
      if (d != delays.front()) varied = true;
    }
    CHECK(varied);
  }
}

TEST_CASE("udp background emits at the configured constant rate") {
  EventLoop loop;
  Network net(loop, 9);
  const NodeId a = net.add_host("a");
  const NodeId b = net.add_host("b");
  net.add_link({a, b, 1'000'000'000, usec(10)});
  net.finalize();

  std::vector<SimTime> arrivals;
  net.set_receiver(b, [&](NetPacket&& p) { arrivals.push_back(p.created_at); });

  SUBCASE("zero flows means zero events") {
    loop.run_until(msec(100));
    CHECK(arrivals.empty());
  }

  SUBCASE("1 Mbps with 1000-byte packets gives an 8 ms inter-packet gap") {
    UdpBackgroundSource src(loop, net, a, b, {1'000'000, 1000}, 1, 77);
    src.start(msec(100));
    loop.run_until(msec(200));
    REQUIRE(arrivals.size() >= 10);
    for (std::size_t i = 1; i < arrivals.size(); ++i) {
      CHECK(arrivals[i] - arrivals[i - 1] == msec(8));
    }
    CHECK(src.packets_sent() == arrivals.size());
  }
}

TEST_CASE("saturating aggregate udp load drops best-effort packets") {
  EventLoop loop;
  Network net(loop, 13);
  const NodeId a = net.add_host("a");
  const NodeId s = net.add_switch("s");
  const NodeId b = net.add_host("b");
  net.add_link({a, s, 1'000'000'000, usec(100)});
  net.add_link({s, b, 10'000'000, msec(1)});  // 10 Mbps bottleneck
  net.finalize();

  std::vector<std::unique_ptr<UdpBackgroundSource>> flows;
  for (int f = 0; f < 10; ++f) {  // 20 Mbps offered
    flows.push_back(std::make_unique<UdpBackgroundSource>(
        loop, net, a, b, UdpFlowParams{2'000'000, 1000}, 100 + f, 7));
    flows.back()->start(sec(2));
  }
  net.set_receiver(b, [](NetPacket&&) {});
  loop.run_until(sec(2));
  net.settle_end_of_run();

  const auto& c = net.counters().of(FlowClass::BACKGROUND);
  CHECK(c.dropped_overflow > 0);
  CHECK(c.injected == c.delivered + c.dropped());
}

TEST_CASE("tcp-like sender reaches the analytic window throughput") {
  EventLoop loop;
  Network net(loop, 21);
  const NodeId a = net.add_host("a");
  const NodeId s = net.add_switch("s");
  const NodeId b = net.add_host("b");
  // Large bandwidth-delay product so the window, not the pipe, binds.
  net.add_link({a, s, 1'000'000'000, msec(5)});
  net.add_link({s, b, 1'000'000'000, msec(5)});
  net.finalize();

  TcpParams params;
  params.window_init = 16;
  params.window_max = 16;
  params.packet_size = 1500;
  TcpLikeSender sender(loop, net, a, b, params, 1, FlowClass::BACKGROUND);
  sender.set_infinite_backlog(true);

  std::uint64_t delivered = 0;
  TcpLikeReceiver rx(net, b, [&](const NetPacket&) { ++delivered; });
  net.set_receiver(b, [&](NetPacket&& p) {
    if (!p.tcp.is_ack) rx.on_data(p);
  });
  net.set_receiver(a, [&](NetPacket&& p) {
    if (p.tcp.is_ack) sender.on_ack(p.tcp.seq);
  });

  sender.start(sec(10));
  loop.run_until(sec(10));

  // RTT: two propagations each way plus serializations and one switch stop
  // in each direction.
  const double data_path = 2 * 5e-3 + 2 * (1500 * 8 / 1e9) + 10e-6;
  const double ack_path = 2 * 5e-3 + 2 * (40 * 8 / 1e9) + 10e-6;
  const double rtt = data_path + ack_path;
  const double predicted_pps = 16.0 / rtt;
  const double measured_pps = static_cast<double>(delivered) / 10.0;
  CHECK(measured_pps == doctest::Approx(predicted_pps).epsilon(0.10));
  CHECK(sender.stats().timeouts == 0);
}

TEST_CASE("loss triggers timeout, backoff, and window halving") {
  EventLoop loop;
  Network net(loop, 31);
  const NodeId a = net.add_host("a");
  const NodeId b = net.add_host("b");
  LinkSpec lossy{a, b, 100'000'000, usec(100)};
  lossy.loss_rate = 0.35;
  net.add_link(lossy);
  net.finalize();

  TcpParams params;
  params.window_init = 8;
  params.window_max = 8;
  TcpLikeSender sender(loop, net, a, b, params, 1, FlowClass::BACKGROUND);
  sender.set_infinite_backlog(true);
  TcpLikeReceiver rx(net, b, [](const NetPacket&) {});
  net.set_receiver(b, [&](NetPacket&& p) {
    if (!p.tcp.is_ack) rx.on_data(p);
  });
  net.set_receiver(a, [&](NetPacket&& p) {
    if (p.tcp.is_ack) sender.on_ack(p.tcp.seq);
  });

  sender.start(sec(30));
  loop.run_until(sec(30));

  CHECK(sender.stats().timeouts > 0);
  CHECK(sender.stats().retransmissions >= sender.stats().timeouts);
  CHECK(sender.window() <= params.window_max);
  CHECK(sender.stats().unique_acked <= sender.stats().unique_sent);
}

TEST_CASE("more parallel tcp flows raise the retransmission rate") {
  auto run_flows = [](int n) {
    EventLoop loop;
    SwitchConfig cfg;
    cfg.depth_limit = 64;
    Network net(loop, 17, cfg);
    const NodeId a = net.add_host("a");
    const NodeId s = net.add_switch("s");
    const NodeId b = net.add_host("b");
    net.add_link({a, s, 1'000'000'000, usec(100)});
    net.add_link({s, b, 20'000'000, msec(1)});
    net.finalize();

    std::vector<std::unique_ptr<TcpLikeSender>> flows;
    TcpLikeReceiver rx(net, b, [](const NetPacket&) {});
    for (int f = 0; f < n; ++f) {
      auto sender = std::make_unique<TcpLikeSender>(loop, net, a, b, TcpParams{}, 100 + f,
                                                    FlowClass::BACKGROUND);
      sender->set_infinite_backlog(true);
      flows.push_back(std::move(sender));
    }
    net.set_receiver(b, [&](NetPacket&& p) {
      if (!p.tcp.is_ack) rx.on_data(p);
    });
    net.set_receiver(a, [&](NetPacket&& p) {
      if (!p.tcp.is_ack) return;
      for (auto& f : flows) {
        if (f->conn_id() == p.tcp.conn_id) f->on_ack(p.tcp.seq);
      }
    });
    for (auto& f : flows) f->start(sec(5));
    loop.run_until(sec(5));

    std::uint64_t retx = 0;
    for (auto& f : flows) retx += f->stats().retransmissions;
    // Retransmissions per second of simulated time.
    return static_cast<double>(retx) / 5.0;
  };

  const double rate10 = run_flows(10);
  const double rate30 = run_flows(30);
  CHECK(rate10 > 0.0);
  CHECK(rate30 > rate10);
}

TEST_CASE("identical seeds replay identical traces") {
  auto run_once = [] {
    EventLoop loop;
    Network net(loop, 99);
    const NodeId a = net.add_host("a");
    const NodeId s = net.add_switch("s");
    const NodeId b = net.add_host("b");
    net.add_link({a, s, 1'000'000'000, usec(100)});
    LinkSpec bottleneck{s, b, 50'000'000, msec(1)};
    bottleneck.loss_rate = 0.05;
    net.add_link(bottleneck);
    net.finalize();

    std::vector<std::pair<SimTime, std::uint64_t>> log;
    net.set_receiver(b, [&](NetPacket&& p) { log.push_back({p.delivered_at, p.flow_id}); });
    std::vector<std::unique_ptr<UdpBackgroundSource>> flows;
    for (int f = 0; f < 10; ++f) {
      flows.push_back(std::make_unique<UdpBackgroundSource>(
          loop, net, a, b, UdpFlowParams{8'000'000, 1000}, f, 123));
      flows.back()->start(sec(1));
    }
    loop.run_until(sec(1));
    net.settle_end_of_run();
    return std::make_pair(log, net.counters().of(FlowClass::BACKGROUND));
  };

  const auto [log1, c1] = run_once();
  const auto [log2, c2] = run_once();
  CHECK(log1 == log2);
  CHECK(c1.injected == c2.injected);
  CHECK(c1.delivered == c2.delivered);
  CHECK(c1.dropped_loss == c2.dropped_loss);
  CHECK(c1.dropped_overflow == c2.dropped_overflow);
}

TEST_CASE("topology validation") {
  EventLoop loop;
  Network net(loop, 1);
  const NodeId a = net.add_host("a");
  const NodeId b = net.add_host("b");
  CHECK_THROWS(net.add_link({a, a, 1'000'000'000, usec(1)}));
  CHECK_THROWS(net.add_link({a, 99, 1'000'000'000, usec(1)}));
  net.add_link({a, b, 1'000'000'000, usec(1)});
  net.finalize();
  CHECK(net.has_route(a, b));

  // Hosts never forward: two hosts joined only through a third host have no
  // route between them.
  EventLoop loop2;
  Network net2(loop2, 1);
  const NodeId x = net2.add_host("x");
  const NodeId mid = net2.add_host("mid");
  const NodeId y = net2.add_host("y");
  net2.add_link({x, mid, 1'000'000'000, usec(1)});
  net2.add_link({mid, y, 1'000'000'000, usec(1)});
  net2.finalize();
  CHECK_FALSE(net2.has_route(x, y));
  CHECK(net2.has_route(x, mid));
}

}  // TEST_SUITE
