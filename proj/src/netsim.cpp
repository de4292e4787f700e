#include "iiotsim/netsim.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace iiotsim {

namespace {

constexpr std::int64_t kNsPerSec = 1'000'000'000;

Duration transmission_time(std::int64_t size_bytes, std::int64_t bandwidth_bps) {
  const auto bits = static_cast<__int128>(size_bytes) * 8;
  return static_cast<Duration>(bits * kNsPerSec / bandwidth_bps);
}

}  // namespace

LinkSpec wan_path(NodeId a, NodeId b, std::int64_t bandwidth_bps, Duration base_delay,
                  Duration jitter_spread) {
  LinkSpec l;
  l.a = a;
  l.b = b;
  l.bandwidth_bps = bandwidth_bps;
  l.prop_delay = base_delay;
  l.jittered = true;
  l.jitter_min = base_delay;
  l.jitter_max = base_delay + jitter_spread;
  return l;
}

// ---------------------------------------------------------------------------
// TokenBucket
// ---------------------------------------------------------------------------

void Network::TokenBucket::refill(SimTime now) {
  if (now <= last) return;
  const auto num = static_cast<__int128>(rate_bps) * (now - last) + carry;
  tokens_bits += static_cast<std::int64_t>(num / kNsPerSec);
  carry = static_cast<std::int64_t>(num % kNsPerSec);
  if (tokens_bits >= burst_bits) {
    tokens_bits = burst_bits;
    carry = 0;
  }
  last = now;
}

Duration Network::TokenBucket::wait_for(std::int64_t bits) const {
  if (tokens_bits >= bits) return 0;
  const auto needed = static_cast<__int128>(bits - tokens_bits) * kNsPerSec - carry;
  return static_cast<Duration>((needed + rate_bps - 1) / rate_bps);
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

Network::Network(EventLoop& loop, std::uint64_t seed, SwitchConfig cfg)
    : loop_(loop), rng_(seed ^ 0xd6e8feb86659fd93ULL), cfg_(cfg) {}

NodeId Network::add_host(std::string name) {
  nodes_.push_back({std::move(name), false, nullptr, {}});
  adj_.emplace_back();
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Network::add_switch(std::string name) {
  Node n{std::move(name), true, std::make_unique<SwitchState>(), {}};
  for (auto& b : n.sw->buckets) {
    b.rate_bps = cfg_.qos_queue_rate_bps;
    b.burst_bits = cfg_.qos_queue_burst_bits;
    b.tokens_bits = cfg_.qos_queue_burst_bits;
  }
  nodes_.push_back(std::move(n));
  adj_.emplace_back();
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Network::add_link(const LinkSpec& spec) {
  if (spec.a == spec.b) throw std::invalid_argument("self-links are not allowed");
  if (spec.a < 0 || spec.b < 0 || spec.a >= static_cast<NodeId>(nodes_.size()) ||
      spec.b >= static_cast<NodeId>(nodes_.size())) {
    throw std::invalid_argument("link references unknown node");
  }
  if (spec.bandwidth_bps <= 0) throw std::invalid_argument("link bandwidth must be positive");
  links_.push_back(spec);
  adj_[spec.a].push_back(static_cast<int>(links_.size() - 1));
  adj_[spec.b].push_back(static_cast<int>(links_.size() - 1));
}

void Network::finalize() {
  const auto n = static_cast<NodeId>(nodes_.size());
  next_hop_.assign(n, std::vector<NodeId>(n, kNoNode));
  // BFS per source; only switches forward, so hosts are never expanded as
  // intermediate nodes.
  std::vector<NodeId> prev(n);
  std::vector<bool> seen(n);
  for (NodeId s = 0; s < n; ++s) {
    std::fill(seen.begin(), seen.end(), false);
    std::fill(prev.begin(), prev.end(), kNoNode);
    std::deque<NodeId> q{s};
    seen[s] = true;
    while (!q.empty()) {
      NodeId u = q.front();
      q.pop_front();
      if (u != s && !nodes_[u].is_switch) continue;
      for (int li : adj_[u]) {
        NodeId v = links_[li].a == u ? links_[li].b : links_[li].a;
        if (seen[v]) continue;
        seen[v] = true;
        prev[v] = u;
        q.push_back(v);
      }
    }
    for (NodeId d = 0; d < n; ++d) {
      if (d == s || !seen[d]) continue;
      NodeId hop = d;
      while (prev[hop] != s) hop = prev[hop];
      next_hop_[s][d] = hop;
    }
  }
  finalized_ = true;
}

bool Network::has_route(NodeId from, NodeId to) const {
  return from != to && next_hop_[from][to] != kNoNode;
}

void Network::install_policy(NodeId sw, const QoSPolicy& policy) {
  if (!nodes_[sw].is_switch) throw std::invalid_argument("policy target is not a switch");
  nodes_[sw].sw->policy = policy;
}

void Network::clear_policy(NodeId sw) { nodes_[sw].sw->policy.reset(); }

bool Network::has_policy(NodeId sw) const {
  return nodes_[sw].is_switch && nodes_[sw].sw->policy.has_value();
}

void Network::set_receiver(NodeId host, std::function<void(NetPacket&&)> fn) {
  nodes_[host].receiver = std::move(fn);
}

const QueueStats& Network::switch_stats(NodeId sw) const {
  if (!nodes_[sw].is_switch) throw std::invalid_argument("not a switch");
  return nodes_[sw].sw->stats;
}

int Network::link_index(NodeId a, NodeId b) const {
  for (int li : adj_[a]) {
    if (links_[li].a == b || links_[li].b == b) return li;
  }
  return -1;
}

void Network::trace(SimTime t, NodeId node, const char* event, const NetPacket& pkt, int queue,
                    const char* reason) {
  if (!trace_) return;
  trace_({t, nodes_[node].name, event, pkt.flow_id, queue, reason});
}

void Network::inject(NetPacket pkt) {
  assert(finalized_);
  if (pkt.size_bytes <= 0) throw std::invalid_argument("packet size must be positive");
  if (pkt.created_at == 0) pkt.created_at = loop_.now();
  counters_.of(pkt.flow_class).injected++;
  trace(loop_.now(), pkt.src, "inject", pkt, -1, "");

  if (pkt.src == pkt.dst) {  // degenerate loopback
    pkt.enqueued_at = pkt.dequeued_at = loop_.now();
    arrive(pkt.dst, std::move(pkt));
    return;
  }
  const NodeId src = pkt.src;
  const NodeId next = next_hop_[src][pkt.dst];
  if (next == kNoNode) throw std::runtime_error("no route from " + nodes_[src].name + " to " +
                                                nodes_[pkt.dst].name);
  pkt.enqueued_at = loop_.now();
  auto& port = host_ports_[{src, next}];
  port.backlog.push_back(std::move(pkt));
  if (!port.busy) start_host_tx(src, next);
}

void Network::start_host_tx(NodeId host, NodeId next) {
  auto& port = host_ports_[{host, next}];
  if (port.backlog.empty()) {
    port.busy = false;
    return;
  }
  port.busy = true;
  NetPacket pkt = std::move(port.backlog.front());
  port.backlog.pop_front();
  pkt.dequeued_at = loop_.now();
  const int li = link_index(host, next);
  assert(li >= 0);
  const Duration tx = transmission_time(pkt.size_bytes, links_[li].bandwidth_bps);
  loop_.in(tx, [this, host, next, pkt = std::move(pkt)]() mutable {
    emit_onto_link(host, next, std::move(pkt));
    start_host_tx(host, next);
  });
}

void Network::emit_onto_link(NodeId from, NodeId next, NetPacket&& pkt) {
  const int li = link_index(from, next);
  assert(li >= 0);
  const LinkSpec& link = links_[li];
  if (link.loss_rate > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng_) < link.loss_rate) {
      drop(std::move(pkt), DropReason::LINK_LOSS, from, -1);
      return;
    }
  }
  Duration prop = link.prop_delay;
  if (link.jittered) {
    std::uniform_real_distribution<double> u(static_cast<double>(link.jitter_min),
                                             static_cast<double>(link.jitter_max));
    prop = static_cast<Duration>(u(rng_));
  }
  ++in_flight_;
  trace(loop_.now(), from, "tx", pkt, -1, "");
  loop_.in(prop, [this, next, pkt = std::move(pkt)]() mutable {
    --in_flight_;
    arrive(next, std::move(pkt));
  });
}

void Network::arrive(NodeId node, NetPacket&& pkt) {
  if (node == pkt.dst) {
    pkt.delivered_at = loop_.now();
    counters_.of(pkt.flow_class).delivered++;
    if (!pkt.timestamps_ordered()) counters_.timestamp_violations++;
    trace(loop_.now(), node, "deliver", pkt, -1, "");
    if (nodes_[node].receiver) nodes_[node].receiver(std::move(pkt));
    return;
  }
  if (!nodes_[node].is_switch) {
    throw std::runtime_error("packet routed through non-forwarding host " + nodes_[node].name);
  }
  // Fixed per-switch processing delay, then the queueing point.
  ++in_flight_;
  loop_.in(cfg_.processing_delay, [this, node, pkt = std::move(pkt)]() mutable {
    --in_flight_;
    switch_enqueue(node, std::move(pkt));
  });
}

void Network::switch_enqueue(NodeId sw, NetPacket&& pkt) {
  SwitchState& st = *nodes_[sw].sw;
  const int q = st.policy ? classify_dscp(pkt.dscp, *st.policy) : 3;
  if (static_cast<int>(st.queues[q].size()) >= cfg_.depth_limit) {
    st.stats.dropped_overflow[q]++;
    drop(std::move(pkt), DropReason::QUEUE_OVERFLOW, sw, q);
    return;
  }
  pkt.enqueued_at = loop_.now();
  st.stats.enqueued[q]++;
  trace(loop_.now(), sw, "enqueue", pkt, q, "");
  st.queues[q].push_back(std::move(pkt));
  try_serve(sw);
}

void Network::try_serve(NodeId sw) {
  SwitchState& st = *nodes_[sw].sw;
  if (st.busy) return;
  const SimTime now = loop_.now();

  int pick = -1;
  for (int i = 0; i < 3; ++i) {
    if (st.queues[i].empty()) continue;
    st.buckets[i].refill(now);
    if (st.buckets[i].has(st.queues[i].front().size_bytes * 8)) {
      pick = i;
      break;
    }
  }
  if (pick < 0 && !st.queues[3].empty()) pick = 3;

  if (pick < 0) {
    // Some priority queue may be waiting on tokens; wake when the earliest
    // head-of-line packet becomes serviceable.
    Duration wait = -1;
    for (int i = 0; i < 3; ++i) {
      if (st.queues[i].empty()) continue;
      const Duration w = st.buckets[i].wait_for(st.queues[i].front().size_bytes * 8);
      if (wait < 0 || w < wait) wait = w;
    }
    if (wait >= 0 && !st.wake_armed) {
      st.wake_armed = true;
      loop_.in(wait, [this, sw] {
        nodes_[sw].sw->wake_armed = false;
        try_serve(sw);
      });
    }
    return;
  }

  NetPacket pkt = std::move(st.queues[pick].front());
  st.queues[pick].pop_front();
  if (pick < 3) st.buckets[pick].take(pkt.size_bytes * 8);
  pkt.dequeued_at = now;
  st.stats.served[pick]++;
  trace(now, sw, "dequeue", pkt, pick, "");

  const NodeId next = next_hop_[sw][pkt.dst];
  if (next == kNoNode) throw std::runtime_error("no route at switch " + nodes_[sw].name);
  const int li = link_index(sw, next);
  assert(li >= 0);
  const Duration tx = transmission_time(pkt.size_bytes, links_[li].bandwidth_bps);
  st.busy = true;
  loop_.in(tx, [this, sw, next, pkt = std::move(pkt)]() mutable {
    nodes_[sw].sw->busy = false;
    emit_onto_link(sw, next, std::move(pkt));
    try_serve(sw);
  });
}

void Network::drop(NetPacket&& pkt, DropReason reason, NodeId where, int queue) {
  auto& cc = counters_.of(pkt.flow_class);
  const char* why = "";
  switch (reason) {
    case DropReason::QUEUE_OVERFLOW:
      cc.dropped_overflow++;
      why = "overflow";
      break;
    case DropReason::LINK_LOSS:
      cc.dropped_loss++;
      why = "loss";
      break;
    case DropReason::END_OF_RUN:
      cc.dropped_end++;
      why = "end_of_run";
      break;
  }
  trace(loop_.now(), where, "drop", pkt, queue, why);
}

void Network::settle_end_of_run() {
  // Whatever was injected but neither delivered nor dropped is still sitting
  // in a queue, a host port, or on a wire; account it so conservation holds
  // exactly.
  for (auto& cc : counters_.by_class) {
    const std::uint64_t accounted = cc.delivered + cc.dropped();
    assert(cc.injected >= accounted);
    cc.dropped_end += cc.injected - accounted;
  }
}

// ---------------------------------------------------------------------------
// UDP background
// ---------------------------------------------------------------------------

UdpBackgroundSource::UdpBackgroundSource(EventLoop& loop, Network& net, NodeId src, NodeId dst,
                                         UdpFlowParams params, std::uint64_t flow_id,
                                         std::uint64_t seed)
    : loop_(loop),
      net_(net),
      src_(src),
      dst_(dst),
      params_(params),
      flow_id_(flow_id),
      rng_(seed ^ (flow_id * 0x2545f4914f6cdd1dULL)) {
  gap_ = transmission_time(params_.packet_size, params_.rate_bps);
  if (gap_ <= 0) gap_ = 1;
}

void UdpBackgroundSource::start(SimTime stop_at) {
  stop_at_ = stop_at;
  std::uniform_real_distribution<double> u(0.0, static_cast<double>(gap_));
  loop_.in(static_cast<Duration>(u(rng_)), [this] { emit(); });
}

void UdpBackgroundSource::emit() {
  if (loop_.now() >= stop_at_) return;
  NetPacket pkt;
  pkt.src = src_;
  pkt.dst = dst_;
  pkt.dscp = DscpClass::BE;
  pkt.size_bytes = params_.packet_size;
  pkt.transport = Transport::UDP_LIKE;
  pkt.flow_id = flow_id_;
  pkt.flow_class = FlowClass::BACKGROUND;
  net_.inject(std::move(pkt));
  ++sent_;
  loop_.in(gap_, [this] { emit(); });
}

// ---------------------------------------------------------------------------
// TCP-like sender / receiver
// ---------------------------------------------------------------------------

TcpLikeSender::TcpLikeSender(EventLoop& loop, Network& net, NodeId src, NodeId dst,
                             TcpParams params, std::uint64_t conn_id, FlowClass flow_class)
    : loop_(loop),
      net_(net),
      src_(src),
      dst_(dst),
      params_(params),
      conn_id_(conn_id),
      flow_class_(flow_class),
      window_(params.window_init) {}

void TcpLikeSender::start(SimTime stop_at) {
  stop_at_ = stop_at;
  started_ = true;
  try_send();
}

bool TcpLikeSender::submit_frame(std::shared_ptr<const WsFrame> frame, std::size_t queue_limit,
                                 std::uint64_t* dropped_counter) {
  bool dropped = false;
  if (frame_queue_.size() >= queue_limit) {
    frame_queue_.pop_front();  // oldest gives way
    if (dropped_counter) ++(*dropped_counter);
    dropped = true;
  }
  frame_queue_.push_back(std::move(frame));
  if (started_) try_send();
  return !dropped;
}

std::uint64_t TcpLikeSender::frames_pending() const {
  std::uint64_t n = frame_queue_.size();
  for (const auto& o : outstanding_) {
    if (o.frame) ++n;
  }
  return n;
}

Duration TcpLikeSender::rto() const {
  if (!have_rtt_) return params_.rto_initial;
  const auto raw = static_cast<Duration>(srtt_ns_ + 4.0 * rttvar_ns_);
  return std::clamp(raw, params_.rto_min, params_.rto_max);
}

void TcpLikeSender::try_send() {
  if (!started_ || loop_.now() >= stop_at_) return;
  while (static_cast<int>(outstanding_.size()) < window_) {
    std::shared_ptr<const WsFrame> frame;
    if (!infinite_) {
      if (frame_queue_.empty()) break;
      frame = std::move(frame_queue_.front());
      frame_queue_.pop_front();
    }
    const bool was_empty = outstanding_.empty();
    outstanding_.push_back({next_seq_++, loop_.now(), loop_.now(), 0, std::move(frame)});
    send_seq(outstanding_.back());
    ++stats_.unique_sent;
    if (was_empty) arm_timer();
  }
}

void TcpLikeSender::send_seq(Outstanding& o) {
  o.last_sent = loop_.now();
  ++o.transmissions;
  NetPacket pkt;
  pkt.src = src_;
  pkt.dst = dst_;
  pkt.dscp = dscp_fn_ ? dscp_fn_(o.frame.get()) : DscpClass::BE;
  pkt.size_bytes = o.frame ? static_cast<std::int64_t>(encoded_size(*o.frame))
                           : params_.packet_size;
  pkt.transport = Transport::TCP_LIKE;
  pkt.flow_id = conn_id_;
  pkt.flow_class = flow_class_;
  pkt.ws = o.frame;
  pkt.tcp = {conn_id_, o.seq, false};
  net_.inject(std::move(pkt));
}

void TcpLikeSender::arm_timer() {
  if (outstanding_.empty()) return;
  const std::uint64_t gen = ++timer_generation_;
  const SimTime expiry = outstanding_.front().last_sent + rto() * backoff_;
  loop_.at(expiry, [this, gen] { on_timer(gen); });
}

void TcpLikeSender::on_timer(std::uint64_t generation) {
  if (generation != timer_generation_ || outstanding_.empty()) return;
  ++stats_.timeouts;
  window_ = std::max(window_ / 2, params_.window_min);
  acked_in_window_ = 0;
  backoff_ = std::min(backoff_ * 2, 64);
  ++stats_.retransmissions;
  send_seq(outstanding_.front());
  arm_timer();
}

void TcpLikeSender::on_ack(std::uint64_t seq) {
  for (auto it = outstanding_.begin(); it != outstanding_.end(); ++it) {
    if (it->seq != seq) continue;
    if (it->transmissions == 1) {
      // Karn: only unambiguous samples feed the estimator.
      const auto sample = static_cast<double>(loop_.now() - it->first_sent);
      if (!have_rtt_) {
        srtt_ns_ = sample;
        rttvar_ns_ = sample / 2.0;
        have_rtt_ = true;
      } else {
        rttvar_ns_ = 0.75 * rttvar_ns_ + 0.25 * std::abs(sample - srtt_ns_);
        srtt_ns_ = 0.875 * srtt_ns_ + 0.125 * sample;
      }
    }
    const bool was_front = it == outstanding_.begin();
    outstanding_.erase(it);
    ++stats_.unique_acked;
    backoff_ = 1;
    if (++acked_in_window_ >= window_) {
      window_ = std::min(window_ + 1, params_.window_max);
      acked_in_window_ = 0;
    }
    if (was_front) arm_timer();
    try_send();
    return;
  }
  // Duplicate ACK for an already-completed sequence: ignore.
}

TcpLikeReceiver::TcpLikeReceiver(Network& net, NodeId self, DeliverFn deliver)
    : net_(net), self_(self), deliver_(std::move(deliver)) {}

void TcpLikeReceiver::on_data(const NetPacket& pkt) {
  // Always acknowledge; deliver each sequence exactly once.
  NetPacket ack;
  ack.src = self_;
  ack.dst = pkt.src;
  ack.dscp = pkt.dscp;
  ack.size_bytes = 40;
  ack.transport = Transport::TCP_LIKE;
  ack.flow_id = pkt.flow_id;
  ack.flow_class = pkt.flow_class;
  ack.tcp = {pkt.tcp.conn_id, pkt.tcp.seq, true};
  net_.inject(std::move(ack));

  auto& next = contiguous_[pkt.tcp.conn_id];
  auto& ahead = ahead_[pkt.tcp.conn_id];
  const std::uint64_t seq = pkt.tcp.seq;
  if (seq < next || ahead.count(seq)) return;  // duplicate
  if (seq == next) {
    ++next;
    while (!ahead.empty() && *ahead.begin() == next) {
      ahead.erase(ahead.begin());
      ++next;
    }
  } else {
    ahead.insert(seq);
  }
  if (deliver_) deliver_(pkt);
}

}  // namespace iiotsim
