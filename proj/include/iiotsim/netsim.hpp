#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "iiotsim/event_loop.hpp"
#include "iiotsim/messages.hpp"
#include "iiotsim/qos.hpp"

namespace iiotsim {

// ---------------------------------------------------------------------------
// Links
// ---------------------------------------------------------------------------

struct LinkSpec {
  NodeId a = kNoNode;
  NodeId b = kNoNode;
  std::int64_t bandwidth_bps = 1'000'000'000;
  Duration prop_delay = usec(100);
  double loss_rate = 0.0;
  // Uncontrolled-WAN behavior: per-packet propagation drawn uniformly from
  // [jitter_min, jitter_max] instead of prop_delay.
  bool jittered = false;
  Duration jitter_min = 0;
  Duration jitter_max = 0;
};

/// Path model for the public-cloud baseline: per-packet delay uniform in
/// [base_delay, base_delay + jitter_spread], single FIFO, no QoS queues.
LinkSpec wan_path(NodeId a, NodeId b, std::int64_t bandwidth_bps, Duration base_delay,
                  Duration jitter_spread);

// ---------------------------------------------------------------------------
// Counters
// ---------------------------------------------------------------------------

enum class DropReason : std::uint8_t { QUEUE_OVERFLOW, LINK_LOSS, END_OF_RUN };

struct ClassCounters {
  std::uint64_t injected = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped_overflow = 0;
  std::uint64_t dropped_loss = 0;
  std::uint64_t dropped_end = 0;

  std::uint64_t dropped() const { return dropped_overflow + dropped_loss + dropped_end; }
};

struct PacketCounters {
  std::array<ClassCounters, kFlowClassCount> by_class{};
  std::uint64_t timestamp_violations = 0;  // delivered packets with unordered stamps

  ClassCounters& of(FlowClass c) { return by_class[static_cast<int>(c)]; }
  const ClassCounters& of(FlowClass c) const { return by_class[static_cast<int>(c)]; }
  bool conserved() const {
    for (const auto& c : by_class) {
      if (c.injected != c.delivered + c.dropped()) return false;
    }
    return true;
  }
};

struct QueueStats {
  std::array<std::uint64_t, 4> enqueued{};
  std::array<std::uint64_t, 4> dropped_overflow{};
  std::array<std::uint64_t, 4> served{};
};

struct TraceRow {
  SimTime t = 0;
  std::string node;
  const char* event = "";  // inject|enqueue|dequeue|deliver|drop|tx
  std::uint64_t flow_id = 0;
  int queue = -1;
  const char* reason = "";
};

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

struct SwitchConfig {
  int depth_limit = 256;                        // packets, per queue, tail drop
  Duration processing_delay = usec(10);         // fixed per-switch constant
  std::int64_t qos_queue_rate_bps = 100'000'000;  // token rate, queues 0-2
  std::int64_t qos_queue_burst_bits = 100'000;    // bucket depth
};

/// Deterministic store-and-forward network. Hosts source and sink packets;
/// switches run a classifier feeding one shared priority-queue set (queues
/// 0-2 token-bucket limited, queue 3 best effort taking the residual) and a
/// single transmitter that serializes at the egress link rate. Without an
/// installed policy a switch collapses to one best-effort FIFO.
class Network {
 public:
  Network(EventLoop& loop, std::uint64_t seed, SwitchConfig cfg = {});

  NodeId add_host(std::string name);
  NodeId add_switch(std::string name);
  void add_link(const LinkSpec& spec);  // throws on self-links / bad ids
  /// Builds routing tables (shortest path by hop count). Call after the last
  /// add_*; throws if the graph is disconnected.
  void finalize();

  void install_policy(NodeId sw, const QoSPolicy& policy);
  void clear_policy(NodeId sw);
  bool has_policy(NodeId sw) const;

  void set_receiver(NodeId host, std::function<void(NetPacket&&)> fn);

  /// Sources a packet at pkt.src. Fills created_at if unset.
  void inject(NetPacket pkt);

  const PacketCounters& counters() const { return counters_; }
  const QueueStats& switch_stats(NodeId sw) const;
  std::size_t node_count() const { return nodes_.size(); }
  const std::string& node_name(NodeId n) const { return nodes_[n].name; }
  bool is_switch(NodeId n) const { return nodes_[n].is_switch; }
  bool has_route(NodeId from, NodeId to) const;

  /// Accounts packets still queued or in flight as END_OF_RUN drops so that
  /// injected == delivered + dropped holds exactly.
  void settle_end_of_run();

  void set_trace(std::function<void(const TraceRow&)> sink) { trace_ = std::move(sink); }

 private:
  struct TokenBucket {
    std::int64_t rate_bps = 0;
    std::int64_t burst_bits = 0;
    std::int64_t tokens_bits = 0;
    std::int64_t carry = 0;  // numerator remainder of rate*dt
    SimTime last = 0;

    void refill(SimTime now);
    bool has(std::int64_t bits) const { return tokens_bits >= bits; }
    void take(std::int64_t bits) { tokens_bits -= bits; }
    Duration wait_for(std::int64_t bits) const;
  };

  struct SwitchState {
    std::optional<QoSPolicy> policy;
    std::array<std::deque<NetPacket>, 4> queues;
    std::array<TokenBucket, 3> buckets;
    QueueStats stats;
    bool busy = false;
    bool wake_armed = false;
  };

  struct Node {
    std::string name;
    bool is_switch = false;
    std::unique_ptr<SwitchState> sw;
    std::function<void(NetPacket&&)> receiver;
  };

  struct HostPort {
    std::deque<NetPacket> backlog;
    bool busy = false;
  };

  int link_index(NodeId a, NodeId b) const;  // -1 if absent
  void start_host_tx(NodeId host, NodeId next);
  void arrive(NodeId node, NetPacket&& pkt);
  void switch_enqueue(NodeId sw, NetPacket&& pkt);
  void try_serve(NodeId sw);
  void emit_onto_link(NodeId from, NodeId next, NetPacket&& pkt);
  void drop(NetPacket&& pkt, DropReason reason, NodeId where, int queue);
  void trace(SimTime t, NodeId node, const char* event, const NetPacket& pkt, int queue,
             const char* reason);

  EventLoop& loop_;
  std::mt19937_64 rng_;
  SwitchConfig cfg_;
  std::vector<Node> nodes_;
  std::vector<LinkSpec> links_;
  std::vector<std::vector<int>> adj_;        // node -> link indices
  std::vector<std::vector<NodeId>> next_hop_;  // [from][dst]
  std::map<std::pair<NodeId, NodeId>, HostPort> host_ports_;
  PacketCounters counters_;
  std::uint64_t in_flight_ = 0;
  bool finalized_ = false;
  std::function<void(const TraceRow&)> trace_;
};

// ---------------------------------------------------------------------------
// Background traffic
// ---------------------------------------------------------------------------

struct UdpFlowParams {
  std::int64_t rate_bps = 1'000'000;
  int packet_size = 1000;
};

/// Constant-rate fixed-size packet source, best-effort marked, no
/// retransmission. First emission at a seeded random phase within one gap.
class UdpBackgroundSource {
 public:
  UdpBackgroundSource(EventLoop& loop, Network& net, NodeId src, NodeId dst, UdpFlowParams params,
                      std::uint64_t flow_id, std::uint64_t seed);

  void start(SimTime stop_at);
  std::uint64_t packets_sent() const { return sent_; }

 private:
  void emit();

  EventLoop& loop_;
  Network& net_;
  NodeId src_, dst_;
  UdpFlowParams params_;
  std::uint64_t flow_id_;
  Duration gap_;
  SimTime stop_at_ = 0;
  std::uint64_t sent_ = 0;
  std::mt19937_64 rng_;
};

struct TcpParams {
  int window_init = 4;
  int window_min = 1;   // halving floor; sessions with provisioned rates raise it
  int window_max = 12;
  int packet_size = 1500;
  int ack_size = 40;
  Duration rto_initial = msec(200);
  Duration rto_min = msec(100);
  Duration rto_max = sec(1);
};

/// Coarse AIMD windowed sender: up to W packets outstanding, per-packet ACKs,
/// timeout-and-retransmit with exponential backoff, window halved on timeout
/// and grown by one packet per fully ACKed window. Carries either an infinite
/// backlog (background traffic) or submitted frames (gateway sessions).
class TcpLikeSender {
 public:
  struct Stats {
    std::uint64_t unique_sent = 0;
    std::uint64_t unique_acked = 0;
    std::uint64_t retransmissions = 0;
    std::uint64_t timeouts = 0;
  };

  TcpLikeSender(EventLoop& loop, Network& net, NodeId src, NodeId dst, TcpParams params,
                std::uint64_t conn_id, FlowClass flow_class);

  void set_infinite_backlog(bool on) { infinite_ = on; }
  void set_dscp_fn(std::function<DscpClass(const WsFrame*)> fn) { dscp_fn_ = std::move(fn); }
  void start(SimTime stop_at);

  /// Queues a frame for in-order reliable delivery. Returns false (and drops
  /// the oldest queued frame) when the submission queue is full.
  bool submit_frame(std::shared_ptr<const WsFrame> frame, std::size_t queue_limit,
                    std::uint64_t* dropped_counter);

  /// ACK receipt glue, called by the receiving side's packet handler.
  void on_ack(std::uint64_t seq);

  const Stats& stats() const { return stats_; }
  int window() const { return window_; }
  std::uint64_t conn_id() const { return conn_id_; }
  std::size_t backlog_depth() const { return frame_queue_.size(); }
  std::uint64_t frames_pending() const;  // submitted but not yet acked

 private:
  struct Outstanding {
    std::uint64_t seq;
    SimTime first_sent;
    SimTime last_sent;
    int transmissions;
    std::shared_ptr<const WsFrame> frame;  // null for backlog payload
  };

  void try_send();
  void send_seq(Outstanding& o);
  void arm_timer();
  void on_timer(std::uint64_t generation);
  Duration rto() const;

  EventLoop& loop_;
  Network& net_;
  NodeId src_, dst_;
  TcpParams params_;
  std::uint64_t conn_id_;
  FlowClass flow_class_;
  std::function<DscpClass(const WsFrame*)> dscp_fn_;

  bool infinite_ = false;
  SimTime stop_at_ = 0;
  bool started_ = false;
  int window_;
  int acked_in_window_ = 0;
  std::uint64_t next_seq_ = 0;
  std::deque<std::shared_ptr<const WsFrame>> frame_queue_;
  std::deque<Outstanding> outstanding_;
  std::uint64_t timer_generation_ = 0;
  int backoff_ = 1;
  double srtt_ns_ = 0.0;
  double rttvar_ns_ = 0.0;
  bool have_rtt_ = false;
  Stats stats_;
};

/// Per-connection receive bookkeeping: ACKs every data packet, reports each
/// sequence exactly once.
class TcpLikeReceiver {
 public:
  using DeliverFn = std::function<void(const NetPacket&)>;

  TcpLikeReceiver(Network& net, NodeId self, DeliverFn deliver);

  /// Feed a TCP_LIKE data packet addressed to this receiver.
  void on_data(const NetPacket& pkt);

 private:
  Network& net_;
  NodeId self_;
  DeliverFn deliver_;
  std::map<std::uint64_t, std::uint64_t> contiguous_;          // conn -> next expected
  std::map<std::uint64_t, std::set<std::uint64_t>> ahead_;     // conn -> out-of-order seqs
};

}  // namespace iiotsim
