#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "iiotsim/event_loop.hpp"
#include "iiotsim/messages.hpp"

namespace iiotsim {

// ---------------------------------------------------------------------------
// Retransmission parameters
// ---------------------------------------------------------------------------

/// T / C / F of the confirmable exchange: ACK timeout, maximum retransmit
/// count, and the random spreading factor applied to the initial timeout.
struct RetransmitParams {
  Duration ack_timeout = msec(2);  // T, > 0
  int max_retransmit = 4;          // C, >= 0
  double random_factor = 1.5;      // F, >= 1

  bool valid() const {
    return ack_timeout > 0 && max_retransmit >= 0 && max_retransmit <= 30 && random_factor >= 1.0;
  }
};

/// Worst-case span of a confirmable exchange: T * (2^C - 1) * F.
Duration expected_time_span(const RetransmitParams& params);

/// Initial timeout drawn uniformly from [T, F*T].
Duration draw_initial_timeout(const RetransmitParams& params, std::mt19937_64& rng);

/// The C retransmission timeouts [t0, 2*t0, ..., 2^(C-1)*t0] for one drawn
/// t0. Their sum never exceeds expected_time_span; with F = 1 it equals it.
std::vector<Duration> retransmit_schedule(const RetransmitParams& params, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Exchange and observe state
// ---------------------------------------------------------------------------

enum class ExchangeState : std::uint8_t { WAITING, ACKED, TIMED_OUT };

struct Exchange {
  CoapMessage request;
  NodeId peer = kNoNode;
  ExchangeState state = ExchangeState::WAITING;
  int transmissions_sent = 0;  // <= C + 1
  Duration initial_timeout = 0;
  SimTime started_at = 0;
};

struct Observation {
  std::string resource;
  NodeId observer = kNoNode;
  std::vector<std::uint8_t> token;
  std::uint32_t last_sequence = 0;  // strictly increases per notification
  bool active = true;
};

// ---------------------------------------------------------------------------
// Endpoint engine
// ---------------------------------------------------------------------------

/// Confirmable-exchange state machine for one simulated endpoint: CON
/// retransmission with exponential backoff, inbound deduplication, ACK/RST
/// generation, and observe-mode notification streams. Single-owner; all
/// timing flows through the simulation clock.
class CoapEndpoint {
 public:
  using TransmitFn = std::function<void(const CoapMessage&, NodeId dst)>;
  using NotificationHandler = std::function<void(const CoapMessage&, NodeId src)>;
  using RequestHandler = std::function<void(const CoapMessage&, NodeId src)>;
  using DoneFn = std::function<void(const Exchange&)>;

  struct Counters {
    std::uint64_t retransmissions = 0;
    std::uint64_t timeouts = 0;
    std::uint64_t stray_acks = 0;
    std::uint64_t duplicates_suppressed = 0;
    std::uint64_t rst_sent = 0;
    std::uint64_t delivered = 0;
  };

  CoapEndpoint(EventLoop& loop, NodeId self, RetransmitParams params, std::uint64_t seed);

  void set_transmit(TransmitFn fn) { transmit_ = std::move(fn); }
  NodeId id() const { return self_; }
  const RetransmitParams& params() const { return params_; }
  const Counters& counters() const { return counters_; }

  // -- client side ----------------------------------------------------------

  /// Sends a confirmable message: first transmission immediately, then up to
  /// C retransmissions on timeout. `done` fires exactly once with the final
  /// state (ACKED or TIMED_OUT). Returns the assigned message id.
  std::uint16_t send_confirmable(CoapMessage msg, NodeId dst, DoneFn done = {});

  /// Registers interest in a remote resource (GET with observe). Incoming
  /// notifications for it are delivered through `on_notification`.
  void observe_remote(NodeId server, const std::string& resource, NotificationHandler on_notification,
                      DoneFn registration_done = {});

  std::size_t pending_exchange_count() const { return pending_.size(); }

  /// Completes every still-waiting exchange as TIMED_OUT (end-of-run drain).
  void fail_pending();

  // -- server side ----------------------------------------------------------

  /// Makes a resource path observable / requestable. `on_request` handles
  /// inbound PUT/POST payloads.
  void serve_resource(const std::string& path, RequestHandler on_request = {});

  /// Emits one confirmable notification per active observer of `resource`,
  /// incrementing each observation's sequence number. An observation whose
  /// notification exchange times out is deactivated. Returns the number of
  /// notifications emitted.
  int notify_observers(const std::string& resource, std::vector<std::uint8_t> payload,
                       DoneFn per_notification_done = {});

  std::size_t active_observation_count(const std::string& resource) const;
  const std::vector<Observation>& observations(const std::string& resource) const;

  // -- inbound dispatch -----------------------------------------------------

  void handle_inbound(const CoapMessage& msg, NodeId src);

 private:
  struct PendingExchange {
    Exchange ex;
    DoneFn done;
  };

  struct DedupEntry {
    SimTime expiry = 0;
    bool replied_rst = false;
  };

  std::uint16_t next_message_id() { return next_mid_++; }
  std::vector<std::uint8_t> next_token();
  void arm_timeout(std::uint16_t mid);
  void on_timeout(std::uint16_t mid, int expected_transmissions);
  void finish(std::uint16_t mid, ExchangeState state);
  void remember_reply(NodeId src, std::uint16_t mid, bool rst);
  bool handle_request(const CoapMessage& msg, NodeId src);       // true if RST
  bool handle_notification(const CoapMessage& msg, NodeId src);  // true if RST

  EventLoop& loop_;
  NodeId self_;
  RetransmitParams params_;
  std::mt19937_64 rng_;
  TransmitFn transmit_;
  Counters counters_;

  std::uint16_t next_mid_ = 0;
  std::uint64_t next_token_value_ = 1;
  std::unordered_map<std::uint16_t, PendingExchange> pending_;

  // receiver-side dedup: (src, mid) -> window and the reply that was given
  std::map<std::pair<NodeId, std::uint16_t>, DedupEntry> dedup_;

  // server: resource path -> request handler; resource path -> observations
  std::unordered_map<std::string, RequestHandler> resources_;
  std::unordered_map<std::string, std::vector<Observation>> observations_;

  // client: token bytes (as string key) -> notification handler
  std::unordered_map<std::string, NotificationHandler> client_observations_;
};

}  // namespace iiotsim
