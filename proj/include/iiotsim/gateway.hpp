#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iiotsim/coap.hpp"
#include "iiotsim/messages.hpp"
#include "iiotsim/qos.hpp"
#include "iiotsim/tdma.hpp"

namespace iiotsim {

/// A reading on its way from field device to sensor cloud. generated_at <=
/// gw_arrival <= sc_arrival for every reading of a run.
struct TimestampedReading {
  ProcessValue pv;
  SimTime gw_arrival = 0;
  std::optional<SimTime> sc_arrival;
};

/// Field device as seen from the gateway side.
struct RemoteDevice {
  NodeId node = kNoNode;
  std::string device_id;
  std::uint32_t device_index = 0;
  SensorClass isa_class = SensorClass::Class5;
};

struct PolicyApplyResult {
  bool ok = false;
  std::uint32_t version = 0;
  std::vector<std::string> violations;
};

/// Site gateway: CoAP observer toward the field devices, frame source toward
/// the sensor-cloud WebSocket sessions, CoAP<->WebSocket adapter, and local
/// QoS policy holder.
class Gateway {
 public:
  static constexpr std::size_t kWsBufferLimit = 1024;  // frames, oldest dropped

  struct Counters {
    std::uint64_t notifications_received = 0;
    std::uint64_t readings_forwarded = 0;  // frames built (counted once per session fanout below)
    std::uint64_t frames_submitted = 0;    // frame/session submissions
    std::uint64_t adapter_dedup_drops = 0;
    std::uint64_t adapter_malformed_drops = 0;
    std::uint64_t buffer_drops = 0;
    std::uint64_t registration_timeouts = 0;
    std::uint64_t commands_forwarded = 0;
    std::uint64_t command_errors = 0;
    std::uint64_t policies_applied = 0;
    std::uint64_t policies_rejected = 0;
  };

  using FrameSink = std::function<void(int session, std::shared_ptr<const WsFrame>)>;
  using ReadingHook = std::function<void(const TimestampedReading&)>;
  using CommandDone = std::function<void(const Exchange&)>;

  Gateway(EventLoop& loop, NodeId self, std::string site_id, RetransmitParams params,
          std::uint64_t seed);

  CoapEndpoint& coap() { return coap_; }
  const std::string& site_id() const { return site_id_; }
  NodeId node() const { return coap_.id(); }
  const Counters& counters() const { return counters_; }

  // -- observations ----------------------------------------------------------

  /// Sends one GET-with-observe per device; `done` fires once every
  /// registration resolves, with the number ACKED. Devices whose registration
  /// times out are excluded and counted.
  void establish_observations(const std::vector<RemoteDevice>& devices,
                              std::function<void(int acked)> done = {});
  std::size_t observed_device_count() const { return observed_devices_.size(); }

  void set_reading_hook(ReadingHook hook) { reading_hook_ = std::move(hook); }

  // -- adapter ---------------------------------------------------------------

  /// Protocol translation, notification direction: a CoAP notification
  /// carrying a process value becomes a TEXT frame with JSON payload
  /// {v, device_id, value, generated_at, gw_arrival} (times in integer
  /// microseconds). Returns nullopt for malformed payloads.
  std::optional<WsFrame> coap_to_ws(const CoapMessage& notification);

  /// Protocol translation, command direction: a TEXT frame with JSON payload
  /// {v, device_id, command, args} becomes a CON PUT to the device's command
  /// resource. Returns nullopt when the device is unknown or the payload is
  /// malformed.
  std::optional<CoapMessage> ws_to_coap(const WsFrame& frame);

  /// Full inbound path for a command frame arriving on `session`: translate
  /// and send, or emit an error frame back on the originating session.
  void handle_ws_command(int session, const WsFrame& frame, CommandDone done = {});

  // -- policy ----------------------------------------------------------------

  /// Validates and atomically installs a policy; an invalid policy leaves the
  /// previous one in place. Re-applying the installed policy is idempotent.
  PolicyApplyResult apply_policy(const QoSPolicy& policy);
  const std::optional<QoSPolicy>& installed_policy() const { return installed_policy_; }

  /// Observes inbound policy messages before they are applied (control-plane
  /// metrics tap).
  void set_policy_hook(std::function<void(const CoapMessage&)> hook) {
    policy_hook_ = std::move(hook);
  }

  /// Outbound mark for a sensor class under the installed policy (BE when no
  /// policy is installed).
  DscpClass mark_for_class(SensorClass c) const;
  DscpClass control_mark() const;

  // -- sessions ---------------------------------------------------------------

  void set_frame_sink(FrameSink sink) { frame_sink_ = std::move(sink); }
  int open_ws_session();
  void close_ws_session(int session);
  std::size_t ws_session_count() const { return ws_sessions_.size(); }
  std::size_t buffered_frame_count() const { return pending_frames_.size(); }

 private:
  void on_notification(const CoapMessage& msg, NodeId src);
  void broadcast(std::shared_ptr<const WsFrame> frame);
  void send_error_frame(int session, const std::string& reason);

  EventLoop& loop_;
  std::string site_id_;
  CoapEndpoint coap_;
  Counters counters_;

  std::map<std::uint32_t, RemoteDevice> devices_by_index_;
  std::map<std::string, RemoteDevice> devices_by_id_;
  std::set<std::string> observed_devices_;

  std::optional<QoSPolicy> installed_policy_;

  std::set<int> ws_sessions_;
  int next_session_ = 0;
  FrameSink frame_sink_;
  std::deque<std::shared_ptr<const WsFrame>> pending_frames_;  // no-session buffer

  ReadingHook reading_hook_;
  std::function<void(const CoapMessage&)> policy_hook_;

  // adapter dedup on (device_index, generated_at)
  std::set<std::pair<std::uint32_t, SimTime>> seen_readings_;
  std::deque<std::pair<std::uint32_t, SimTime>> seen_order_;
};

// ---------------------------------------------------------------------------
// Policy distribution
// ---------------------------------------------------------------------------

struct DistributeOutcome {
  NodeId gateway = kNoNode;
  bool applied = false;
  std::uint32_t version = 0;
};

/// Serializes the policy as JSON and sends it to each gateway as a CON PUT on
/// the policy resource (the transmit wiring marks these CS6). `done` fires
/// once every exchange resolves, with one outcome per gateway in input order.
void distribute_policy(CoapEndpoint& controller, const std::vector<NodeId>& gateways,
                       const QoSPolicy& policy,
                       std::function<void(std::vector<DistributeOutcome>)> done);

/// Resource names shared between gateways, devices, and the cloud controller.
inline constexpr const char* kPvResource = "pv";
inline constexpr const char* kCommandResource = "cmd";
inline constexpr const char* kPolicyResource = "policy";

}  // namespace iiotsim
