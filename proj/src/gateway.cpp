#include "iiotsim/gateway.hpp"

#include <nlohmann/json.hpp>

namespace iiotsim {

Gateway::Gateway(EventLoop& loop, NodeId self, std::string site_id, RetransmitParams params,
                 std::uint64_t seed)
    : loop_(loop), site_id_(std::move(site_id)), coap_(loop, self, params, seed) {
  coap_.serve_resource(kPolicyResource, [this](const CoapMessage& msg, NodeId) {
    if (policy_hook_) policy_hook_(msg);
    try {
      apply_policy(policy_from_json(std::string(msg.payload.begin(), msg.payload.end())));
    } catch (const std::exception&) {
      ++counters_.policies_rejected;
    }
  });
}

void Gateway::establish_observations(const std::vector<RemoteDevice>& devices,
                                     std::function<void(int acked)> done) {
  if (devices.empty()) {
    if (done) done(0);
    return;
  }
  auto state = std::make_shared<std::pair<int, int>>(0, 0);  // {resolved, acked}
  const int total = static_cast<int>(devices.size());
  for (const auto& dev : devices) {
    devices_by_index_[dev.device_index] = dev;
    devices_by_id_[dev.device_id] = dev;
    auto on_note = [this](const CoapMessage& msg, NodeId src) { on_notification(msg, src); };
    auto reg_done = [this, dev, state, total, done](const Exchange& ex) {
      ++state->first;
      if (ex.state == ExchangeState::ACKED) {
        ++state->second;
        observed_devices_.insert(dev.device_id);
      } else {
        ++counters_.registration_timeouts;
      }
      if (state->first == total && done) done(state->second);
    };
    coap_.observe_remote(dev.node, kPvResource, std::move(on_note), std::move(reg_done));
  }
}

void Gateway::on_notification(const CoapMessage& msg, NodeId) {
  ++counters_.notifications_received;
  auto frame = coap_to_ws(msg);
  if (!frame) return;
  broadcast(std::make_shared<const WsFrame>(std::move(*frame)));
}

std::optional<WsFrame> Gateway::coap_to_ws(const CoapMessage& notification) {
  DecodedPv pv;
  if (!decode_pv_payload(notification.payload, pv)) {
    ++counters_.adapter_malformed_drops;
    return std::nullopt;
  }
  auto dev = devices_by_index_.find(pv.device_index);
  if (dev == devices_by_index_.end()) {
    ++counters_.adapter_malformed_drops;
    return std::nullopt;
  }
  const auto key = std::make_pair(pv.device_index, pv.generated_at);
  if (!seen_readings_.insert(key).second) {
    ++counters_.adapter_dedup_drops;
    return std::nullopt;
  }
  seen_order_.push_back(key);
  while (seen_order_.size() > 4096) {
    seen_readings_.erase(seen_order_.front());
    seen_order_.pop_front();
  }

  TimestampedReading reading;
  reading.pv = {dev->second.device_id, pv.value, pv.generated_at};
  reading.gw_arrival = loop_.now();
  if (reading_hook_) reading_hook_(reading);

  nlohmann::json j;
  j["v"] = 1;
  j["device_id"] = dev->second.device_id;
  j["value"] = pv.value;
  j["generated_at"] = to_us_floor(pv.generated_at);
  j["gw_arrival"] = to_us_floor(reading.gw_arrival);

  WsFrame frame;
  frame.opcode = WsOpcode::TEXT;
  frame.payload = j.dump();
  frame.created_at = loop_.now();
  frame.mark = mark_for_class(dev->second.isa_class);
  ++counters_.readings_forwarded;
  return frame;
}

void Gateway::broadcast(std::shared_ptr<const WsFrame> frame) {
  if (ws_sessions_.empty()) {
    if (pending_frames_.size() >= kWsBufferLimit) {
      pending_frames_.pop_front();
      ++counters_.buffer_drops;
    }
    pending_frames_.push_back(std::move(frame));
    return;
  }
  for (int session : ws_sessions_) {
    ++counters_.frames_submitted;
    if (frame_sink_) frame_sink_(session, frame);
  }
}

std::optional<CoapMessage> Gateway::ws_to_coap(const WsFrame& frame) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(frame.payload);
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (!j.contains("device_id") || !j.contains("command")) return std::nullopt;
  auto dev = devices_by_id_.find(j["device_id"].get<std::string>());
  if (dev == devices_by_id_.end()) return std::nullopt;

  nlohmann::json body;
  body["command"] = j["command"];
  body["args"] = j.value("args", nlohmann::json::object());
  const std::string text = body.dump();

  CoapMessage cmd;
  cmd.kind = CoapKind::CON;
  cmd.code = CoapCode::PUT;
  cmd.uri_path = kCommandResource;
  cmd.payload.assign(text.begin(), text.end());
  return cmd;
}

void Gateway::handle_ws_command(int session, const WsFrame& frame, CommandDone done) {
  auto cmd = ws_to_coap(frame);
  if (!cmd) {
    ++counters_.command_errors;
    send_error_frame(session, "unknown device or malformed command");
    return;
  }
  const auto dev =
      devices_by_id_.find(nlohmann::json::parse(frame.payload)["device_id"].get<std::string>());
  ++counters_.commands_forwarded;
  coap_.send_confirmable(std::move(*cmd), dev->second.node, std::move(done));
}

void Gateway::send_error_frame(int session, const std::string& reason) {
  nlohmann::json j;
  j["v"] = 1;
  j["error"] = reason;
  auto frame = std::make_shared<WsFrame>();
  frame->opcode = WsOpcode::TEXT;
  frame->payload = j.dump();
  frame->created_at = loop_.now();
  if (frame_sink_ && ws_sessions_.count(session)) frame_sink_(session, std::move(frame));
}

PolicyApplyResult Gateway::apply_policy(const QoSPolicy& policy) {
  PolicyApplyResult result;
  result.violations = validate(policy);
  if (!result.violations.empty()) {
    ++counters_.policies_rejected;
    result.ok = false;
    result.version = installed_policy_ ? installed_policy_->version : 0;
    return result;
  }
  installed_policy_ = policy;  // replace atomically
  ++counters_.policies_applied;
  result.ok = true;
  result.version = policy.version;
  return result;
}

DscpClass Gateway::mark_for_class(SensorClass c) const {
  if (!installed_policy_) return DscpClass::BE;
  return mark_for(FlowSelector::for_class(c), *installed_policy_);
}

DscpClass Gateway::control_mark() const {
  if (!installed_policy_) return DscpClass::BE;
  return mark_for(FlowSelector::control(), *installed_policy_);
}

int Gateway::open_ws_session() {
  const int id = next_session_++;
  ws_sessions_.insert(id);
  // Flush anything buffered while no consumer was connected.
  while (!pending_frames_.empty()) {
    ++counters_.frames_submitted;
    if (frame_sink_) frame_sink_(id, pending_frames_.front());
    pending_frames_.pop_front();
  }
  return id;
}

void Gateway::close_ws_session(int session) { ws_sessions_.erase(session); }

void distribute_policy(CoapEndpoint& controller, const std::vector<NodeId>& gateways,
                       const QoSPolicy& policy,
                       std::function<void(std::vector<DistributeOutcome>)> done) {
  auto outcomes = std::make_shared<std::vector<DistributeOutcome>>();
  auto resolved = std::make_shared<std::size_t>(0);
  outcomes->reserve(gateways.size());
  for (NodeId gw : gateways) outcomes->push_back({gw, false, 0});
  if (gateways.empty()) {
    if (done) done(*outcomes);
    return;
  }

  const std::string text = policy_to_json(policy);
  const std::size_t total = gateways.size();
  for (std::size_t i = 0; i < total; ++i) {
    CoapMessage put;
    put.kind = CoapKind::CON;
    put.code = CoapCode::PUT;
    put.uri_path = kPolicyResource;
    put.payload.assign(text.begin(), text.end());
    auto on_done = [outcomes, resolved, i, total, version = policy.version,
                    done](const Exchange& ex) {
      if (ex.state == ExchangeState::ACKED) {
        (*outcomes)[i].applied = true;
        (*outcomes)[i].version = version;
      }
      if (++(*resolved) == total && done) done(*outcomes);
    };
    controller.send_confirmable(std::move(put), gateways[i], std::move(on_done));
  }
}

}  // namespace iiotsim
