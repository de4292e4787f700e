#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iiotsim/qos.hpp"
#include "iiotsim/time.hpp"

namespace iiotsim {

// ---------------------------------------------------------------------------
// Application messages
// ---------------------------------------------------------------------------

enum class CoapKind : std::uint8_t { CON, NON, ACK, RST };
enum class CoapCode : std::uint8_t { GET, PUT, POST, CONTENT, EMPTY };

/// Confirmable/ack application message. The encoding is a size-accounting
/// model, not a bit-exact wire format: only sizes and CON/ACK/observe
/// semantics feed the experiments.
struct CoapMessage {
  CoapKind kind = CoapKind::CON;
  CoapCode code = CoapCode::EMPTY;
  std::uint16_t message_id = 0;
  std::vector<std::uint8_t> token;  // 0..8 bytes
  std::optional<std::uint32_t> observe;
  std::string uri_path;  // empty means no Uri-Path option
  std::vector<std::uint8_t> payload;

  // Simulation bookkeeping, not wire data: set when the exchange that carries
  // this message first transmits.
  SimTime created_at = 0;

  /// Wire-field equality (ignores created_at).
  bool operator==(const CoapMessage& o) const {
    return kind == o.kind && code == o.code && message_id == o.message_id && token == o.token &&
           observe == o.observe && uri_path == o.uri_path && payload == o.payload;
  }
};

/// Size model: an empty ACK encodes to 46 bytes; anything else adds payload
/// length plus 4 bytes per present option (observe, uri-path).
std::size_t encoded_size(const CoapMessage& msg);

/// True iff `ack` acknowledges `con`: same message id, kind ACK.
bool match_ack(const CoapMessage& con, const CoapMessage& ack);

/// Empty ACK answering a CON.
CoapMessage make_ack(const CoapMessage& con);
/// RST answering a message that cannot be handled.
CoapMessage make_rst(const CoapMessage& msg);

std::string coap_to_json(const CoapMessage& msg);
CoapMessage coap_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// WebSocket frames
// ---------------------------------------------------------------------------

enum class WsOpcode : std::uint8_t { TEXT, BINARY, PING, PONG, CLOSE };

struct WsFrame {
  static constexpr std::size_t kHeaderOverheadBytes = 8;

  WsOpcode opcode = WsOpcode::TEXT;
  std::string payload;

  // Simulation bookkeeping: submit time at the sender and the DSCP the
  // gateway assigned to the frame's flow.
  SimTime created_at = 0;
  DscpClass mark = DscpClass::BE;

  bool operator==(const WsFrame& o) const { return opcode == o.opcode && payload == o.payload; }
};

inline std::size_t encoded_size(const WsFrame& f) {
  return f.payload.size() + WsFrame::kHeaderOverheadBytes;
}

// ---------------------------------------------------------------------------
// Wire envelope
// ---------------------------------------------------------------------------

using NodeId = std::int32_t;
constexpr NodeId kNoNode = -1;

enum class Transport : std::uint8_t { UDP_LIKE, TCP_LIKE };

/// Stats/accounting bucket a packet belongs to.
enum class FlowClass : std::uint8_t { COAP_PV, WS_READING, CONTROL, BACKGROUND };
constexpr int kFlowClassCount = 4;
std::string to_string(FlowClass c);

struct TcpMeta {
  std::uint64_t conn_id = 0;
  std::uint64_t seq = 0;
  bool is_ack = false;
};

/// Simulated wire envelope. Timestamps are filled in as the packet moves:
/// created_at <= enqueued_at <= dequeued_at <= delivered_at for delivered
/// packets (enqueued/dequeued reflect the last queueing point).
struct NetPacket {
  NodeId src = kNoNode;
  NodeId dst = kNoNode;
  DscpClass dscp = DscpClass::BE;
  std::int64_t size_bytes = 0;  // > 0
  Transport transport = Transport::UDP_LIKE;
  std::uint64_t flow_id = 0;
  FlowClass flow_class = FlowClass::BACKGROUND;

  SimTime created_at = 0;
  SimTime enqueued_at = 0;
  SimTime dequeued_at = 0;
  SimTime delivered_at = 0;

  // Attached application content (sim-side; the size model already accounts
  // for the bytes).
  std::shared_ptr<const CoapMessage> coap;
  std::shared_ptr<const WsFrame> ws;
  TcpMeta tcp;

  bool timestamps_ordered() const {
    return created_at <= enqueued_at && enqueued_at <= dequeued_at && dequeued_at <= delivered_at;
  }
};

}  // namespace iiotsim
