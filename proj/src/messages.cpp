#include "iiotsim/messages.hpp"

#include <nlohmann/json.hpp>

namespace iiotsim {

namespace {

const char* kind_name(CoapKind k) {
  switch (k) {
    case CoapKind::CON: return "CON";
    case CoapKind::NON: return "NON";
    case CoapKind::ACK: return "ACK";
    case CoapKind::RST: return "RST";
  }
  return "?";
}

const char* code_name(CoapCode c) {
  switch (c) {
    case CoapCode::GET: return "GET";
    case CoapCode::PUT: return "PUT";
    case CoapCode::POST: return "POST";
    case CoapCode::CONTENT: return "CONTENT";
    case CoapCode::EMPTY: return "EMPTY";
  }
  return "?";
}

CoapKind kind_from(const std::string& s) {
  if (s == "CON") return CoapKind::CON;
  if (s == "NON") return CoapKind::NON;
  if (s == "ACK") return CoapKind::ACK;
  if (s == "RST") return CoapKind::RST;
  throw std::runtime_error("unknown coap kind: " + s);
}

CoapCode code_from(const std::string& s) {
  if (s == "GET") return CoapCode::GET;
  if (s == "PUT") return CoapCode::PUT;
  if (s == "POST") return CoapCode::POST;
  if (s == "CONTENT") return CoapCode::CONTENT;
  if (s == "EMPTY") return CoapCode::EMPTY;
  throw std::runtime_error("unknown coap code: " + s);
}

}  // namespace

std::size_t encoded_size(const CoapMessage& msg) {
  constexpr std::size_t kBase = 46;  // header + token + framing floor
  std::size_t options = 0;
  if (msg.observe.has_value()) ++options;
  if (!msg.uri_path.empty()) ++options;
  return kBase + msg.payload.size() + 4 * options;
}

bool match_ack(const CoapMessage& con, const CoapMessage& ack) {
  return ack.kind == CoapKind::ACK && ack.message_id == con.message_id;
}

CoapMessage make_ack(const CoapMessage& con) {
  CoapMessage ack;
  ack.kind = CoapKind::ACK;
  ack.code = CoapCode::EMPTY;
  ack.message_id = con.message_id;
  return ack;
}

CoapMessage make_rst(const CoapMessage& msg) {
  CoapMessage rst;
  rst.kind = CoapKind::RST;
  rst.code = CoapCode::EMPTY;
  rst.message_id = msg.message_id;
  return rst;
}

std::string coap_to_json(const CoapMessage& msg) {
  nlohmann::json j;
  j["kind"] = kind_name(msg.kind);
  j["code"] = code_name(msg.code);
  j["message_id"] = msg.message_id;
  j["token"] = msg.token;
  if (msg.observe) j["observe"] = *msg.observe;
  if (!msg.uri_path.empty()) j["uri_path"] = msg.uri_path;
  j["payload"] = msg.payload;
  return j.dump();
}

CoapMessage coap_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  CoapMessage msg;
  msg.kind = kind_from(j.at("kind").get<std::string>());
  msg.code = code_from(j.at("code").get<std::string>());
  msg.message_id = j.at("message_id").get<std::uint16_t>();
  msg.token = j.at("token").get<std::vector<std::uint8_t>>();
  if (j.contains("observe")) msg.observe = j["observe"].get<std::uint32_t>();
  if (j.contains("uri_path")) msg.uri_path = j["uri_path"].get<std::string>();
  msg.payload = j.at("payload").get<std::vector<std::uint8_t>>();
  return msg;
}

std::string to_string(FlowClass c) {
  switch (c) {
    case FlowClass::COAP_PV: return "COAP_PV";
    case FlowClass::WS_READING: return "WS_READING";
    case FlowClass::CONTROL: return "CONTROL";
    case FlowClass::BACKGROUND: return "BACKGROUND";
  }
  return "?";
}

}  // namespace iiotsim
