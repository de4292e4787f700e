#include <doctest.h>

#include <random>

#include "iiotsim/messages.hpp"

using namespace iiotsim;

namespace {

CoapMessage random_message(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 3), code(0, 4), len(0, 60), tok(0, 8), coin(0, 1);
  CoapMessage m;
  m.kind = static_cast<CoapKind>(kind(rng));
  m.code = static_cast<CoapCode>(code(rng));
  m.message_id = static_cast<std::uint16_t>(rng());
  m.token.resize(tok(rng));
  for (auto& b : m.token) b = static_cast<std::uint8_t>(rng());
  if (coin(rng)) m.observe = static_cast<std::uint32_t>(rng() % 100000);
  if (coin(rng)) m.uri_path = "pv";
  m.payload.resize(len(rng));
  for (auto& b : m.payload) b = static_cast<std::uint8_t>(rng());
  return m;
}

}  // namespace

TEST_SUITE("messages") {

TEST_CASE("empty ack encodes to 46 bytes") {
  CoapMessage con;
  con.kind = CoapKind::CON;
  con.code = CoapCode::CONTENT;
  con.message_id = 1234;
  const CoapMessage ack = make_ack(con);
  CHECK(ack.kind == CoapKind::ACK);
  CHECK(ack.code == CoapCode::EMPTY);
  CHECK(ack.payload.empty());
  CHECK(encoded_size(ack) == 46);
}

TEST_CASE("size model") {
  CoapMessage con;
  con.kind = CoapKind::CON;
  con.code = CoapCode::CONTENT;

  SUBCASE("no payload, no options") { CHECK(encoded_size(con) == 46); }

  SUBCASE("40-byte payload with two options stays under 100") {
    con.payload.assign(40, 0xab);
    con.observe = 7;
    con.uri_path = "pv";
    CHECK(encoded_size(con) == 94);
    CHECK(encoded_size(con) < 100);
  }

  SUBCASE("process-value notification stays under 100 bytes") {
    con.payload.assign(24, 0);  // pv payload
    con.observe = 42;
    CHECK(encoded_size(con) < 100);
  }
}

TEST_CASE("encoded size is monotone in payload length") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    CoapMessage m = random_message(rng);
    CoapMessage larger = m;
    larger.payload.push_back(0);
    CHECK(encoded_size(larger) > encoded_size(m));
  }
}

TEST_CASE("ack matching") {
  CoapMessage con;
  con.kind = CoapKind::CON;
  con.message_id = 7;

  CoapMessage ack = make_ack(con);
  CHECK(match_ack(con, ack));

  ack.message_id = 8;
  CHECK_FALSE(match_ack(con, ack));

  CoapMessage rst = make_rst(con);
  CHECK(rst.message_id == 7);
  CHECK_FALSE(match_ack(con, rst));
}

TEST_CASE("json round trip preserves every field") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 300; ++i) {
    const CoapMessage m = random_message(rng);
    const CoapMessage back = coap_from_json(coap_to_json(m));
    CHECK(back == m);
  }
}

TEST_CASE("ws frame size model") {
  WsFrame f;
  f.payload = "hello";
  CHECK(encoded_size(f) == 5 + WsFrame::kHeaderOverheadBytes);
  f.payload.clear();
  CHECK(encoded_size(f) == 8);
}

TEST_CASE("net packet timestamp ordering") {
  NetPacket p;
  p.created_at = 10;
  p.enqueued_at = 10;
  p.dequeued_at = 12;
  p.delivered_at = 20;
  CHECK(p.timestamps_ordered());
  p.dequeued_at = 9;
  CHECK_FALSE(p.timestamps_ordered());
}

}  // TEST_SUITE
