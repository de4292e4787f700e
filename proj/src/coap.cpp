#include "iiotsim/coap.hpp"

#include <cassert>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace iiotsim {

Duration expected_time_span(const RetransmitParams& params) {
  assert(params.valid());
  const double spread = static_cast<double>(params.ack_timeout) *
                        static_cast<double>((std::int64_t{1} << params.max_retransmit) - 1) *
                        params.random_factor;
  return static_cast<Duration>(std::llround(spread));
}

Duration draw_initial_timeout(const RetransmitParams& params, std::mt19937_64& rng) {
  const double lo = static_cast<double>(params.ack_timeout);
  const double hi = lo * params.random_factor;
  std::uniform_real_distribution<double> dist(lo, hi);
  // Floor keeps the schedule sum below the worst-case span.
  return static_cast<Duration>(std::floor(dist(rng)));
}

std::vector<Duration> retransmit_schedule(const RetransmitParams& params, std::mt19937_64& rng) {
  assert(params.valid());
  const Duration t0 = draw_initial_timeout(params, rng);
  std::vector<Duration> schedule;
  schedule.reserve(static_cast<std::size_t>(params.max_retransmit));
  for (int k = 0; k < params.max_retransmit; ++k) {
    schedule.push_back(t0 << k);
  }
  return schedule;
}

CoapEndpoint::CoapEndpoint(EventLoop& loop, NodeId self, RetransmitParams params, std::uint64_t seed)
    : loop_(loop), self_(self), params_(params), rng_(seed ^ (0x9e3779b97f4a7c15ULL * (self + 1))) {
  if (!params_.valid()) throw std::invalid_argument("invalid retransmit params");
}

std::vector<std::uint8_t> CoapEndpoint::next_token() {
  std::uint64_t v = next_token_value_++;
  std::vector<std::uint8_t> tok(8);
  std::memcpy(tok.data(), &v, 8);
  return tok;
}

std::uint16_t CoapEndpoint::send_confirmable(CoapMessage msg, NodeId dst, DoneFn done) {
  if (msg.kind != CoapKind::CON) throw std::invalid_argument("send_confirmable requires a CON");
  msg.message_id = next_message_id();
  msg.created_at = loop_.now();

  PendingExchange p;
  p.ex.request = msg;
  p.ex.peer = dst;
  p.ex.state = ExchangeState::WAITING;
  p.ex.transmissions_sent = 1;
  p.ex.initial_timeout = draw_initial_timeout(params_, rng_);
  p.ex.started_at = loop_.now();
  p.done = std::move(done);
  const std::uint16_t mid = msg.message_id;
  pending_[mid] = std::move(p);

  if (transmit_) transmit_(pending_[mid].ex.request, dst);
  arm_timeout(mid);
  return mid;
}

void CoapEndpoint::arm_timeout(std::uint16_t mid) {
  auto it = pending_.find(mid);
  if (it == pending_.end()) return;
  const Exchange& ex = it->second.ex;
  // After the k-th transmission the wait is t0 * 2^(k-1); the wait after the
  // final transmission doubles once more before the exchange gives up.
  const Duration wait = ex.initial_timeout << (ex.transmissions_sent - 1);
  const int expect = ex.transmissions_sent;
  loop_.in(wait, [this, mid, expect] { on_timeout(mid, expect); });
}

void CoapEndpoint::on_timeout(std::uint16_t mid, int expected_transmissions) {
  auto it = pending_.find(mid);
  if (it == pending_.end()) return;  // already resolved
  Exchange& ex = it->second.ex;
  if (ex.state != ExchangeState::WAITING || ex.transmissions_sent != expected_transmissions) {
    return;  // stale timer from a superseded transmission
  }
  if (ex.transmissions_sent <= params_.max_retransmit) {
    ++ex.transmissions_sent;
    ++counters_.retransmissions;
    if (transmit_) transmit_(ex.request, ex.peer);
    arm_timeout(mid);
  } else {
    ++counters_.timeouts;
    finish(mid, ExchangeState::TIMED_OUT);
  }
}

void CoapEndpoint::finish(std::uint16_t mid, ExchangeState state) {
  auto it = pending_.find(mid);
  if (it == pending_.end()) return;
  it->second.ex.state = state;
  Exchange ex = it->second.ex;
  DoneFn done = std::move(it->second.done);
  pending_.erase(it);
  if (done) done(ex);
}

void CoapEndpoint::fail_pending() {
  while (!pending_.empty()) {
    finish(pending_.begin()->first, ExchangeState::TIMED_OUT);
  }
}

void CoapEndpoint::observe_remote(NodeId server, const std::string& resource,
                                  NotificationHandler on_notification, DoneFn registration_done) {
  CoapMessage req;
  req.kind = CoapKind::CON;
  req.code = CoapCode::GET;
  req.uri_path = resource;
  req.observe = 0;  // register
  req.token = next_token();
  client_observations_[std::string(req.token.begin(), req.token.end())] = std::move(on_notification);
  send_confirmable(std::move(req), server, std::move(registration_done));
}

void CoapEndpoint::serve_resource(const std::string& path, RequestHandler on_request) {
  resources_[path] = std::move(on_request);
  observations_.try_emplace(path);
}

int CoapEndpoint::notify_observers(const std::string& resource, std::vector<std::uint8_t> payload,
                                   DoneFn per_notification_done) {
  auto it = observations_.find(resource);
  if (it == observations_.end()) return 0;
  int emitted = 0;
  for (auto& obs : it->second) {
    if (!obs.active) continue;
    ++obs.last_sequence;
    CoapMessage note;
    note.kind = CoapKind::CON;
    note.code = CoapCode::CONTENT;
    note.token = obs.token;
    note.observe = obs.last_sequence;
    note.payload = payload;
    const NodeId observer = obs.observer;
    auto done = [this, resource, observer, user_done = per_notification_done](const Exchange& ex) {
      if (ex.state != ExchangeState::ACKED) {
        auto oit = observations_.find(resource);
        if (oit != observations_.end()) {
          for (auto& o : oit->second) {
            if (o.observer == observer) o.active = false;
          }
        }
      }
      if (user_done) user_done(ex);
    };
    send_confirmable(std::move(note), obs.observer, std::move(done));
    ++emitted;
  }
  return emitted;
}

std::size_t CoapEndpoint::active_observation_count(const std::string& resource) const {
  auto it = observations_.find(resource);
  if (it == observations_.end()) return 0;
  std::size_t n = 0;
  for (const auto& o : it->second) {
    if (o.active) ++n;
  }
  return n;
}

const std::vector<Observation>& CoapEndpoint::observations(const std::string& resource) const {
  static const std::vector<Observation> kEmpty;
  auto it = observations_.find(resource);
  return it == observations_.end() ? kEmpty : it->second;
}

void CoapEndpoint::remember_reply(NodeId src, std::uint16_t mid, bool rst) {
  // Window: one worst-case exchange span past the most recent arrival.
  dedup_[{src, mid}] = {loop_.now() + expected_time_span(params_), rst};
  if (dedup_.size() > 4096) {
    const SimTime now = loop_.now();
    for (auto d = dedup_.begin(); d != dedup_.end();) {
      d = d->second.expiry <= now ? dedup_.erase(d) : std::next(d);
    }
  }
}

void CoapEndpoint::handle_inbound(const CoapMessage& msg, NodeId src) {
  switch (msg.kind) {
    case CoapKind::ACK: {
      auto it = pending_.find(msg.message_id);
      if (it != pending_.end() && it->second.ex.state == ExchangeState::WAITING &&
          match_ack(it->second.ex.request, msg)) {
        finish(msg.message_id, ExchangeState::ACKED);
      } else {
        ++counters_.stray_acks;
      }
      return;
    }
    case CoapKind::RST: {
      // Peer rejected the exchange; treat as a delivery failure.
      auto it = pending_.find(msg.message_id);
      if (it != pending_.end()) {
        ++counters_.timeouts;
        finish(msg.message_id, ExchangeState::TIMED_OUT);
      }
      return;
    }
    case CoapKind::CON:
    case CoapKind::NON: {
      const bool confirmable = msg.kind == CoapKind::CON;
      if (confirmable) {
        auto it = dedup_.find({src, msg.message_id});
        if (it != dedup_.end() && it->second.expiry > loop_.now()) {
          ++counters_.duplicates_suppressed;
          const bool rst = it->second.replied_rst;
          remember_reply(src, msg.message_id, rst);
          if (transmit_) transmit_(rst ? make_rst(msg) : make_ack(msg), src);
          return;
        }
      }
      const bool rst = msg.code == CoapCode::CONTENT ? handle_notification(msg, src)
                                                     : handle_request(msg, src);
      if (confirmable) remember_reply(src, msg.message_id, rst);
      return;
    }
  }
}

bool CoapEndpoint::handle_request(const CoapMessage& msg, NodeId src) {
  auto res = resources_.find(msg.uri_path);
  if (res == resources_.end()) {
    ++counters_.rst_sent;
    if (transmit_) transmit_(make_rst(msg), src);
    return true;
  }
  if (msg.code == CoapCode::GET && msg.observe.has_value()) {
    auto& obs_list = observations_[msg.uri_path];
    bool refreshed = false;
    for (auto& o : obs_list) {
      if (o.observer == src) {
        o.token = msg.token;
        o.active = true;
        refreshed = true;
      }
    }
    if (!refreshed) {
      obs_list.push_back({msg.uri_path, src, msg.token, 0, true});
    }
  } else {
    ++counters_.delivered;
    if (res->second) res->second(msg, src);
  }
  if (msg.kind == CoapKind::CON && transmit_) transmit_(make_ack(msg), src);
  return false;
}

bool CoapEndpoint::handle_notification(const CoapMessage& msg, NodeId src) {
  auto it = client_observations_.find(std::string(msg.token.begin(), msg.token.end()));
  if (it == client_observations_.end()) {
    ++counters_.rst_sent;
    if (transmit_) transmit_(make_rst(msg), src);
    return true;
  }
  if (msg.kind == CoapKind::CON && transmit_) transmit_(make_ack(msg), src);
  ++counters_.delivered;
  if (it->second) it->second(msg, src);
  return false;
}

}  // namespace iiotsim
