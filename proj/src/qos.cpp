#include "iiotsim/qos.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "iiotsim/messages.hpp"

namespace iiotsim {

std::string to_string(DscpClass c) {
  switch (c) {
    case DscpClass::EF: return "EF";
    case DscpClass::CS6: return "CS6";
    case DscpClass::CS4: return "CS4";
    case DscpClass::AF21: return "AF21";
    case DscpClass::AF22: return "AF22";
    case DscpClass::AF23: return "AF23";
    case DscpClass::BE: return "BE";
  }
  return "?";
}

std::optional<DscpClass> dscp_from_string(const std::string& s) {
  if (s == "EF") return DscpClass::EF;
  if (s == "CS6") return DscpClass::CS6;
  if (s == "CS4") return DscpClass::CS4;
  if (s == "AF21") return DscpClass::AF21;
  if (s == "AF22") return DscpClass::AF22;
  if (s == "AF23") return DscpClass::AF23;
  if (s == "BE") return DscpClass::BE;
  return std::nullopt;
}

std::string to_string(SensorClass c) {
  return "class" + std::to_string(static_cast<int>(c));
}

std::string to_string(QoSGroup g) {
  switch (g) {
    case QoSGroup::G1: return "G1";
    case QoSGroup::G2: return "G2";
    case QoSGroup::G3: return "G3";
    case QoSGroup::CONTROL: return "CONTROL";
    case QoSGroup::BEST_EFFORT: return "BE";
  }
  return "?";
}

std::optional<QoSGroup> group_from_string(const std::string& s) {
  if (s == "G1") return QoSGroup::G1;
  if (s == "G2") return QoSGroup::G2;
  if (s == "G3") return QoSGroup::G3;
  if (s == "CONTROL") return QoSGroup::CONTROL;
  if (s == "BE") return QoSGroup::BEST_EFFORT;
  return std::nullopt;
}

DscpClass dscp_for_class(SensorClass c, DscpClass group3_dscp) {
  switch (group_for_class(c)) {
    case QoSGroup::G1: return DscpClass::EF;
    case QoSGroup::G2: return DscpClass::CS4;
    case QoSGroup::G3: return group3_dscp;
    default: return DscpClass::BE;
  }
}

QoSGroupProfile group_profile(QoSGroup g) {
  switch (g) {
    case QoSGroup::G1:
      return {g, Tolerance::VERY_LOW, Tolerance::VERY_LOW, Tolerance::VERY_LOW,
              TrafficShape::FIXED_SIZE_CONSTANT_RATE};
    case QoSGroup::G2:
      return {g, Tolerance::VERY_LOW, Tolerance::VERY_LOW, Tolerance::LOW,
              TrafficShape::VARIABLE_INELASTIC};
    case QoSGroup::G3:
      return {g, Tolerance::VERY_LOW, Tolerance::LOW, Tolerance::LOW,
              TrafficShape::VARIABLE_INELASTIC};
    case QoSGroup::CONTROL:
      return {g, Tolerance::LOW, Tolerance::LOW, Tolerance::TOLERANT,
              TrafficShape::VARIABLE_INELASTIC};
    default:
      return {g, Tolerance::TOLERANT, Tolerance::TOLERANT, Tolerance::TOLERANT,
              TrafficShape::VARIABLE_INELASTIC};
  }
}

std::string to_string(const FlowSelector& s) {
  switch (s.kind) {
    case SelectorKind::SENSOR_CLASS: return to_string(s.sensor_class);
    case SelectorKind::CONTROL: return "control";
    case SelectorKind::BACKGROUND: return "background";
  }
  return "?";
}

std::optional<FlowSelector> selector_from_string(const std::string& s) {
  if (s == "control") return FlowSelector::control();
  if (s == "background") return FlowSelector::background();
  if (s.rfind("class", 0) == 0 && s.size() == 6 && s[5] >= '0' && s[5] <= '5') {
    return FlowSelector::for_class(static_cast<SensorClass>(s[5] - '0'));
  }
  return std::nullopt;
}

namespace {

int queue_for_group(QoSGroup g) {
  switch (g) {
    case QoSGroup::G1: return 0;
    case QoSGroup::G2: return 1;
    case QoSGroup::G3: return 2;
    case QoSGroup::CONTROL: return 0;  // shares the strict-top queue with EF
    case QoSGroup::BEST_EFFORT: return 3;
  }
  return 3;
}

}  // namespace

QoSPolicy default_policy(std::uint32_t version, DscpClass group3_dscp) {
  QoSPolicy p;
  p.version = version;
  for (int c = 0; c <= 5; ++c) {
    auto sc = static_cast<SensorClass>(c);
    QoSGroup g = group_for_class(sc);
    p.rules.push_back({FlowSelector::for_class(sc), g, dscp_for_class(sc, group3_dscp),
                       queue_for_group(g)});
  }
  p.rules.push_back({FlowSelector::control(), QoSGroup::CONTROL, DscpClass::CS6,
                     queue_for_group(QoSGroup::CONTROL)});
  p.rules.push_back({FlowSelector::background(), QoSGroup::BEST_EFFORT, DscpClass::BE, 3});
  return p;
}

std::vector<std::string> validate(const QoSPolicy& policy) {
  std::vector<std::string> violations;
  std::set<std::string> seen;
  bool has_control = false;
  bool has_background = false;

  for (const auto& r : policy.rules) {
    const std::string sel = to_string(r.selector);
    if (!seen.insert(sel).second) {
      violations.push_back("duplicate selector: " + sel);
    }
    if (r.queue_id < 0 || r.queue_id > 3) {
      violations.push_back("queue_id out of range for selector " + sel);
      continue;
    }
    switch (r.selector.kind) {
      case SelectorKind::CONTROL:
        has_control = true;
        if (r.dscp != DscpClass::CS6) violations.push_back("CONTROL must map to CS6");
        if (r.group != QoSGroup::CONTROL) violations.push_back("CONTROL selector must use the CONTROL group");
        if (r.queue_id != queue_for_group(QoSGroup::CONTROL)) {
          violations.push_back("CONTROL must use queue " +
                               std::to_string(queue_for_group(QoSGroup::CONTROL)));
        }
        break;
      case SelectorKind::BACKGROUND:
        has_background = true;
        if (r.dscp != DscpClass::BE) violations.push_back("BACKGROUND must map to BE");
        if (r.queue_id != 3) violations.push_back("BACKGROUND must use queue 3");
        if (r.group != QoSGroup::BEST_EFFORT) violations.push_back("BACKGROUND selector must use the BE group");
        break;
      case SelectorKind::SENSOR_CLASS: {
        QoSGroup expect = group_for_class(r.selector.sensor_class);
        if (r.group != expect) {
          violations.push_back(sel + " must belong to group " + to_string(expect));
        }
        if (r.queue_id != queue_for_group(r.group)) {
          violations.push_back(sel + " queue_id must be " + std::to_string(queue_for_group(r.group)) +
                               " for group " + to_string(r.group));
        }
        break;
      }
    }
  }
  if (!has_control) violations.push_back("missing CONTROL rule");
  if (!has_background) violations.push_back("missing BACKGROUND rule");
  return violations;
}

int classify_dscp(DscpClass mark, const QoSPolicy& policy) {
  for (const auto& r : policy.rules) {
    if (r.dscp == mark) return r.queue_id;
  }
  return 3;
}

int classify(const NetPacket& packet, const QoSPolicy& policy) {
  return classify_dscp(packet.dscp, policy);
}

DscpClass mark_for(const FlowSelector& sel, const QoSPolicy& policy) {
  for (const auto& r : policy.rules) {
    if (r.selector == sel) return r.dscp;
  }
  return DscpClass::BE;
}

std::string policy_to_json(const QoSPolicy& policy) {
  nlohmann::json j;
  j["v"] = 1;
  j["version"] = policy.version;
  auto rules = nlohmann::json::array();
  for (const auto& r : policy.rules) {
    rules.push_back({{"selector", to_string(r.selector)},
                     {"group", to_string(r.group)},
                     {"dscp", to_string(r.dscp)},
                     {"queue", r.queue_id}});
  }
  j["rules"] = rules;
  return j.dump();
}

QoSPolicy policy_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  if (j.value("v", 0) != 1) throw std::runtime_error("unsupported policy schema version");
  QoSPolicy p;
  p.version = j.at("version").get<std::uint32_t>();
  for (const auto& rj : j.at("rules")) {
    PolicyRule r;
    auto sel = selector_from_string(rj.at("selector").get<std::string>());
    if (!sel) throw std::runtime_error("bad selector: " + rj.at("selector").get<std::string>());
    r.selector = *sel;
    auto grp = group_from_string(rj.at("group").get<std::string>());
    if (!grp) throw std::runtime_error("bad group: " + rj.at("group").get<std::string>());
    r.group = *grp;
    auto dscp = dscp_from_string(rj.at("dscp").get<std::string>());
    if (!dscp) throw std::runtime_error("bad dscp: " + rj.at("dscp").get<std::string>());
    r.dscp = *dscp;
    r.queue_id = rj.at("queue").get<int>();
    p.rules.push_back(r);
  }
  return p;
}

}  // namespace iiotsim
