#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace iiotsim {

struct NetPacket;  // messages.hpp

// ---------------------------------------------------------------------------
// DiffServ code points
// ---------------------------------------------------------------------------

enum class DscpClass : std::uint8_t { EF, CS6, CS4, AF21, AF22, AF23, BE };

/// 6-bit code point per the standard DiffServ assignments.
constexpr int dscp_code_point(DscpClass c) {
  switch (c) {
    case DscpClass::EF: return 46;
    case DscpClass::CS6: return 48;
    case DscpClass::CS4: return 32;
    case DscpClass::AF21: return 18;
    case DscpClass::AF22: return 20;
    case DscpClass::AF23: return 22;
    case DscpClass::BE: return 0;
  }
  return 0;
}

std::string to_string(DscpClass c);
std::optional<DscpClass> dscp_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Sensor classes and QoS groups
// ---------------------------------------------------------------------------

/// Industrial sensor criticality tiers, Class0 (most critical) .. Class5.
enum class SensorClass : std::uint8_t {
  Class0 = 0,
  Class1,
  Class2,
  Class3,
  Class4,
  Class5,
};

/// Three-way grouping of sensor classes by loss/delay/jitter tolerance,
/// plus the network-control group and plain best effort.
enum class QoSGroup : std::uint8_t { G1, G2, G3, CONTROL, BEST_EFFORT };

std::string to_string(SensorClass c);
std::string to_string(QoSGroup g);
std::optional<QoSGroup> group_from_string(const std::string& s);

/// Class0-1 -> G1, Class2-3 -> G2, Class4-5 -> G3.
constexpr QoSGroup group_for_class(SensorClass c) {
  switch (c) {
    case SensorClass::Class0:
    case SensorClass::Class1: return QoSGroup::G1;
    case SensorClass::Class2:
    case SensorClass::Class3: return QoSGroup::G2;
    case SensorClass::Class4:
    case SensorClass::Class5: return QoSGroup::G3;
  }
  return QoSGroup::G3;
}

/// Default code point per sensor class: G1 -> EF, G2 -> CS4, G3 -> the
/// configurable group-3 choice (AF21 unless a deployment prefers CS4/AF22/23).
DscpClass dscp_for_class(SensorClass c, DscpClass group3_dscp = DscpClass::AF21);

// ---------------------------------------------------------------------------
// Group traffic profiles
// ---------------------------------------------------------------------------

enum class Tolerance : std::uint8_t { VERY_LOW, LOW, TOLERANT };
enum class TrafficShape : std::uint8_t { FIXED_SIZE_CONSTANT_RATE, VARIABLE_INELASTIC };

struct QoSGroupProfile {
  QoSGroup group;
  Tolerance loss_tolerance;
  Tolerance delay_tolerance;
  Tolerance jitter_tolerance;
  TrafficShape traffic;
};

/// Profile table for G1/G2/G3/CONTROL. BEST_EFFORT has no profile.
QoSGroupProfile group_profile(QoSGroup g);

// ---------------------------------------------------------------------------
// Policy rules
// ---------------------------------------------------------------------------

enum class SelectorKind : std::uint8_t { SENSOR_CLASS, CONTROL, BACKGROUND };

struct FlowSelector {
  SelectorKind kind = SelectorKind::SENSOR_CLASS;
  SensorClass sensor_class = SensorClass::Class0;  // valid when kind == SENSOR_CLASS

  static FlowSelector for_class(SensorClass c) { return {SelectorKind::SENSOR_CLASS, c}; }
  static FlowSelector control() { return {SelectorKind::CONTROL, SensorClass::Class0}; }
  static FlowSelector background() { return {SelectorKind::BACKGROUND, SensorClass::Class0}; }

  bool operator==(const FlowSelector& o) const {
    return kind == o.kind && (kind != SelectorKind::SENSOR_CLASS || sensor_class == o.sensor_class);
  }
};

std::string to_string(const FlowSelector& s);
std::optional<FlowSelector> selector_from_string(const std::string& s);

struct PolicyRule {
  FlowSelector selector;
  QoSGroup group = QoSGroup::BEST_EFFORT;
  DscpClass dscp = DscpClass::BE;
  int queue_id = 3;  // 0..3
};

/// Ordered rule set distributed to gateways and installed on switches.
/// Immutable once validated.
struct QoSPolicy {
  std::uint32_t version = 1;
  std::vector<PolicyRule> rules;
};

/// The default policy: one rule per sensor class plus CONTROL and BACKGROUND.
/// CONTROL shares the strict-top queue with EF traffic.
QoSPolicy default_policy(std::uint32_t version = 1, DscpClass group3_dscp = DscpClass::AF21);

/// Checks every policy invariant and returns all violations, not just the
/// first. An empty result means the policy is valid.
std::vector<std::string> validate(const QoSPolicy& policy);

/// Queue selection for a marked packet: first rule whose code point matches
/// the packet's mark; unmatched packets go to queue 3 (best effort).
int classify(const NetPacket& packet, const QoSPolicy& policy);
int classify_dscp(DscpClass mark, const QoSPolicy& policy);

/// Marking lookup used by senders: selector -> code point under a policy.
/// Returns BE for selectors the policy does not cover.
DscpClass mark_for(const FlowSelector& sel, const QoSPolicy& policy);

// JSON form: {"v":1, "version":n, "rules":[{"selector":..., "group":...,
// "dscp":..., "queue":...}]}
std::string policy_to_json(const QoSPolicy& policy);
QoSPolicy policy_from_json(const std::string& text);  // throws std::runtime_error

}  // namespace iiotsim
