#include "iiotsim/tdma.hpp"

#include <algorithm>
#include <cstring>
#include <set>
#include <sstream>

namespace iiotsim {

std::string to_string(SensorKind k) {
  switch (k) {
    case SensorKind::TEMPERATURE: return "temperature";
    case SensorKind::PRESSURE: return "pressure";
    case SensorKind::MOTOR: return "motor";
    case SensorKind::VALVE: return "valve";
    case SensorKind::GENERIC: return "generic";
  }
  return "?";
}

IntervalRange interval_range(SensorClass c) {
  switch (c) {
    case SensorClass::Class0:
    case SensorClass::Class1: return {msec(10), msec(250)};
    case SensorClass::Class2:
    case SensorClass::Class3: return {msec(10), msec(500)};
    case SensorClass::Class4:
    case SensorClass::Class5: return {sec(1), sec(86400)};
  }
  return {msec(1), sec(86400)};
}

std::vector<std::string> validate(const SensorSpec& spec) {
  std::vector<std::string> violations;
  if (spec.qos_group != group_for_class(spec.isa_class)) {
    violations.push_back(to_string(spec.isa_class) + " must map to group " +
                         to_string(group_for_class(spec.isa_class)));
  }
  const auto range = interval_range(spec.isa_class);
  if (spec.update_interval < range.min || spec.update_interval > range.max) {
    std::ostringstream os;
    os << "update_interval " << to_ms(spec.update_interval) << " ms outside ["
       << to_ms(range.min) << ", " << to_ms(range.max) << "] ms for " << to_string(spec.isa_class);
    violations.push_back(os.str());
  }
  return violations;
}

SensorSpec motor_sensor_spec() {
  return {SensorClass::Class1, SensorKind::MOTOR, msec(50), QoSGroup::G1};
}

SensorSpec pressure_sensor_spec() {
  return {SensorClass::Class2, SensorKind::PRESSURE, msec(500), QoSGroup::G2};
}

SensorSpec temperature_sensor_spec() {
  return {SensorClass::Class4, SensorKind::TEMPERATURE, sec(1), QoSGroup::G3};
}

Superframe build_superframe(std::vector<FieldDeviceCfg>& devices, Duration slot_length) {
  if (devices.empty()) throw ScheduleError("no devices to schedule");
  if (slot_length <= 0) throw ScheduleError("slot_length must be positive");

  std::set<std::uint32_t> seqs;
  for (const auto& d : devices) {
    if (!seqs.insert(d.seq_number).second) {
      throw ScheduleError("duplicate seq_number " + std::to_string(d.seq_number));
    }
  }

  std::vector<FieldDeviceCfg*> order;
  order.reserve(devices.size());
  for (auto& d : devices) order.push_back(&d);
  std::sort(order.begin(), order.end(), [](const FieldDeviceCfg* a, const FieldDeviceCfg* b) {
    if (a->spec.qos_group != b->spec.qos_group) return a->spec.qos_group < b->spec.qos_group;
    return a->seq_number < b->seq_number;
  });

  Superframe frame;
  frame.slot_length = slot_length;
  frame.entries.reserve(order.size());
  int slot = 0;
  for (auto* d : order) {
    d->slot_index = slot;
    frame.entries.push_back({d->device_id, d->seq_number, d->spec.qos_group, slot,
                             slot * slot_length});
    ++slot;
  }
  return frame;
}

SimTime next_publish_time(Duration slot_offset, Duration update_interval, SimTime now) {
  if (now <= slot_offset) return slot_offset;
  const SimTime since = now - slot_offset;
  const SimTime k = (since + update_interval - 1) / update_interval;  // ceil
  return slot_offset + k * update_interval;
}

SimTime next_publish_time(const FieldDeviceCfg& device, Duration slot_length, SimTime now) {
  return next_publish_time(device.slot_index * slot_length, device.spec.update_interval, now);
}

std::string schedule_csv(const Superframe& frame, const std::vector<FieldDeviceCfg>& devices) {
  std::ostringstream os;
  os << "device_id,kind,class,group,slot_index,slot_offset_ms\n";
  for (const auto& e : frame.entries) {
    const FieldDeviceCfg* dev = nullptr;
    for (const auto& d : devices) {
      if (d.device_id == e.device_id) {
        dev = &d;
        break;
      }
    }
    os << e.device_id << ',' << (dev ? to_string(dev->spec.kind) : "?") << ','
       << (dev ? to_string(dev->spec.isa_class) : "?") << ',' << to_string(e.group) << ','
       << e.slot_index << ',' << to_ms(e.slot_offset) << '\n';
  }
  return os.str();
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct WalkBase {
  double base;
  double step;
};

WalkBase walk_base(SensorKind kind) {
  switch (kind) {
    case SensorKind::TEMPERATURE: return {80.0, 0.5};   // deg C
    case SensorKind::PRESSURE: return {5.0, 0.05};      // bar
    case SensorKind::MOTOR: return {1500.0, 5.0};       // rpm
    case SensorKind::VALVE: return {1.0, 0.01};         // position
    case SensorKind::GENERIC: return {0.0, 1.0};
  }
  return {0.0, 1.0};
}

}  // namespace

PvWalk::PvWalk(const std::string& device_id, SensorKind kind, std::uint64_t scenario_seed)
    : device_id_(device_id), rng_(mix(scenario_seed ^ fnv1a(device_id))) {
  const auto b = walk_base(kind);
  value_ = b.base;
  step_ = b.step;
}

ProcessValue PvWalk::generate(SimTime t) {
  std::uniform_real_distribution<double> dist(-step_, step_);
  value_ += dist(rng_);
  return {device_id_, value_, t};
}

std::vector<std::uint8_t> encode_pv_payload(std::uint32_t device_index, const ProcessValue& pv) {
  std::vector<std::uint8_t> out(24, 0);
  std::memcpy(out.data(), &device_index, 4);
  std::memcpy(out.data() + 4, &pv.value, 8);
  std::memcpy(out.data() + 12, &pv.generated_at, 8);
  return out;
}

bool decode_pv_payload(const std::vector<std::uint8_t>& payload, DecodedPv& out) {
  if (payload.size() != 24) return false;
  std::memcpy(&out.device_index, payload.data(), 4);
  std::memcpy(&out.value, payload.data() + 4, 8);
  std::memcpy(&out.generated_at, payload.data() + 12, 8);
  return true;
}

}  // namespace iiotsim
