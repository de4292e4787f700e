#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "iiotsim/qos.hpp"
#include "iiotsim/time.hpp"

namespace iiotsim {

// ---------------------------------------------------------------------------
// Sensor population
// ---------------------------------------------------------------------------

enum class SensorKind : std::uint8_t { TEMPERATURE, PRESSURE, MOTOR, VALVE, GENERIC };
std::string to_string(SensorKind k);

struct SensorSpec {
  SensorClass isa_class = SensorClass::Class5;
  SensorKind kind = SensorKind::GENERIC;
  Duration update_interval = sec(1);
  QoSGroup qos_group = QoSGroup::G3;
};

/// Update-interval bounds per sensor class (e.g. Class1 in [10, 250] ms).
struct IntervalRange {
  Duration min;
  Duration max;
};
IntervalRange interval_range(SensorClass c);

/// Checks the class/group pairing and the update-interval range. Empty
/// result means valid.
std::vector<std::string> validate(const SensorSpec& spec);

/// The experiment population: motor = Class1 @ 50 ms, pressure = Class2 @
/// 500 ms, temperature = Class4 @ 1 s.
SensorSpec motor_sensor_spec();
SensorSpec pressure_sensor_spec();
SensorSpec temperature_sensor_spec();

struct FieldDeviceCfg {
  std::string device_id;
  std::uint32_t seq_number = 0;  // site-unique
  SensorSpec spec;
  int slot_index = -1;  // assigned by the scheduler
};

struct ProcessValue {
  std::string device_id;
  double value = 0.0;
  SimTime generated_at = 0;
};

// ---------------------------------------------------------------------------
// Superframe scheduling
// ---------------------------------------------------------------------------

struct SuperframeEntry {
  std::string device_id;
  std::uint32_t seq_number = 0;
  QoSGroup group = QoSGroup::G3;
  int slot_index = 0;
  Duration slot_offset = 0;
};

struct Superframe {
  Duration slot_length = msec(10);
  std::vector<SuperframeEntry> entries;  // in slot order
  Duration period() const { return slot_length * static_cast<Duration>(entries.size()); }
};

struct ScheduleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Prioritized slot assignment: devices ordered by (QoS group ascending,
/// sequence number ascending); slot_index = position, slot start = index *
/// slot_length. Also writes slot_index back into `devices`. Throws
/// ScheduleError on duplicate sequence numbers or an empty device list.
Superframe build_superframe(std::vector<FieldDeviceCfg>& devices, Duration slot_length = msec(10));

/// Smallest publish instant >= now on the device's grid: slot_offset +
/// k * update_interval for integer k >= 0.
SimTime next_publish_time(Duration slot_offset, Duration update_interval, SimTime now);
SimTime next_publish_time(const FieldDeviceCfg& device, Duration slot_length, SimTime now);

/// Schedule CSV (columns device_id, kind, class, group, slot_index,
/// slot_offset_ms), one row per device in slot order.
std::string schedule_csv(const Superframe& frame, const std::vector<FieldDeviceCfg>& devices);

// ---------------------------------------------------------------------------
// Synthetic process values
// ---------------------------------------------------------------------------

/// Deterministic pseudo-random walk seeded by (device_id, scenario seed).
/// Two walks built with the same arguments produce identical streams.
class PvWalk {
 public:
  PvWalk(const std::string& device_id, SensorKind kind, std::uint64_t scenario_seed);

  ProcessValue generate(SimTime t);
  double current() const { return value_; }

 private:
  std::string device_id_;
  std::mt19937_64 rng_;
  double value_;
  double step_;
};

// 24-byte process-value payload carried inside notification CONs.
std::vector<std::uint8_t> encode_pv_payload(std::uint32_t device_index, const ProcessValue& pv);
struct DecodedPv {
  std::uint32_t device_index = 0;
  double value = 0.0;
  SimTime generated_at = 0;
};
bool decode_pv_payload(const std::vector<std::uint8_t>& payload, DecodedPv& out);

}  // namespace iiotsim
