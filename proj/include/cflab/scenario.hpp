/*
 * Copyright (c) 2026 The cflab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cflab/topology.hpp"

namespace cflab {

enum class TrafficKind { FullBuffer, Rate };

struct UeSpec {
  Rnti rnti = 0;
  Point position;
  double tx_power_dbm = 23.0;
  TrafficKind traffic = TrafficKind::FullBuffer;
  double rate_mbps = 0.0;  // only for TrafficKind::Rate
};

struct TddConfig {
  std::size_t period_slots = 10;
  std::size_t ul_slots = 3;
  std::size_t dl_slots = 6;
  double ul_fraction() const { return static_cast<double>(ul_slots) / static_cast<double>(period_slots); }
  // UL slots sit at the end of the period (DL, special, UL).
  bool is_ul(uint64_t slot) const { return slot % period_slots >= period_slots - ul_slots; }
};

struct FaultEvent {
  double time_s = 0.0;
  std::size_t antenna = 0;
  bool on = true;  // true = disconnect
};

struct XappConfig {
  bool enabled = false;
  std::string model_path;
};

struct ScenarioConfig {
  RuAntennaArray array = RuAntennaArray::lab_default();
  std::vector<UeSpec> ues;
  double bandwidth_mhz = 20.0;
  double scs_khz = 30.0;
  std::size_t n_re = 51;
  TddConfig tdd;
  int max_ul_mcs = 28;
  uint64_t fading_block_ms = 1000;
  double est_snr_db = std::numeric_limits<double>::infinity();
  double la_backoff_db = 1.0;
  std::vector<FaultEvent> fault_schedule;
  uint64_t duration_s = 60;
  uint64_t seed = 1;
  XappConfig xapp;

  /// Lab layout, two full-buffer UEs, 51 PRBs, 3 UL of 10 slots.
  static ScenarioConfig lab_default();
};

inline constexpr Rnti kDefaultRnti1 = 0x4601;
inline constexpr Rnti kDefaultRnti2 = 0x4602;

/// Lists every offending field as "path: reason"; empty when valid.
std::vector<std::string> validate(const ScenarioConfig& cfg);

class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Parses and validates. Missing fields take lab_default() values; unknown
/// fields are errors. A relative xapp.model_path is resolved against
/// base_dir when one is given.
ScenarioConfig parse_scenario(std::string_view json_text, const std::string& base_dir = "");
ScenarioConfig load_scenario(const std::string& path);
std::string scenario_to_json(const ScenarioConfig& cfg);

/// PRB count for a 30 kHz carrier of the given bandwidth, 0 if unsupported.
std::size_t prbs_for_bandwidth(double bandwidth_mhz, double scs_khz);

}  // namespace cflab
