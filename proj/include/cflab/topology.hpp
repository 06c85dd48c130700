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

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace cflab {

inline constexpr std::size_t kNumAntennas = 8;
inline constexpr double kFaultFloorDbm = -160.0;

using Rnti = uint16_t;
using Cplx = std::complex<double>;
using AntennaVector = std::array<Cplx, kNumAntennas>;

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

// Lab UE placement used by the default scenario.
inline constexpr Point kLabUePositions[2] = {{3.0, 2.5}, {4.0, 1.0}};

struct PathLossModel {
  double pl0_db = 40.0;
  double d0_m = 1.0;
  double exponent = 2.2;
};

/// RU layout. Antenna `a` belongs to RU `a / antennas_per_ru`.
struct RuAntennaArray {
  std::vector<Point> ru_positions;
  std::size_t antennas_per_ru = 2;
  double ru_output_power_dbm = 15.0;
  // Vertical RU-UE separation added to the planar distance.
  double height_offset_m = 2.0;
  // Effective receiver noise plus impairment floor per antenna.
  double noise_floor_dbm = -46.0;
  PathLossModel path_loss;

  std::size_t num_antennas() const { return ru_positions.size() * antennas_per_ru; }
  std::size_t ru_of(std::size_t antenna) const { return antenna / antennas_per_ru; }
  void validate() const;

  /// 4 RUs x 2 antennas at the quarter points of a 10 m x 10 m lab.
  static RuAntennaArray lab_default();
};

struct UeNode {
  Rnti rnti = 0;
  Point position;
  double tx_power_dbm = 23.0;
  uint64_t buffer_bytes = 0;
};

/// Per-UE flat-fading channel. `h` is the masked gain; the unmasked draw is
/// kept so a reconnect restores it exactly.
class ChannelState {
 public:
  ChannelState() = default;
  ChannelState(const AntennaVector& gain, double noise_var_w);

  const AntennaVector& h() const { return h_; }
  const AntennaVector& unfaulted_gain() const { return gain_; }
  const std::array<double, kNumAntennas>& noise_var() const { return noise_var_; }
  const std::array<bool, kNumAntennas>& fault_mask() const { return fault_; }
  bool faulted(std::size_t a) const { return fault_.at(a); }

  void set_fault(std::size_t antenna, bool faulted);

  bool operator==(const ChannelState&) const = default;

 private:
  void remask();

  AntennaVector gain_{};
  AntennaVector h_{};
  std::array<double, kNumAntennas> noise_var_{};
  std::array<bool, kNumAntennas> fault_{};
};

double dbm_to_watts(double dbm);
double watts_to_dbm(double w);

/// Log-distance path loss in dB. Throws std::domain_error for d <= 0.
double path_loss_db(double distance_m, const PathLossModel& model = {});

double antenna_distance_m(const UeNode& ue, const RuAntennaArray& array, std::size_t antenna);

ChannelState draw_channel(const UeNode& ue, const RuAntennaArray& array, uint64_t fading_seed);

/// Returns a copy with the fault bit for `antenna` set or cleared.
/// Throws std::out_of_range for antenna >= 8.
ChannelState apply_fault(const ChannelState& channel, std::size_t antenna, bool faulted);

}  // namespace cflab
