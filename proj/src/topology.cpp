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

#include "cflab/topology.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cflab/rng.hpp"

namespace cflab {

double dbm_to_watts(double dbm) { return std::pow(10.0, dbm / 10.0) / 1000.0; }

double watts_to_dbm(double w) { return 10.0 * std::log10(w * 1000.0); }

void RuAntennaArray::validate() const {
  if (num_antennas() != kNumAntennas)
    throw std::invalid_argument("antenna array must have " + std::to_string(kNumAntennas) +
                                " antennas, got " + std::to_string(num_antennas()));
  if (path_loss.d0_m <= 0.0) throw std::invalid_argument("path loss reference distance must be > 0");
}

RuAntennaArray RuAntennaArray::lab_default() {
  RuAntennaArray a;
  a.ru_positions = {{2.5, 2.5}, {7.5, 2.5}, {2.5, 7.5}, {7.5, 7.5}};
  return a;
}

ChannelState::ChannelState(const AntennaVector& gain, double noise_var_w) : gain_(gain), h_(gain) {
  if (!(noise_var_w > 0.0)) throw std::invalid_argument("noise variance must be positive");
  noise_var_.fill(noise_var_w);
  fault_.fill(false);
}

void ChannelState::set_fault(std::size_t antenna, bool faulted) {
  if (antenna >= kNumAntennas) throw std::out_of_range("antenna index " + std::to_string(antenna));
  fault_[antenna] = faulted;
  remask();
}

void ChannelState::remask() {
  for (std::size_t a = 0; a < kNumAntennas; ++a) h_[a] = fault_[a] ? Cplx{} : gain_[a];
}

double path_loss_db(double distance_m, const PathLossModel& model) {
  if (!(distance_m > 0.0)) throw std::domain_error("path loss needs a positive distance");
  return model.pl0_db + 10.0 * model.exponent * std::log10(distance_m / model.d0_m);
}

double antenna_distance_m(const UeNode& ue, const RuAntennaArray& array, std::size_t antenna) {
  const Point& ru = array.ru_positions.at(array.ru_of(antenna));
  const double dx = ue.position.x - ru.x;
  const double dy = ue.position.y - ru.y;
  return std::sqrt(dx * dx + dy * dy + array.height_offset_m * array.height_offset_m);
}

ChannelState draw_channel(const UeNode& ue, const RuAntennaArray& array, uint64_t fading_seed) {
  array.validate();
  Rng rng(fading_seed);
  AntennaVector gain{};
  for (std::size_t a = 0; a < kNumAntennas; ++a) {
    const double pl = path_loss_db(antenna_distance_m(ue, array, a), array.path_loss);
    gain[a] = rng.complex_normal() * std::sqrt(std::pow(10.0, -pl / 10.0));
  }
  return ChannelState(gain, dbm_to_watts(array.noise_floor_dbm));
}

ChannelState apply_fault(const ChannelState& channel, std::size_t antenna, bool faulted) {
  ChannelState out = channel;
  out.set_fault(antenna, faulted);
  return out;
}

}  // namespace cflab
