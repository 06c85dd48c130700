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

namespace cflab {

inline constexpr int kMaxMcs = 28;
inline constexpr std::size_t kSubcarriersPerPrb = 12;
inline constexpr std::size_t kDataSymbolsPerSlot = 12;  // 14 minus DMRS and control
inline constexpr double kSlotSeconds = 0.0005;          // 30 kHz SCS
inline constexpr double kUlAnchorMbps = 19.0;
inline constexpr std::size_t kAnchorPrbs = 51;
inline constexpr double kDefaultUlFraction = 3.0 / 10.0;

struct McsRate {
  int bits_per_symbol;
  double code_rate;
  double spectral_efficiency() const { return bits_per_symbol * code_rate; }
};

/// 64QAM MCS table (index 0..28).
McsRate mcs_to_rate(int mcs);

/// Minimum SINR for mcs: a 1 dB staircase from -6 dB (mcs 0) to 22 dB (mcs 28).
double mcs_sinr_threshold_db(int mcs);

/// Largest mcs whose threshold is <= sinr_db, floored at 0.
int sinr_to_mcs(double sinr_db, int max_mcs = kMaxMcs);

/// Raw coded bits carried by one PRB in one slot.
double bits_per_prb(int mcs);

/// Overhead factor calibrated so 51 PRBs at mcs 28 over the 3/10 UL share
/// give exactly 19 Mbps.
double overhead_factor();

/// Delivered bits of a transport block of n_re PRBs (overhead applied).
double transport_block_bits(std::size_t n_re, int mcs);

double ue_throughput_mbps(std::size_t n_re, int mcs, double tdd_ul_fraction = kDefaultUlFraction);

}  // namespace cflab
