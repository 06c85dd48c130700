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

#include "cflab/mcs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cflab {

namespace {

struct McsRow {
  int qm;
  int rate_x1024;
};

constexpr std::array<McsRow, kMaxMcs + 1> kMcsTable{{
    {2, 120}, {2, 157}, {2, 193}, {2, 251}, {2, 308}, {2, 379}, {2, 449}, {2, 526},
    {2, 602}, {2, 679}, {4, 340}, {4, 378}, {4, 434}, {4, 490}, {4, 553}, {4, 616},
    {4, 658}, {6, 438}, {6, 466}, {6, 517}, {6, 567}, {6, 616}, {6, 666}, {6, 719},
    {6, 772}, {6, 822}, {6, 873}, {6, 910}, {6, 948},
}};

void check_mcs(int mcs) {
  if (mcs < 0 || mcs > kMaxMcs) throw std::out_of_range("mcs " + std::to_string(mcs));
}

}  // namespace

McsRate mcs_to_rate(int mcs) {
  check_mcs(mcs);
  const auto& row = kMcsTable[static_cast<std::size_t>(mcs)];
  return {row.qm, row.rate_x1024 / 1024.0};
}

double mcs_sinr_threshold_db(int mcs) {
  check_mcs(mcs);
  return -6.0 + static_cast<double>(mcs);
}

int sinr_to_mcs(double sinr_db, int max_mcs) {
  max_mcs = std::clamp(max_mcs, 0, kMaxMcs);
  if (std::isnan(sinr_db)) return 0;
  const double steps = std::floor(sinr_db + 6.0);
  if (steps < 0.0) return 0;
  return static_cast<int>(std::min<double>(steps, max_mcs));
}

double bits_per_prb(int mcs) {
  return static_cast<double>(kSubcarriersPerPrb * kDataSymbolsPerSlot) *
         mcs_to_rate(mcs).spectral_efficiency();
}

double overhead_factor() {
  static const double eta = kUlAnchorMbps * 1e6 * kSlotSeconds /
                            (static_cast<double>(kAnchorPrbs) * bits_per_prb(kMaxMcs) * kDefaultUlFraction);
  return eta;
}

double transport_block_bits(std::size_t n_re, int mcs) {
  return static_cast<double>(n_re) * bits_per_prb(mcs) * overhead_factor();
}

double ue_throughput_mbps(std::size_t n_re, int mcs, double tdd_ul_fraction) {
  if (n_re > kAnchorPrbs) throw std::out_of_range("n_re exceeds the 51-PRB grid");
  return transport_block_bits(n_re, mcs) / kSlotSeconds * tdd_ul_fraction * 1e-6;
}

}  // namespace cflab
