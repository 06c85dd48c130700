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

// Property-test corpus: random messages of every variant.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cflab/e2.hpp"
#include "cflab/rng.hpp"

namespace cflab::testing {

inline double any_double(Rng& rng) {
  switch (rng.below(4)) {
    case 0: return static_cast<double>(rng.below(1000));
    case 1: return -160.0 + 200.0 * rng.uniform();
    case 2: return (rng.uniform() - 0.5) * 1e12;
    default: return std::ldexp(rng.uniform(), static_cast<int>(rng.below(80)) - 60);
  }
}

inline std::string any_string(Rng& rng) {
  // printable ASCII, quotes, backslashes, control chars and some UTF-8
  static const std::vector<std::string> pieces{"a", "Z", "9", " ", "\"", "\\", "\n", "\t", "\x01", "é", "µs", "{", "]"};
  std::string s;
  const std::size_t n = rng.below(12);
  for (std::size_t i = 0; i < n; ++i) s += pieces[rng.below(pieces.size())];
  return s;
}

inline AntennaMask any_mask(Rng& rng) { return AntennaMask(std::bitset<kNumAntennas>(rng.below(256))); }

inline std::vector<std::string> any_metric_names(Rng& rng) {
  std::vector<std::string> out;
  const auto& sup = e2::supported_metrics();
  const std::size_t n = rng.below(sup.size() + 2);
  for (std::size_t i = 0; i < n; ++i) out.push_back(rng.below(5) == 0 ? any_string(rng) : sup[rng.below(sup.size())]);
  return out;
}

inline e2::KpmRecord any_record(Rng& rng) {
  e2::KpmRecord r;
  r.ue_id = static_cast<Rnti>(rng.below(65536));
  for (const auto& name : any_metric_names(rng)) {
    if (r.find(name)) continue;  // names are map keys on the wire
    if (e2::is_port_metric(name)) {
      std::vector<double> v(kNumAntennas);
      for (auto& x : v) x = any_double(rng);
      r.metrics.emplace_back(name, v);
    } else {
      r.metrics.emplace_back(name, any_double(rng));
    }
  }
  return r;
}

inline e2::Message random_message(Rng& rng) {
  using namespace e2;
  switch (rng.below(10)) {
    case 0:
      return SubscriptionRequest{rng.next() >> 11, static_cast<int>(1 + rng.below(5)), 1 + rng.below(10000),
                                 any_metric_names(rng)};
    case 1: return SubscriptionResponse{rng.below(1u << 20), rng.below(2) == 1, any_metric_names(rng)};
    case 2: {
      Indication ind{rng.below(1u << 20), rng.next() >> 11, {}};
      const std::size_t n = rng.below(5);
      for (std::size_t i = 0; i < n; ++i) ind.records.push_back(any_record(rng));
      return ind;
    }
    case 3:
      return ControlRequest{rng.next() >> 11, static_cast<uint32_t>(rng.below(65536)),
                            static_cast<Rnti>(rng.below(65536)), any_mask(rng)};
    case 4: return ControlAck{rng.below(1u << 30), rng.below(2) == 1, rng.below(2) == 1, any_mask(rng)};
    case 5: return UiFault{rng.below(kNumAntennas), rng.below(2) == 1};
    case 6: return UiMoveUe{static_cast<Rnti>(rng.below(65536)), any_double(rng), any_double(rng)};
    case 7: return UiSnapshotReq{};
    case 8: {
      UiSnapshot s;
      s.time_s = any_double(rng);
      const std::size_t n = rng.below(3);
      for (std::size_t i = 0; i < n; ++i) {
        UeSnapshot u{static_cast<Rnti>(rng.below(65536)), any_double(rng), any_mask(rng), {}, {}};
        for (std::size_t a = 0; a < kNumAntennas; ++a) {
          u.snr_db.push_back(any_double(rng));
          u.rsrp_dbm.push_back(any_double(rng));
        }
        s.ues.push_back(u);
      }
      s.total_thpt_mbps = any_double(rng);
      s.dl_capacity_mbps = any_double(rng);
      s.active_antennas = rng.below(9);
      s.power_w = any_double(rng);
      s.ptime_us = any_double(rng);
      s.actions = rng.below(100);
      for (std::size_t a = 0; a < kNumAntennas; ++a) s.faults.push_back(rng.below(2) == 1);
      const std::size_t d = rng.below(4);
      for (std::size_t i = 0; i < d; ++i)
        s.decisions.push_back({any_double(rng), static_cast<Rnti>(rng.below(65536)), rng.below(kNumAntennas),
                               rng.below(2) == 1, any_mask(rng), rng.below(2) == 1});
      return s;
    }
    default: return ErrorMsg{any_string(rng)};
  }
}

}  // namespace cflab::testing
