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

#include "cflab/topology.hpp"

namespace cflab {

/// Half-open range [start, start + length) on the slot's RE (PRB) axis.
struct ReRange {
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t end() const { return start + length; }
  bool contains(const ReRange& o) const { return o.start >= start && o.end() <= end(); }
  bool operator==(const ReRange&) const = default;
};

/// DCI antenna_ports values with working channel estimation, and their DMRS
/// ports (value 2 -> port 0, 4 -> port 2, 5 -> port 3).
inline constexpr int kAntennaPortsSu = 2;
inline constexpr int kAntennaPortsMu = 4;
int dmrs_port_for_antenna_ports(int antenna_ports_value);
int antenna_ports_for_dmrs_port(int dmrs_port);

struct UlGrant {
  Rnti rnti = 0;
  ReRange re_range;
  int mcs = 0;
  int antenna_ports_value = kAntennaPortsSu;
  int harq_id = 0;
  uint64_t slot_index = 0;
  bool is_retx = false;
  bool operator==(const UlGrant&) const = default;
};

struct PuschPdu {
  Rnti rnti = 0;
  ReRange re_range;
  int mcs = 0;
  int dmrs_port = 0;
  bool mu_flag = false;
  Rnti rnti_mu = 0;
  uint64_t slot_index = 0;
  bool operator==(const PuschPdu&) const = default;
};

}  // namespace cflab
